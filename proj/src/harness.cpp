#include "fedrec/harness.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "fedrec/synthetic.hpp"
#include "fedrec/wire.hpp"

namespace fedrec {

namespace fs = std::filesystem;

InteractionDataset load_dataset(const ExperimentConfig& cfg) {
  InteractionDataset ds = cfg.dataset_format == "synthetic"
                              ? make_synthetic(cfg.synthetic)
                              : load_interactions(cfg.dataset_path, parse_format(cfg.dataset_format));
  return filter_min_interactions(ds, cfg.min_interactions);
}

// ---------------------------------------------------------------------------
// rounds.csv

const char* const kRoundsHeader =
    "round,selected,reward,accuracy,staleness,val_hr,val_ndcg,test_hr,test_ndcg,unique_clients,"
    "bytes_up,bytes_down,actor_loss,critic_loss,contrib_ms,wall_ms";

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : std::string(); }

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

std::string format_round(const RoundLog& log) {
  std::ostringstream os;
  os << log.round << ',';
  for (std::size_t i = 0; i < log.selected.size(); ++i) os << (i ? " " : "") << log.selected[i];
  os << ',' << num(log.reward) << ',' << num(log.accuracy) << ',' << num(log.staleness) << ',' << num(log.val_hr)
     << ',' << num(log.val_ndcg) << ',' << opt_num(log.test_hr) << ',' << opt_num(log.test_ndcg) << ','
     << log.unique_clients << ',' << log.bytes_up << ',' << log.bytes_down << ','
     << (log.agent ? num(log.agent->actor) : "") << ',' << (log.agent ? num(log.agent->critic) : "") << ','
     << num(log.contrib_ms) << ',' << num(log.wall_ms);
  return os.str();
}

std::vector<RoundLog> read_rounds_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kRoundsHeader) throw ParseError(1, "unexpected rounds.csv header");
  std::vector<RoundLog> logs;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != 16) throw ParseError(line_no, "expected 16 fields");
    try {
      RoundLog r;
      r.round = std::stoi(f[0]);
      std::istringstream ids(f[1]);
      for (UserId u; ids >> u;) r.selected.push_back(u);
      r.reward = std::stod(f[2]);
      r.accuracy = std::stod(f[3]);
      r.staleness = std::stod(f[4]);
      r.val_hr = std::stod(f[5]);
      r.val_ndcg = std::stod(f[6]);
      r.test_hr = parse_opt(f[7]);
      r.test_ndcg = parse_opt(f[8]);
      r.unique_clients = std::stoul(f[9]);
      r.bytes_up = std::stoul(f[10]);
      r.bytes_down = std::stoul(f[11]);
      if (!f[12].empty()) r.agent = AgentLosses{std::stod(f[12]), std::stod(f[13]), 0.0};
      r.contrib_ms = std::stod(f[14]);
      r.wall_ms = std::stod(f[15]);
      logs.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return logs;
}

// ---------------------------------------------------------------------------

EarlyStopping::EarlyStopping(int patience, int max_rounds)
    : patience_(patience), max_rounds_(max_rounds), best_(-std::numeric_limits<double>::infinity()) {
  if (patience < 1 || max_rounds < 1) throw ConfigError("patience and max_rounds must be >= 1");
}

bool EarlyStopping::update(double metric) {
  ++rounds_;
  last_improved_ = metric > best_;
  if (last_improved_) {
    best_ = metric;
    best_round_ = rounds_;
    bad_ = 0;
  } else {
    ++bad_;
  }
  return bad_ >= patience_ || rounds_ >= max_rounds_;
}

// ---------------------------------------------------------------------------

Simulation::Simulation(const ExperimentConfig& cfg)
    : Simulation(cfg, split_dataset(load_dataset(cfg), cfg.ratios, cfg.seed)) {}

Simulation::Simulation(const ExperimentConfig& cfg, SplitDataset split) : cfg_(cfg), split_(std::move(split)) {
  cfg_.validate();
  const std::size_t n = split_.num_users();
  if (cfg_.clients_per_round > n) throw ConfigError("fl.clients_per_round exceeds the number of clients");

  Rng init = derive_stream(cfg_.seed, "init");
  global_ = GlobalModel::xavier(split_.num_items(), cfg_.embed_dim, cfg_.hidden, init);
  global_.server_lr = cfg_.server_lr;
  const Mat users = xavier_init<double>(static_cast<Eigen::Index>(n), cfg_.embed_dim, init);
  clients_.reserve(n);
  for (UserId u = 0; u < n; ++u) {
    clients_.push_back(make_client(u, split_, users.row(u).transpose(), cfg_.user_lr, cfg_.seed));
    sample_counts_.push_back(clients_.back().sample_count());
  }
  tracker_ = StalenessTracker(split_.num_items(), cfg_.staleness_window);

  Rng sel_init = derive_stream(cfg_.seed, "selector-init");
  selector_ = make_selector(cfg_.selector, n, sel_init);
  selector_rng_ = derive_stream(cfg_.seed, "selector");

  std::vector<UserId> candidates;
  for (UserId u = 0; u < n; ++u)
    if (!split_.val.items_of(u).empty()) candidates.push_back(u);
  if (cfg_.val_users > 0 && cfg_.val_users < candidates.size()) {
    Rng vr = derive_stream(cfg_.seed, "val-users");
    for (std::size_t i = 0; i < cfg_.val_users; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
      std::swap(candidates[i], candidates[pick(vr)]);
    }
    candidates.resize(cfg_.val_users);
    std::sort(candidates.begin(), candidates.end());
  }
  val_users_ = std::move(candidates);
  selection_counts_.assign(n, 0);
}

SelectionState Simulation::contribution_state(int round) {
  const std::size_t n = clients_.size();
  std::vector<std::optional<double>> reports(n);
  LocalTrainConfig lc = cfg_.local;
  lc.round = round;
  for (UserId u = 0; u < n; ++u) {
    Rng rng = derive_stream(cfg_.seed, "contrib", static_cast<std::uint64_t>(round) * n + u);
    try {
      if (cfg_.uses_proxy()) {
        reports[u] = predict_contribution(clients_[u], global_, cfg_.local.n_neg, cfg_.proxy_max_triplets, rng,
                                          cfg_.local.proxy_form)
                         .predicted_loss;
      } else {
        reports[u] = pre_round_training_loss(clients_[u], global_, lc, rng);
      }
    } catch (const SkipClient&) {
    } catch (const NoNegativesError&) {
    }
  }
  return impute_state(reports);
}

RoundLog Simulation::step() {
  const auto t0 = std::chrono::steady_clock::now();
  RoundLog log;
  log.round = global_.round + 1;
  const std::size_t n = clients_.size();

  const auto tc = std::chrono::steady_clock::now();
  SelectionState state = contribution_state(log.round);
  log.contrib_ms = elapsed_ms(tc);

  if (pending_) {
    pending_->next_state = state;
    log.agent = selector_->observe(*pending_);
    pending_.reset();
  }

  SelectionAction action = selector_->select(SelectionContext{state, sample_counts_, cfg_.clients_per_round},
                                             selector_rng_);
  log.selected = action.chosen;

  LocalTrainConfig lc = cfg_.local;
  lc.round = log.round;
  const bool ldp = cfg_.ldp.sigma > 0.0 || cfg_.ldp.full_table;
  std::vector<LocalUpdate> updates;
  updates.reserve(action.chosen.size());
  for (UserId u : action.chosen) {
    ClientState& c = clients_[u];
    if (c.train_items.empty()) continue;
    LocalUpdate up = local_train(c, global_, lc, c.rng);
    if (ldp) {
      Rng lr = derive_stream(cfg_.seed, "ldp", static_cast<std::uint64_t>(log.round) * n + u);
      up = apply_ldp(up, cfg_.ldp, global_.num_items(), lr);
    }
    log.bytes_up += encoded_update_size(up);
    updates.push_back(std::move(up));
  }
  log.bytes_up += n * kReportWireSize;
  log.bytes_down = n * global_.snapshot_bytes();

  aggregate(global_, updates);
  if (!global_.all_finite()) throw NumericError("global model became non-finite in round " + std::to_string(log.round));
  update_staleness(tracker_, touched_union(updates, cfg_.ldp.sigma));
  log.staleness = staleness_value(tracker_);

  EvalOptions eo;
  eo.k = cfg_.eval_k;
  eo.split = EvalSplit::val;
  eo.sampled_negatives = cfg_.eval_sampled_negatives;
  eo.seed = cfg_.seed;
  const EvalReport val = evaluate(global_, clients_, split_, val_users_, eo);
  log.val_hr = val.hr;
  log.val_ndcg = val.ndcg;
  log.accuracy = cfg_.reward_metric == RewardMetric::hr ? val.hr : val.ndcg;
  log.reward = compute_reward(log.accuracy, log.staleness, cfg_.effective_lambda());

  for (UserId u : action.chosen) {
    if (selection_counts_[u]++ == 0) ++unique_;
  }
  log.unique_clients = unique_;

  if (selector_->learns()) pending_ = Transition{std::move(state), std::move(action), log.reward, {}, false};
  log.wall_ms = elapsed_ms(t0);
  return log;
}

void Simulation::finish() {
  if (!pending_) return;
  pending_->next_state = pending_->state;
  pending_->terminal = true;
  selector_->observe(*pending_);
  pending_.reset();
}

EvalReport Simulation::evaluate_full(EvalSplit which) const {
  EvalOptions eo;
  eo.k = cfg_.eval_k;
  eo.split = which;
  eo.sampled_negatives = cfg_.eval_sampled_negatives;
  eo.seed = cfg_.seed;
  return evaluate(global_, clients_, split_, {}, eo);
}

Mat Simulation::user_table() const {
  Mat users(static_cast<Eigen::Index>(clients_.size()), global_.embed_dim());
  for (std::size_t u = 0; u < clients_.size(); ++u) users.row(static_cast<Eigen::Index>(u)) = clients_[u].user_embedding.transpose();
  return users;
}

void Simulation::set_user_table(const Mat& users) {
  if (users.rows() != static_cast<Eigen::Index>(clients_.size()) || users.cols() != global_.embed_dim())
    throw DimensionError("user table shape does not match the simulation");
  for (std::size_t u = 0; u < clients_.size(); ++u) clients_[u].user_embedding = users.row(static_cast<Eigen::Index>(u)).transpose();
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& dir, const Simulation& sim) {
  fs::create_directories(dir);
  TensorMap t;
  sim.global().to_tensors(t);
  t["users"] = sim.user_table();
  const auto& tau = sim.tracker().tau;
  Mat tau_m(static_cast<Eigen::Index>(tau.size()), 1);
  for (std::size_t i = 0; i < tau.size(); ++i) tau_m(static_cast<Eigen::Index>(i), 0) = static_cast<double>(tau[i]);
  t["tau"] = tau_m;
  save_tensors((fs::path(dir) / "model.txt").string(), t);
  std::ofstream(fs::path(dir) / "config.txt") << sim.config().to_text();
}

Checkpoint load_checkpoint(const std::string& dir) {
  Checkpoint c;
  c.config = ExperimentConfig::load((fs::path(dir) / "config.txt").string());
  const TensorMap t = load_tensors((fs::path(dir) / "model.txt").string());
  c.model = GlobalModel::from_tensors(t);
  auto it = t.find("users");
  if (it == t.end()) throw ParseError(0, "checkpoint has no users tensor");
  c.users = it->second;
  if (auto tt = t.find("tau"); tt != t.end())
    for (Eigen::Index i = 0; i < tt->second.rows(); ++i) c.tau.push_back(static_cast<long>(tt->second(i, 0)));
  return c;
}

// ---------------------------------------------------------------------------

namespace {

void write_summary(const std::string& path, const ExperimentConfig& cfg, const ExperimentResult& r) {
  std::ofstream os(path);
  os << "selector " << selector_name(cfg.selector.kind) << '\n';
  os << "ablation " << ablation_name(cfg.ablation) << '\n';
  os << "lambda " << num(cfg.effective_lambda()) << '\n';
  os << "seed " << cfg.seed << '\n';
  os << "clients_per_round " << cfg.clients_per_round << '\n';
  os << "rounds " << r.rounds.size() << '\n';
  os << "early_stopped " << (r.early_stopped ? 1 : 0) << '\n';
  os << "best_round " << r.best_round << '\n';
  os << "best_val_subsample_hr " << num(r.best_val) << '\n';
  os << "val_hr " << num(r.val.hr) << '\n';
  os << "val_ndcg " << num(r.val.ndcg) << '\n';
  os << "test_hr " << num(r.test.hr) << '\n';
  os << "test_ndcg " << num(r.test.ndcg) << '\n';
  os << "unique_clients " << r.unique_clients << '\n';
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::function<void(const RoundLog&)>& on_round) {
  Simulation sim(cfg);
  EarlyStopping stop(cfg.patience, cfg.max_rounds);
  const bool write = !cfg.output_dir.empty();
  const fs::path out(cfg.output_dir);
  std::ofstream csv;
  if (write) {
    fs::create_directories(out);
    csv.open(out / "rounds.csv");
    csv << kRoundsHeader << '\n';
    std::ofstream(out / "config.txt") << cfg.to_text();
  }

  ExperimentResult res;
  GlobalModel best_model = sim.global();
  Mat best_users = sim.user_table();
  for (;;) {
    RoundLog log = sim.step();
    if (cfg.checkpoint_every > 0 && log.round % cfg.checkpoint_every == 0) {
      const EvalReport test = sim.evaluate_full(EvalSplit::test);
      log.test_hr = test.hr;
      log.test_ndcg = test.ndcg;
      if (write) {
        char name[32];
        std::snprintf(name, sizeof name, "round_%04d", log.round);
        save_checkpoint((out / "checkpoints" / name).string(), sim);
      }
    }
    if (write) csv << format_round(log) << '\n' << std::flush;
    if (on_round) on_round(log);
    const bool done = stop.update(log.val_hr);
    res.rounds.push_back(std::move(log));
    if (stop.improved()) {
      best_model = sim.global();
      best_users = sim.user_table();
      if (write) save_checkpoint((out / "checkpoints" / "best").string(), sim);
    }
    if (done) {
      res.early_stopped = stop.rounds() < cfg.max_rounds;
      break;
    }
  }
  sim.finish();

  res.best_round = stop.best_round();
  res.best_val = stop.best();
  res.unique_clients = static_cast<std::size_t>(
      std::count_if(sim.selection_counts().begin(), sim.selection_counts().end(), [](std::size_t c) { return c > 0; }));
  res.selection_counts = sim.selection_counts();
  sim.global() = best_model;
  sim.set_user_table(best_users);
  res.val = sim.evaluate_full(EvalSplit::val);
  res.test = sim.evaluate_full(EvalSplit::test);
  if (write) write_summary((out / "summary.txt").string(), cfg, res);
  return res;
}

// ---------------------------------------------------------------------------

SelectionBias selection_bias(const std::vector<RoundLog>& logs, std::size_t num_clients) {
  SelectionBias b;
  b.rounds = logs.size();
  std::size_t n = num_clients;
  for (const auto& l : logs)
    for (UserId u : l.selected) n = std::max<std::size_t>(n, u + 1);
  b.counts.assign(n, 0);
  for (const auto& l : logs)
    for (UserId u : l.selected) ++b.counts[u];
  b.unique_clients = static_cast<std::size_t>(std::count_if(b.counts.begin(), b.counts.end(), [](auto c) { return c > 0; }));
  return b;
}

void write_bias_csv(const std::string& path, const SelectionBias& bias) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "client,count\n";
  for (std::size_t u = 0; u < bias.counts.size(); ++u) os << u << ',' << bias.counts[u] << '\n';
}

}  // namespace fedrec
