#include "fedrec/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace fedrec {

Ablation parse_ablation(const std::string& name) {
  if (name == "none" || name.empty()) return Ablation::none;
  if (name == "no_proxy") return Ablation::no_proxy;
  if (name == "no_staleness") return Ablation::no_staleness;
  if (name == "no_accuracy") return Ablation::no_accuracy;
  throw ConfigError("unknown ablation '" + name + "' (none | no_proxy | no_staleness | no_accuracy)");
}

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_proxy: return "no_proxy";
    case Ablation::no_staleness: return "no_staleness";
    case Ablation::no_accuracy: return "no_accuracy";
  }
  return "?";
}

double ExperimentConfig::effective_lambda() const {
  if (ablation == Ablation::no_staleness) return 1.0;
  if (ablation == Ablation::no_accuracy) return 0.0;
  return lambda;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& v) {
  using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"version", [](auto&, const auto& x) { if (x != "1") throw ConfigError("unsupported config version " + x); }},
      {"dataset.format", [](auto& c, const auto& x) { c.dataset_format = x; }},
      {"dataset.path", [](auto& c, const auto& x) { c.dataset_path = x; }},
      {"dataset.min_interactions", [](auto& c, const auto& x) { c.min_interactions = to_int<std::size_t>("dataset.min_interactions", x); }},
      {"synthetic.users", [](auto& c, const auto& x) { c.synthetic.users = to_int<std::size_t>("synthetic.users", x); }},
      {"synthetic.items", [](auto& c, const auto& x) { c.synthetic.items = to_int<std::size_t>("synthetic.items", x); }},
      {"synthetic.topics", [](auto& c, const auto& x) { c.synthetic.topics = to_int<std::size_t>("synthetic.topics", x); }},
      {"synthetic.min_activity", [](auto& c, const auto& x) { c.synthetic.min_activity = to_int<std::size_t>("synthetic.min_activity", x); }},
      {"synthetic.max_activity", [](auto& c, const auto& x) { c.synthetic.max_activity = to_int<std::size_t>("synthetic.max_activity", x); }},
      {"synthetic.activity_log_median", [](auto& c, const auto& x) { c.synthetic.activity_log_median = to_double("synthetic.activity_log_median", x); }},
      {"synthetic.seed", [](auto& c, const auto& x) { c.synthetic.seed = to_int<std::uint64_t>("synthetic.seed", x); }},
      {"split.train", [](auto& c, const auto& x) { c.ratios.train = to_double("split.train", x); }},
      {"split.val", [](auto& c, const auto& x) { c.ratios.val = to_double("split.val", x); }},
      {"split.test", [](auto& c, const auto& x) { c.ratios.test = to_double("split.test", x); }},
      {"model.dim", [](auto& c, const auto& x) { c.embed_dim = to_int<int>("model.dim", x); }},
      {"model.hidden", [](auto& c, const auto& x) { c.hidden = to_int<int>("model.hidden", x); }},
      {"fl.clients_per_round", [](auto& c, const auto& x) { c.clients_per_round = to_int<std::size_t>("fl.clients_per_round", x); }},
      {"fl.max_rounds", [](auto& c, const auto& x) { c.max_rounds = to_int<int>("fl.max_rounds", x); }},
      {"fl.patience", [](auto& c, const auto& x) { c.patience = to_int<int>("fl.patience", x); }},
      {"fl.server_lr", [](auto& c, const auto& x) { c.server_lr = to_double("fl.server_lr", x); }},
      {"local.epochs", [](auto& c, const auto& x) { c.local.epochs = to_int<int>("local.epochs", x); }},
      {"local.n_neg", [](auto& c, const auto& x) { c.local.n_neg = to_int<std::size_t>("local.n_neg", x); }},
      {"local.lr", [](auto& c, const auto& x) { c.local.lr = to_double("local.lr", x); }},
      {"local.batch_size", [](auto& c, const auto& x) { c.local.batch_size = to_int<std::size_t>("local.batch_size", x); }},
      {"local.user_lr", [](auto& c, const auto& x) { c.user_lr = to_double("local.user_lr", x); }},
      {"proxy.max_triplets", [](auto& c, const auto& x) { c.proxy_max_triplets = to_int<std::size_t>("proxy.max_triplets", x); }},
      {"proxy.form", [](auto& c, const auto& x) {
         if (x == "pairwise") c.local.proxy_form = ProxyForm::pairwise;
         else if (x == "positive_only") c.local.proxy_form = ProxyForm::positive_only;
         else throw ConfigError("proxy.form: expected pairwise | positive_only");
       }},
      {"ldp.sigma", [](auto& c, const auto& x) { c.ldp.sigma = to_double("ldp.sigma", x); }},
      {"ldp.full_table", [](auto& c, const auto& x) { c.ldp.full_table = to_bool("ldp.full_table", x); }},
      {"ldp.noise_mlp", [](auto& c, const auto& x) { c.ldp.noise_mlp = to_bool("ldp.noise_mlp", x); }},
      {"reward.lambda", [](auto& c, const auto& x) { c.lambda = to_double("reward.lambda", x); }},
      {"reward.metric", [](auto& c, const auto& x) {
         if (x == "hr") c.reward_metric = RewardMetric::hr;
         else if (x == "ndcg") c.reward_metric = RewardMetric::ndcg;
         else throw ConfigError("reward.metric: expected hr | ndcg");
       }},
      {"staleness.window", [](auto& c, const auto& x) { c.staleness_window = to_int<long>("staleness.window", x); }},
      {"eval.k", [](auto& c, const auto& x) { c.eval_k = to_int<std::size_t>("eval.k", x); }},
      {"eval.val_users", [](auto& c, const auto& x) { c.val_users = to_int<std::size_t>("eval.val_users", x); }},
      {"eval.sampled_negatives", [](auto& c, const auto& x) { c.eval_sampled_negatives = to_int<std::size_t>("eval.sampled_negatives", x); }},
      {"selector", [](auto& c, const auto& x) { c.selector.kind = parse_selector(x); }},
      {"selector.powd.d", [](auto& c, const auto& x) { c.selector.powd_pool = to_int<std::size_t>("selector.powd.d", x); }},
      {"selector.kmeans.clusters", [](auto& c, const auto& x) { c.selector.kmeans_clusters = to_int<std::size_t>("selector.kmeans.clusters", x); }},
      {"selector.proxyrl.actor_hidden", [](auto& c, const auto& x) { c.selector.agent.actor_hidden = to_int<int>("selector.proxyrl.actor_hidden", x); }},
      {"selector.proxyrl.critic_hidden", [](auto& c, const auto& x) { c.selector.agent.critic_hidden = to_int<int>("selector.proxyrl.critic_hidden", x); }},
      {"selector.proxyrl.gamma", [](auto& c, const auto& x) { c.selector.agent.gamma = to_double("selector.proxyrl.gamma", x); }},
      {"selector.proxyrl.entropy", [](auto& c, const auto& x) { c.selector.agent.entropy_weight = to_double("selector.proxyrl.entropy", x); }},
      {"selector.proxyrl.actor_lr", [](auto& c, const auto& x) { c.selector.agent.actor_lr = to_double("selector.proxyrl.actor_lr", x); }},
      {"selector.proxyrl.critic_lr", [](auto& c, const auto& x) { c.selector.agent.critic_lr = to_double("selector.proxyrl.critic_lr", x); }},
      {"ablation", [](auto& c, const auto& x) { c.ablation = parse_ablation(x); }},
      {"seed", [](auto& c, const auto& x) { c.seed = to_int<std::uint64_t>("seed", x); }},
      {"output.dir", [](auto& c, const auto& x) { c.output_dir = x; }},
      {"output.checkpoint_every", [](auto& c, const auto& x) { c.checkpoint_every = to_int<int>("output.checkpoint_every", x); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, v);
}

void ExperimentConfig::validate() const {
  if (dataset_format != "synthetic") {
    parse_format(dataset_format);
    if (dataset_path.empty()) throw ConfigError("dataset.path is required for format " + dataset_format);
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("reward.lambda must lie in [0, 1]");
  if (patience < 1) throw ConfigError("fl.patience must be >= 1");
  if (max_rounds < 1) throw ConfigError("fl.max_rounds must be >= 1");
  if (clients_per_round < 1) throw ConfigError("fl.clients_per_round must be >= 1");
  if (embed_dim < 1 || hidden < 1) throw ConfigError("model.dim and model.hidden must be positive");
  if (local.n_neg < 1) throw ConfigError("local.n_neg must be >= 1");
  if (local.epochs < 0) throw ConfigError("local.epochs must be >= 0");
  if (staleness_window < 1) throw ConfigError("staleness.window must be >= 1");
  if (eval_k < 1) throw ConfigError("eval.k must be >= 1");
  if (proxy_max_triplets < 1) throw ConfigError("proxy.max_triplets must be >= 1");
  if (!(ldp.sigma >= 0.0)) throw ConfigError("ldp.sigma must be >= 0");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "version = 1\n";
  os << "dataset.format = " << dataset_format << '\n';
  if (!dataset_path.empty()) os << "dataset.path = " << dataset_path << '\n';
  os << "dataset.min_interactions = " << min_interactions << '\n';
  os << "synthetic.users = " << synthetic.users << '\n';
  os << "synthetic.items = " << synthetic.items << '\n';
  os << "synthetic.topics = " << synthetic.topics << '\n';
  os << "synthetic.min_activity = " << synthetic.min_activity << '\n';
  os << "synthetic.max_activity = " << synthetic.max_activity << '\n';
  os << "synthetic.activity_log_median = " << synthetic.activity_log_median << '\n';
  os << "synthetic.seed = " << synthetic.seed << '\n';
  os << "split.train = " << ratios.train << '\n';
  os << "split.val = " << ratios.val << '\n';
  os << "split.test = " << ratios.test << '\n';
  os << "model.dim = " << embed_dim << '\n';
  os << "model.hidden = " << hidden << '\n';
  os << "fl.clients_per_round = " << clients_per_round << '\n';
  os << "fl.max_rounds = " << max_rounds << '\n';
  os << "fl.patience = " << patience << '\n';
  os << "fl.server_lr = " << server_lr << '\n';
  os << "local.epochs = " << local.epochs << '\n';
  os << "local.n_neg = " << local.n_neg << '\n';
  os << "local.lr = " << local.lr << '\n';
  os << "local.batch_size = " << local.batch_size << '\n';
  os << "local.user_lr = " << user_lr << '\n';
  os << "proxy.max_triplets = " << proxy_max_triplets << '\n';
  os << "proxy.form = " << (local.proxy_form == ProxyForm::pairwise ? "pairwise" : "positive_only") << '\n';
  os << "ldp.sigma = " << ldp.sigma << '\n';
  os << "ldp.full_table = " << (ldp.full_table ? "true" : "false") << '\n';
  os << "ldp.noise_mlp = " << (ldp.noise_mlp ? "true" : "false") << '\n';
  os << "reward.lambda = " << lambda << '\n';
  os << "reward.metric = " << (reward_metric == RewardMetric::hr ? "hr" : "ndcg") << '\n';
  os << "staleness.window = " << staleness_window << '\n';
  os << "eval.k = " << eval_k << '\n';
  os << "eval.val_users = " << val_users << '\n';
  os << "eval.sampled_negatives = " << eval_sampled_negatives << '\n';
  os << "selector = " << selector_name(selector.kind) << '\n';
  os << "selector.powd.d = " << selector.powd_pool << '\n';
  os << "selector.kmeans.clusters = " << selector.kmeans_clusters << '\n';
  os << "selector.proxyrl.actor_hidden = " << selector.agent.actor_hidden << '\n';
  os << "selector.proxyrl.critic_hidden = " << selector.agent.critic_hidden << '\n';
  os << "selector.proxyrl.gamma = " << selector.agent.gamma << '\n';
  os << "selector.proxyrl.entropy = " << selector.agent.entropy_weight << '\n';
  os << "selector.proxyrl.actor_lr = " << selector.agent.actor_lr << '\n';
  os << "selector.proxyrl.critic_lr = " << selector.agent.critic_lr << '\n';
  os << "ablation = " << ablation_name(ablation) << '\n';
  os << "seed = " << seed << '\n';
  if (!output_dir.empty()) os << "output.dir = " << output_dir << '\n';
  os << "output.checkpoint_every = " << checkpoint_every << '\n';
  return os.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    try {
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

}  // namespace fedrec
