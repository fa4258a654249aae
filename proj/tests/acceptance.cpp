// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [name ...]   (no names runs everything)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fd.hpp"
#include "fedrec/harness.hpp"

using namespace fedrec;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// gradient correctness

constexpr double kKink = 1e-3;

bool near_kink(const Mlp& m, const Mat& X) { return (mlp_forward(m, X).cache.Z1.array().abs() < kKink).any(); }

double check_mlp(Mlp& params, const Mlp& grads, const std::function<double()>& f) {
  double worst = 0.0;
  const double* g[4] = {grads.W1.data(), grads.b1.data(), grads.W2.data(), grads.b2.data()};
  int slot = 0;
  params.for_each_tensor([&](const char*, double* p, Eigen::Index n) {
    worst = std::max(worst, fdcheck::check(p, g[slot++], n, f).max_rel);
  });
  return worst;
}

double client_instance(Rng& rng, int& resampled) {
  std::uniform_int_distribution<int> dd(2, 8), hh(2, 12), nn(5, 30), tt(1, 12), form(0, 1);
  for (;;) {
    const int d = dd(rng), h = hh(rng), n_items = nn(rng), n_trip = tt(rng);
    ProxyNcfParams params = ProxyNcfParams::xavier(d, h, rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Mlp* m : {&params.ncf, &params.proxy}) {
      for (Eigen::Index i = 0; i < m->b1.size(); ++i) m->b1(i) = 0.3 * u(rng);
      m->b2(0) = 0.3 * u(rng);
    }
    Vec user(d);
    for (auto& x : user) x = u(rng);
    ItemTable items(n_items, d);
    for (Eigen::Index i = 0; i < items.size(); ++i) items.data()[i] = u(rng);
    std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(n_items - 1));
    std::vector<Triplet> trip;
    for (int t = 0; t < n_trip; ++t) {
      const ItemId p = pick(rng);
      ItemId q = pick(rng);
      while (q == p) q = pick(rng);
      trip.push_back({0, p, q});
    }
    Mat X(2 * d, 2 * n_trip);
    for (int t = 0; t < n_trip; ++t) {
      X.col(2 * t) << user, items.row(trip[t].pos_item).transpose();
      X.col(2 * t + 1) << user, items.row(trip[t].neg_item).transpose();
    }
    if (near_kink(params.ncf, X) || near_kink(params.proxy, X)) {
      ++resampled;
      continue;
    }
    const ProxyForm pf = form(rng) ? ProxyForm::pairwise : ProxyForm::positive_only;
    const auto g = client_backward(params, user, items, trip, pf);
    auto ncf = [&] { return client_losses(params, user, items, trip, pf).ncf; };
    auto prx = [&] { return client_losses(params, user, items, trip, pf).proxy; };
    double worst = fdcheck::check(user.data(), g.user.data(), d, ncf).max_rel;
    for (const auto& [item, grad] : g.items) {
      Vec row = items.row(item).transpose();
      worst = std::max(worst, fdcheck::check(row.data(), grad.data(), d, [&] {
                                items.row(item) = row.transpose();
                                return ncf();
                              }).max_rel);
      items.row(item) = row.transpose();
    }
    worst = std::max(worst, check_mlp(params.ncf, g.ncf, ncf));
    worst = std::max(worst, check_mlp(params.proxy, g.proxy, prx));
    return worst;
  }
}

double agent_instance(Rng& rng, int& resampled) {
  std::uniform_int_distribution<int> nn(3, 24), hh(2, 16);
  std::lognormal_distribution<double> loss(3.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const int n = nn(rng);
    AgentConfig cfg;
    cfg.actor_hidden = hh(rng);
    cfg.critic_hidden = hh(rng);
    cfg.entropy_weight = 0.05 * (u(rng) + 1.0);
    AgentParams a = AgentParams::xavier(static_cast<std::size_t>(n), cfg, rng);
    for (Mlp* m : {&a.actor, &a.critic})
      for (Eigen::Index i = 0; i < m->b1.size(); ++i) m->b1(i) = 0.3 * u(rng);
    Transition tr;
    for (int i = 0; i < n; ++i) {
      tr.state.losses.push_back(loss(rng));
      tr.next_state.losses.push_back(loss(rng));
    }
    tr.reward = u(rng);
    tr.terminal = u(rng) > 0.8;
    const Vec s = normalize_state(tr.state);
    if (near_kink(a.actor, s) || near_kink(a.critic, s)) {
      ++resampled;
      continue;
    }
    std::uniform_int_distribution<int> kk(1, n);
    tr.action = sample_subset(actor_policy(a, tr.state), static_cast<std::size_t>(kk(rng)), rng);
    const auto g = agent_gradients(a, tr);
    const double adv = g.advantage, target = td_target(a, tr);
    double worst = check_mlp(a.actor, g.actor, [&] { return actor_loss(a, tr, adv); });
    worst = std::max(worst, check_mlp(a.critic, g.critic, [&] { return critic_loss(a, tr, target); }));
    return worst;
  }
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240601);
  int resampled = 0;
  double worst_client = 0.0, worst_agent = 0.0;
  for (int i = 0; i < 100; ++i) worst_client = std::max(worst_client, client_instance(rng, resampled));
  for (int i = 0; i < 100; ++i) worst_agent = std::max(worst_agent, agent_instance(rng, resampled));
  const double secs = seconds_since(t0);
  return {worst_client < 1e-4 && worst_agent < 1e-4 && secs < 60.0,
          fmt("max rel err client %.2e, agent %.2e (tol 1e-4); %d kink resamples; %.1f s (limit 60 s)", worst_client,
              worst_agent, resampled, secs)};
}

// ---------------------------------------------------------------------------
// aggregation oracle

Outcome aggregation_oracle() {
  Rng rng(8);
  const std::size_t U = 8, V = 50;
  const int d = 4, h = 6;
  GlobalModel g = GlobalModel::xavier(V, d, h, rng);
  std::vector<LocalUpdate> ups;
  std::vector<Mat> dense_rows;
  std::uniform_int_distribution<std::size_t> cnt(1, 100);
  std::bernoulli_distribution touch(0.25);
  std::uniform_real_distribution<double> u(-1, 1);
  for (UserId k = 0; k < U; ++k) {
    LocalUpdate up;
    up.user_id = k;
    up.sample_count = cnt(rng);
    Mat dense = Mat::Zero(V, d);
    for (ItemId i = 0; i < V; ++i)
      if (touch(rng)) {
        Vec r(d);
        for (auto& x : r) x = u(rng);
        up.delta_rows.emplace(i, r);
        up.touched_items.push_back(i);
        dense.row(i) = r.transpose();
      }
    up.delta_ncf = Mlp::xavier(2 * d, h, 1, rng);
    up.delta_proxy = Mlp::xavier(2 * d, h, 1, rng);
    ups.push_back(up);
    dense_rows.push_back(dense);
  }
  // brute force: dense weighted average of deltas, loops only
  double total = 0;
  for (const auto& up : ups) total += static_cast<double>(up.sample_count);
  Mat items = g.items;
  Mlp ncf = g.params.ncf, proxy = g.params.proxy;
  for (std::size_t k = 0; k < U; ++k) {
    const double w = static_cast<double>(ups[k].sample_count) / total;
    for (Eigen::Index i = 0; i < items.rows(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) items(i, j) += w * dense_rows[k](i, j);
    ncf.axpy(w, ups[k].delta_ncf);
    proxy.axpy(w, ups[k].delta_proxy);
  }
  GlobalModel out = g;
  aggregate(out, ups);
  double err = (Mat(out.items) - items).cwiseAbs().maxCoeff();
  const Mlp dn = out.params.ncf - ncf, dp = out.params.proxy - proxy;
  for (const Mlp* m : {&dn, &dp})
    err = std::max({err, m->W1.cwiseAbs().maxCoeff(), m->b1.cwiseAbs().maxCoeff(), m->W2.cwiseAbs().maxCoeff(),
                    m->b2.cwiseAbs().maxCoeff()});
  int invariant = 0;
  for (int s = 0; s < 20; ++s) {
    std::shuffle(ups.begin(), ups.end(), rng);
    GlobalModel again = g;
    aggregate(again, ups);
    invariant += again.items == out.items && again.params.ncf == out.params.ncf && again.params.proxy == out.params.proxy;
  }
  return {err <= 1e-12 && invariant == 20,
          fmt("max |aggregate - dense oracle| = %.2e (tol 1e-12); identical under %d/20 shuffles", err, invariant)};
}

// ---------------------------------------------------------------------------
// staleness and reward

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

Outcome staleness_reward() {
  int failed = 0, total = 0;
  auto expect = [&](bool ok) {
    ++total;
    failed += !ok;
  };
  StalenessTracker t(4, 10);
  update_staleness(t, std::vector<ItemId>{0});
  update_staleness(t, std::vector<ItemId>{0, 1});
  update_staleness(t, std::vector<ItemId>{});
  expect(t.tau == std::vector<long>{1, 1, 3, 3});
  StalenessTracker z(5, 10);
  expect(staleness_value(z) == 0.0);
  z.tau.assign(5, 10);
  expect(staleness_value(z) == 1.0);
  StalenessTracker m(4, 10);
  m.tau = {0, 1, 2, 3};
  expect(staleness_value(m) == 0.15);
  StalenessTracker e(3, 10);
  update_staleness(e, std::vector<ItemId>{});
  update_staleness(e, std::vector<ItemId>{});
  expect(e.tau == std::vector<long>(3, 2));
  StalenessTracker all(3, 10);
  update_staleness(all, std::vector<ItemId>{0, 1, 2});
  expect(staleness_value(all) == 0.0);
  m.tau = {25, 25, 25, 25};
  expect(staleness_value(m) == 2.5);

  expect(compute_reward(0.45, 0.15, 0.6) == 0.6 * 0.45 - 0.4 * 0.15);
  expect(std::abs(compute_reward(0.45, 0.15, 0.6) - 0.21) < 1e-15);
  Rng rng(17);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  int bitwise = 0;
  const int n_id = 10000;
  for (int i = 0; i < n_id; ++i) {
    const double acc = i == 0 ? 0.0 : u(rng), st = i == 0 ? 0.0 : u(rng);
    bitwise += same_bits(compute_reward(acc, st, 1.0), acc) && same_bits(compute_reward(acc, st, 0.0), -st);
  }
  expect(bitwise == n_id);
  return {failed == 0, fmt("%d/%d hand cases exact; ablation identities bitwise in %d/%d draws", total - failed, total,
                           bitwise, n_id)};
}

// ---------------------------------------------------------------------------
// experiments

ExperimentConfig base_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  return c;
}

Outcome proxy_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> rho, rho_mean;
  for (std::uint64_t seed : {1, 2, 3}) {
    ExperimentConfig cfg = base_config(seed);
    Simulation sim(cfg);
    for (int r = 0; r < 20; ++r) sim.step();
    const int round = sim.global().round + 1;
    const SelectionState reported = sim.contribution_state(round);
    std::vector<double> truth, rep_mean, truth_mean;
    const std::size_t n = sim.clients().size();
    for (UserId u = 0; u < n; ++u) {
      Rng rng = derive_stream(seed, "true-loss", u);
      const auto& c = sim.clients()[u];
      truth.push_back(true_loss(c, sim.global(), cfg.local.n_neg, rng));
      const double per = static_cast<double>(c.train_items.size() * cfg.local.n_neg);
      truth_mean.push_back(truth.back() / per);
      rep_mean.push_back(reported.losses[u] / per);
    }
    rho.push_back(spearman(reported.losses, truth));
    rho_mean.push_back(spearman(rep_mean, truth_mean));
  }
  const double med = median(rho), secs = seconds_since(t0);
  return {med >= 0.5 && secs < 900.0,
          fmt("Spearman per seed %.3f %.3f %.3f, median %.3f (need >= 0.5); per-triplet means median %.3f; %.0f s",
              rho[0], rho[1], rho[2], med, median(rho_mean), secs)};
}

Outcome efficiency() {
  std::vector<double> proxy_ms, full_ms;
  for (Ablation mode : {Ablation::none, Ablation::no_proxy}) {
    ExperimentConfig cfg = base_config(1);
    cfg.ablation = mode;
    Simulation sim(cfg);
    for (int r = 0; r < 10; ++r) (mode == Ablation::none ? proxy_ms : full_ms).push_back(sim.step().contrib_ms);
  }
  const double p = median(proxy_ms), f = median(full_ms);
  return {f >= 1.5 * p, fmt("median contribution evaluation: proxy %.1f ms, pre-round training %.1f ms, ratio %.2fx "
                            "(need >= 1.5x)", p, f, f / p)};
}

struct RunSummary {
  double test_hr = 0.0;
  std::size_t unique = 0;
  int rounds = 0;
};

RunSummary run(ExperimentConfig cfg) {
  const auto r = run_experiment(cfg);
  return {r.test.hr, r.unique_clients, static_cast<int>(r.rounds.size())};
}

Outcome selection_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  int beat_random = 0, beat_powd = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunSummary res[3];
    int i = 0;
    for (SelectorKind k : {SelectorKind::proxyrl, SelectorKind::random, SelectorKind::powd}) {
      ExperimentConfig cfg = base_config(seed);
      cfg.selector.kind = k;
      cfg.clients_per_round = 50;
      cfg.max_rounds = 100;
      res[i++] = run(cfg);
    }
    beat_random += res[0].test_hr >= res[1].test_hr;
    beat_powd += res[0].test_hr >= res[2].test_hr;
    per_seed += fmt(" [seed %d: proxyrl %.4f (%d r), random %.4f (%d r), powd %.4f (%d r)]", static_cast<int>(seed),
                    res[0].test_hr, res[0].rounds, res[1].test_hr, res[1].rounds, res[2].test_hr, res[2].rounds);
  }
  const double secs = seconds_since(t0);
  return {beat_random >= 4 && beat_powd >= 3 && secs < 7200.0,
          fmt("test HR@20 proxyrl >= random in %d/5 (need 4), >= powd in %d/5 (need 3); %.0f s;", beat_random,
              beat_powd, secs) + per_seed};
}

Outcome coverage() {
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::size_t unique[2];
    int i = 0;
    for (double lambda : {0.6, 1.0}) {
      ExperimentConfig cfg = base_config(seed);
      cfg.lambda = lambda;
      cfg.max_rounds = 30;
      cfg.patience = 1000;
      unique[i++] = run(cfg).unique;
    }
    wins += unique[0] >= unique[1];
    per_seed += fmt(" [seed %d: %zu vs %zu]", static_cast<int>(seed), unique[0], unique[1]);
  }
  return {wins >= 4, fmt("unique clients lambda=0.6 >= lambda=1 in %d/5 paired runs (need 4);", wins) + per_seed};
}

std::string without_timing(const fs::path& csv) {
  std::ifstream is(csv);
  std::string line, out;
  while (std::getline(is, line)) {
    for (int cut = 0; cut < 2; ++cut) line = line.substr(0, line.rfind(','));
    out += line + '\n';
  }
  return out;
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "fedrec_acceptance_det";
  fs::remove_all(base);
  std::string csv[2];
  for (int i = 0; i < 2; ++i) {
    ExperimentConfig cfg = base_config(42);
    cfg.max_rounds = 8;
    cfg.output_dir = (base / std::to_string(i)).string();
    run_experiment(cfg);
    csv[i] = without_timing(base / std::to_string(i) / "rounds.csv");
  }
  const bool same = !csv[0].empty() && csv[0] == csv[1];
  const auto lines = std::count(csv[0].begin(), csv[0].end(), '\n');
  fs::remove_all(base);
  return {same, fmt("rounds.csv without timing columns %s across two runs (%ld lines)",
                    same ? "byte-identical" : "DIFFERS", static_cast<long>(lines))};
}

Outcome convergence_rule() {
  struct Case {
    std::vector<double> curve;
    int patience, max_rounds, expect_stop;
  };
  std::vector<Case> cases = {
      {{0.5, 0.5, 0.4, 0.3}, 1, 100, 2},
      {{0.1, 0.2, 0.3, 0.3, 0.29, 0.3, 0.25, 0.2, 0.9}, 5, 100, 8},
      {{0.1, 0.2, 0.3, 0.4, 0.5}, 5, 3, 3},
  };
  std::vector<double> rising(150);
  for (int i = 0; i < 150; ++i) rising[i] = i;
  cases.push_back({rising, 5, 100, 100});
  std::vector<double> plateau(150, 0.2);
  plateau[0] = 0.1;
  cases.push_back({plateau, 5, 100, 7});
  int ok = 0;
  std::string trace;
  for (const auto& c : cases) {
    EarlyStopping stop(c.patience, c.max_rounds);
    int at = -1;
    for (double v : c.curve)
      if (stop.update(v)) {
        at = stop.rounds();
        break;
      }
    ok += at == c.expect_stop;
    trace += fmt(" %d/%d", at, c.expect_stop);
  }
  // end to end: the loop honours the cap
  ExperimentConfig cfg = base_config(3);
  cfg.synthetic.users = 80;
  cfg.synthetic.items = 200;
  cfg.synthetic.max_activity = 60;
  cfg.synthetic.activity_log_median = 3.3;
  cfg.clients_per_round = 5;
  cfg.max_rounds = 100;
  cfg.patience = 1000;
  const auto r = run_experiment(cfg);
  const bool capped = r.rounds.size() == 100 && !r.early_stopped && ExperimentConfig{}.max_rounds == 100 &&
                      ExperimentConfig{}.patience == 5;
  return {ok == static_cast<int>(cases.size()) && capped,
          fmt("%d/%zu traces stop at the expected round (got/expected:%s); full loop ran %zu rounds with cap 100",
              ok, cases.size(), trace.c_str(), r.rounds.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-correctness", gradient_correctness},
      {"aggregation-oracle", aggregation_oracle},
      {"staleness-reward", staleness_reward},
      {"proxy-fidelity", proxy_fidelity},
      {"efficiency-direction", efficiency},
      {"selection-quality", selection_quality},
      {"coverage-direction", coverage},
      {"determinism", determinism},
      {"convergence-rule", convergence_rule},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
