#include "fedrec/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedrec {

SelectionState impute_state(std::span<const std::optional<double>> reports) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : reports)
    if (r) {
      sum += *r;
      ++count;
    }
  const double fill = count ? sum / static_cast<double>(count) : 0.0;
  SelectionState s;
  s.losses.reserve(reports.size());
  for (const auto& r : reports) s.losses.push_back(r ? *r : fill);
  return s;
}

Vec normalize_state(const SelectionState& state) {
  const auto n = static_cast<Eigen::Index>(state.losses.size());
  Vec x = Eigen::Map<const Vec>(state.losses.data(), n);
  if (n == 0) return x;
  const double mean = x.mean();
  x.array() -= mean;
  const double sd = std::sqrt(x.squaredNorm() / static_cast<double>(n));
  if (sd > 1e-12) x /= sd;
  else x.setZero();
  return x;
}

SelectionAction select_random(std::size_t n_clients, std::size_t k, Rng& rng) {
  if (k < 1 || k > n_clients) throw ConfigError("select_random: need 1 <= K <= n");
  std::vector<UserId> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_clients - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  return {std::move(ids), std::nullopt};
}

SelectionAction select_powd(const SelectionState& state, std::size_t d_pool, std::size_t k, Rng& rng) {
  const std::size_t n = state.losses.size();
  if (k < 1 || k > d_pool || d_pool > n) throw ConfigError("select_powd: need 1 <= K <= d <= n");
  auto pool = select_random(n, d_pool, rng).chosen;
  std::sort(pool.begin(), pool.end(), [&](UserId a, UserId b) {
    if (state.losses[a] != state.losses[b]) return state.losses[a] > state.losses[b];
    return a < b;
  });
  pool.resize(k);
  return {std::move(pool), std::nullopt};
}

KMeansResult kmeans(const Mat& points, std::size_t n_clusters, Rng& rng, int max_iterations) {
  const auto n = static_cast<std::size_t>(points.cols());
  if (n_clusters < 1 || n_clusters > n) throw ConfigError("kmeans: need 1 <= clusters <= points");
  KMeansResult res;
  auto init = select_random(n, n_clusters, rng).chosen;
  res.centroids.resize(points.rows(), static_cast<Eigen::Index>(n_clusters));
  for (std::size_t c = 0; c < n_clusters; ++c) res.centroids.col(static_cast<Eigen::Index>(c)) = points.col(init[c]);
  res.assignment.assign(n, -1);

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n_clusters; ++c) {
        const double dist = (points.col(static_cast<Eigen::Index>(i)) - res.centroids.col(static_cast<Eigen::Index>(c))).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = static_cast<int>(c);
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    // Refill empty clusters with the point farthest from its centroid.
    std::vector<std::size_t> counts(n_clusters, 0);
    for (int a : res.assignment) ++counts[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < n_clusters; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(res.assignment[i]);
        if (counts[a] <= 1) continue;
        const double dist = (points.col(static_cast<Eigen::Index>(i)) - res.centroids.col(static_cast<Eigen::Index>(a))).squaredNorm();
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(res.assignment[far])];
      res.assignment[far] = static_cast<int>(c);
      counts[c] = 1;
      changed = true;
    }
    res.centroids.setZero();
    for (std::size_t i = 0; i < n; ++i)
      res.centroids.col(res.assignment[i]) += points.col(static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < n_clusters; ++c)
      res.centroids.col(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
    res.iterations = iter + 1;
    if (!changed) break;
  }
  return res;
}

Mat kmeans_features(const SelectionState& state, std::span<const std::size_t> sample_counts) {
  const std::size_t n = state.losses.size();
  if (sample_counts.size() != n) throw DimensionError("kmeans_features: size mismatch");
  Mat f(2, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    f(0, static_cast<Eigen::Index>(i)) = state.losses[i];
    f(1, static_cast<Eigen::Index>(i)) = static_cast<double>(sample_counts[i]);
  }
  for (Eigen::Index r = 0; r < 2; ++r) {
    const double mean = f.row(r).mean();
    f.row(r).array() -= mean;
    const double sd = std::sqrt(f.row(r).squaredNorm() / static_cast<double>(n));
    if (sd > 1e-12) f.row(r) /= sd;
  }
  return f;
}

SelectionAction select_kmeans(const Mat& features, std::size_t n_clusters, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(features.cols());
  if (k < 1 || k > n) throw ConfigError("select_kmeans: need 1 <= K <= n");
  if (n_clusters == 1) return select_random(n, k, rng);
  const auto km = kmeans(features, n_clusters, rng);
  std::vector<std::vector<UserId>> members(n_clusters);
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(km.assignment[i])].push_back(static_cast<UserId>(i));
  std::vector<std::size_t> taken(n_clusters, 0);
  SelectionAction out;
  std::size_t c = 0;
  while (out.chosen.size() < k) {
    auto& m = members[c];
    if (taken[c] < m.size()) {
      std::uniform_int_distribution<std::size_t> pick(taken[c], m.size() - 1);
      std::swap(m[taken[c]], m[pick(rng)]);
      out.chosen.push_back(m[taken[c]]);
      ++taken[c];
    }
    c = (c + 1) % n_clusters;
  }
  return out;
}

// ---------------------------------------------------------------------------

AgentParams AgentParams::xavier(std::size_t n_clients, const AgentConfig& cfg, Rng& rng) {
  if (n_clients < 1) throw ConfigError("agent needs at least one client");
  AgentParams a;
  const auto n = static_cast<Eigen::Index>(n_clients);
  a.actor = Mlp::xavier(n, cfg.actor_hidden, n, rng);
  a.critic = Mlp::xavier(n, cfg.critic_hidden, 1, rng);
  a.actor_adam = AdamState<double>(AdamHyper{.lr = cfg.actor_lr});
  a.critic_adam = AdamState<double>(AdamHyper{.lr = cfg.critic_lr});
  a.gamma = cfg.gamma;
  a.entropy_weight = cfg.entropy_weight;
  return a;
}

Vec softmax(const Eigen::Ref<const Vec>& logits) {
  if (!logits.allFinite()) throw NumericError("softmax: non-finite logits");
  Vec p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

Vec actor_logits(const AgentParams& agent, const SelectionState& state) {
  if (state.losses.size() != static_cast<std::size_t>(agent.actor.input_size()))
    throw DimensionError("actor: state length != number of clients");
  return mlp_predict(agent.actor, normalize_state(state)).col(0);
}

Vec actor_policy(const AgentParams& agent, const SelectionState& state) { return softmax(actor_logits(agent, state)); }

double critic_value(const AgentParams& agent, const SelectionState& state) {
  if (state.losses.size() != static_cast<std::size_t>(agent.critic.input_size()))
    throw DimensionError("critic: state length != number of clients");
  return mlp_predict(agent.critic, normalize_state(state))(0, 0);
}

SelectionAction sample_subset(const Eigen::Ref<const Vec>& probs, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(probs.size());
  std::size_t support = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(probs(static_cast<Eigen::Index>(i)) >= 0.0)) throw NumericError("sample_subset: invalid probability");
    if (probs(static_cast<Eigen::Index>(i)) > 0.0) ++support;
  }
  if (k < 1 || k > support) throw ConfigError("sample_subset: K exceeds the support of the distribution");
  std::vector<double> p(probs.data(), probs.data() + n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SelectionAction out;
  out.log_prob = 0.0;
  double mass = std::accumulate(p.begin(), p.end(), 0.0);
  for (std::size_t draw = 0; draw < k; ++draw) {
    const double target = unit(rng) * mass;
    double acc = 0.0;
    std::size_t pick = n;
    std::size_t last_positive = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] <= 0.0) continue;
      last_positive = i;
      acc += p[i];
      if (target < acc) {
        pick = i;
        break;
      }
    }
    if (pick == n) pick = last_positive;  // rounding at the top of the range
    *out.log_prob += std::log(p[pick] / mass);
    out.chosen.push_back(static_cast<UserId>(pick));
    p[pick] = 0.0;
    mass = std::accumulate(p.begin(), p.end(), 0.0);
  }
  return out;
}

double subset_log_prob(const Eigen::Ref<const Vec>& probs, std::span<const UserId> chosen) {
  std::vector<double> p(probs.data(), probs.data() + probs.size());
  double mass = std::accumulate(p.begin(), p.end(), 0.0);
  double lp = 0.0;
  for (UserId c : chosen) {
    if (c >= p.size() || p[c] <= 0.0) return -std::numeric_limits<double>::infinity();
    lp += std::log(p[c] / mass);
    p[c] = 0.0;
    mass = std::accumulate(p.begin(), p.end(), 0.0);
  }
  return lp;
}

namespace {

/// d log P(chosen) / d logits under sequential renormalization.
Vec log_prob_grad(const Vec& p, std::span<const UserId> chosen) {
  Vec g = Vec::Zero(p.size());
  Vec remaining = p;
  double mass = remaining.sum();
  for (UserId c : chosen) {
    g -= remaining / mass;
    g(c) += 1.0;
    remaining(c) = 0.0;
    mass = remaining.sum();
  }
  return g;
}

double entropy(const Vec& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  return h;
}

}  // namespace

double td_target(const AgentParams& agent, const Transition& tr) {
  const double next = tr.terminal ? 0.0 : critic_value(agent, tr.next_state);
  return tr.reward + agent.gamma * next;
}

double actor_loss(const AgentParams& agent, const Transition& tr, double advantage) {
  const Vec p = actor_policy(agent, tr.state);
  return -(advantage * subset_log_prob(p, tr.action.chosen) + agent.entropy_weight * entropy(p));
}

double critic_loss(const AgentParams& agent, const Transition& tr, double target) {
  const double a = target - critic_value(agent, tr.state);
  return a * a;
}

AgentGradients agent_gradients(const AgentParams& agent, const Transition& tr) {
  if (!std::isfinite(tr.reward)) throw NumericError("agent update: non-finite reward");
  AgentGradients g;
  const Vec s = normalize_state(tr.state);
  if (s.size() != agent.actor.input_size()) throw DimensionError("agent update: state length != number of clients");

  auto critic_fwd = mlp_forward(agent.critic, s);
  const double value = critic_fwd.Y(0, 0);
  const double target = td_target(agent, tr);
  g.advantage = target - value;
  if (!std::isfinite(g.advantage)) throw NumericError("agent update: non-finite advantage");
  g.critic_loss = g.advantage * g.advantage;
  Mat dv(1, 1);
  dv(0, 0) = -2.0 * g.advantage;
  g.critic = mlp_backward(agent.critic, critic_fwd.cache, dv).grads;

  auto actor_fwd = mlp_forward(agent.actor, s);
  const Vec p = softmax(actor_fwd.Y.col(0));
  const double h = entropy(p);
  g.actor_loss = -(g.advantage * subset_log_prob(p, tr.action.chosen) + agent.entropy_weight * h);
  Vec dh(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) dh(i) = p(i) > 0.0 ? -p(i) * (std::log(p(i)) + h) : 0.0;
  const Vec dlogits = -(g.advantage * log_prob_grad(p, tr.action.chosen) + agent.entropy_weight * dh);
  g.actor = mlp_backward(agent.actor, actor_fwd.cache, dlogits).grads;
  return g;
}

AgentLosses agent_update(AgentParams& agent, const Transition& tr) {
  const AgentGradients g = agent_gradients(agent, tr);
  std::vector<ParamSlot<double>> critic_slots, actor_slots;
  append_slots(agent.critic, g.critic, "critic", critic_slots);
  append_slots(agent.actor, g.actor, "actor", actor_slots);
  adam_step(critic_slots, agent.critic_adam);
  adam_step(actor_slots, agent.actor_adam);
  return {g.actor_loss, g.critic_loss, g.advantage};
}

// ---------------------------------------------------------------------------

SelectorKind parse_selector(const std::string& name) {
  if (name == "random") return SelectorKind::random;
  if (name == "powd") return SelectorKind::powd;
  if (name == "kmeans") return SelectorKind::kmeans;
  if (name == "proxyrl") return SelectorKind::proxyrl;
  throw ConfigError("unknown selector '" + name + "' (random | powd | kmeans | proxyrl)");
}

std::string_view selector_name(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::random: return "random";
    case SelectorKind::powd: return "powd";
    case SelectorKind::kmeans: return "kmeans";
    case SelectorKind::proxyrl: return "proxyrl";
  }
  return "?";
}

namespace {

class RandomSelector : public Selector {
 public:
  SelectionAction select(const SelectionContext& ctx, Rng& rng) override {
    return select_random(ctx.state.losses.size(), ctx.k, rng);
  }
  SelectorKind kind() const override { return SelectorKind::random; }
};

class PowDSelector : public Selector {
 public:
  explicit PowDSelector(std::size_t pool) : pool_(pool) {}
  SelectionAction select(const SelectionContext& ctx, Rng& rng) override {
    const std::size_t n = ctx.state.losses.size();
    const std::size_t d = pool_ ? std::min(pool_, n) : std::min(2 * ctx.k, n);
    return select_powd(ctx.state, std::max(d, ctx.k), ctx.k, rng);
  }
  SelectorKind kind() const override { return SelectorKind::powd; }

 private:
  std::size_t pool_;
};

class KMeansSelector : public Selector {
 public:
  explicit KMeansSelector(std::size_t clusters) : clusters_(clusters) {}
  SelectionAction select(const SelectionContext& ctx, Rng& rng) override {
    const Mat f = kmeans_features(ctx.state, ctx.sample_counts);
    return select_kmeans(f, std::min(clusters_, ctx.state.losses.size()), ctx.k, rng);
  }
  SelectorKind kind() const override { return SelectorKind::kmeans; }

 private:
  std::size_t clusters_;
};

}  // namespace

SelectionAction ProxyRlSelector::select(const SelectionContext& ctx, Rng& rng) {
  return sample_subset(actor_policy(agent_, ctx.state), ctx.k, rng);
}

std::optional<AgentLosses> ProxyRlSelector::observe(const Transition& tr) { return agent_update(agent_, tr); }

std::unique_ptr<Selector> make_selector(const SelectorConfig& cfg, std::size_t n_clients, Rng& init_rng) {
  switch (cfg.kind) {
    case SelectorKind::random: return std::make_unique<RandomSelector>();
    case SelectorKind::powd: return std::make_unique<PowDSelector>(cfg.powd_pool);
    case SelectorKind::kmeans: return std::make_unique<KMeansSelector>(cfg.kmeans_clusters);
    case SelectorKind::proxyrl:
      return std::make_unique<ProxyRlSelector>(AgentParams::xavier(n_clients, cfg.agent, init_rng));
  }
  throw ConfigError("unknown selector kind");
}

}  // namespace fedrec
