#pragma once

// Client selection strategies. All selectors return K distinct client ids.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedrec/data.hpp"
#include "fedrec/numkernel.hpp"
#include "fedrec/proxyncf.hpp"

namespace fedrec {

/// One loss estimate per client, indexed by user id.
struct SelectionState {
  std::vector<double> losses;
};

struct SelectionAction {
  std::vector<UserId> chosen;
  std::optional<double> log_prob;  // set by the policy sampler only
};

/// Fills missing reports with the mean of the reported ones (0 if none reported).
SelectionState impute_state(std::span<const std::optional<double>> reports);

/// Per-round z-score; a constant state maps to zeros.
Vec normalize_state(const SelectionState& state);

SelectionAction select_random(std::size_t n_clients, std::size_t k, Rng& rng);

/// Uniform candidate pool of size d_pool, then the K largest losses
/// (ties to the lower id). Chosen ids are ordered by decreasing loss.
SelectionAction select_powd(const SelectionState& state, std::size_t d_pool, std::size_t k, Rng& rng);

struct KMeansResult {
  std::vector<int> assignment;  // cluster per point
  Mat centroids;                // dim x clusters
  int iterations = 0;
};

/// Lloyd's algorithm on the columns of `points`, Forgy initialization.
/// An emptied cluster takes the point farthest from its own centroid.
KMeansResult kmeans(const Mat& points, std::size_t n_clusters, Rng& rng, int max_iterations = 50);

/// Standardized (loss, local dataset size) per client, one column each.
Mat kmeans_features(const SelectionState& state, std::span<const std::size_t> sample_counts);

/// Clusters the clients, then hands out the K picks round-robin across
/// clusters, uniformly within each. One cluster is plain random selection.
SelectionAction select_kmeans(const Mat& features, std::size_t n_clusters, std::size_t k, Rng& rng);

// ---------------------------------------------------------------------------
// Actor-critic agent

struct AgentConfig {
  int actor_hidden = 64;
  int critic_hidden = 64;
  double gamma = 0.95;
  double entropy_weight = 0.01;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
};

/// actor: |U| -> h -> |U| (softmax head); critic: |U| -> h -> 1.
struct AgentParams {
  Mlp actor;
  Mlp critic;
  AdamState<double> actor_adam;
  AdamState<double> critic_adam;
  double gamma = 0.95;
  double entropy_weight = 0.01;

  static AgentParams xavier(std::size_t n_clients, const AgentConfig& cfg, Rng& rng);
  std::size_t n_clients() const { return static_cast<std::size_t>(actor.output_size()); }
};

struct Transition {
  SelectionState state;
  SelectionAction action;
  double reward = 0.0;
  SelectionState next_state;
  bool terminal = false;
};

Vec softmax(const Eigen::Ref<const Vec>& logits);

Vec actor_logits(const AgentParams& agent, const SelectionState& state);
Vec actor_policy(const AgentParams& agent, const SelectionState& state);
double critic_value(const AgentParams& agent, const SelectionState& state);

/// K draws without replacement, renormalizing the remaining mass after each.
/// log_prob = sum_i ln(p[c_i] / mass remaining before draw i).
SelectionAction sample_subset(const Eigen::Ref<const Vec>& probs, std::size_t k, Rng& rng);
double subset_log_prob(const Eigen::Ref<const Vec>& probs, std::span<const UserId> chosen);

/// r + gamma * V(s') * (1 - terminal), treated as a constant target.
double td_target(const AgentParams& agent, const Transition& tr);

/// -(A * log pi(a|s) + entropy_weight * H(pi(.|s))) for a fixed advantage A.
double actor_loss(const AgentParams& agent, const Transition& tr, double advantage);
/// (target - V(s))^2 for a fixed target.
double critic_loss(const AgentParams& agent, const Transition& tr, double target);

struct AgentGradients {
  Mlp actor;
  Mlp critic;
  double advantage = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
};

AgentGradients agent_gradients(const AgentParams& agent, const Transition& tr);

struct AgentLosses {
  double actor = 0.0;
  double critic = 0.0;
  double advantage = 0.0;
};

/// One-step advantage actor-critic update (both networks via Adam).
AgentLosses agent_update(AgentParams& agent, const Transition& tr);

// ---------------------------------------------------------------------------
// Pluggable selector interface

enum class SelectorKind { random, powd, kmeans, proxyrl };
SelectorKind parse_selector(const std::string& name);
std::string_view selector_name(SelectorKind kind);

struct SelectorConfig {
  SelectorKind kind = SelectorKind::proxyrl;
  std::size_t powd_pool = 0;  // 0: 2K, capped at |U|
  std::size_t kmeans_clusters = 5;
  AgentConfig agent;
};

struct SelectionContext {
  const SelectionState& state;
  std::span<const std::size_t> sample_counts;
  std::size_t k;
};

class Selector {
 public:
  virtual ~Selector() = default;
  virtual SelectionAction select(const SelectionContext& ctx, Rng& rng) = 0;
  /// Feedback for learning selectors; returns the losses when an update happened.
  virtual std::optional<AgentLosses> observe(const Transition&) { return std::nullopt; }
  virtual bool learns() const { return false; }
  virtual SelectorKind kind() const = 0;
};

std::unique_ptr<Selector> make_selector(const SelectorConfig& cfg, std::size_t n_clients, Rng& init_rng);

class ProxyRlSelector : public Selector {
 public:
  explicit ProxyRlSelector(AgentParams agent) : agent_(std::move(agent)) {}
  SelectionAction select(const SelectionContext& ctx, Rng& rng) override;
  std::optional<AgentLosses> observe(const Transition& tr) override;
  bool learns() const override { return true; }
  SelectorKind kind() const override { return SelectorKind::proxyrl; }
  const AgentParams& agent() const { return agent_; }

 private:
  AgentParams agent_;
};

}  // namespace fedrec
