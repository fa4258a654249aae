#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedrec/client.hpp"
#include "fedrec/model.hpp"

namespace fedrec {

enum class EvalSplit { val, test };

struct EvalReport {
  double hr = 0.0;
  double ndcg = 0.0;
  std::size_t k = 20;
  EvalSplit split = EvalSplit::val;
  std::vector<UserId> users;  // evaluated users, aligned with the per-user vectors
  std::vector<double> per_user_hr;
  std::vector<double> per_user_ndcg;
};

/// Per-item hidden-layer contribution W1[:, d:2d] * P_s^T, shared by every
/// user scored against the same snapshot.
struct ItemProjection {
  Mat hidden;  // h x |V|
};
ItemProjection project_items(const GlobalModel& model);

/// NCF-branch scores of one user against every item.
Vec score_all_items(const Eigen::Ref<const Vec>& user, const GlobalModel& model, const ItemProjection& proj);

/// Items by descending score, ties to the lower id, `exclude` (sorted) removed.
std::vector<ItemId> rank_items(const Eigen::Ref<const Vec>& scores, std::span<const ItemId> exclude);
/// Same order as rank_items, truncated to the first k entries.
std::vector<ItemId> top_k_items(const Eigen::Ref<const Vec>& scores, std::span<const ItemId> exclude, std::size_t k);

/// Fraction of `positives` (sorted) found in the first k ranked items.
double hr_at_k(std::span<const ItemId> ranked, std::span<const ItemId> positives, std::size_t k);
/// DCG over hits at rank r <= k with gain 1/log2(r+1), normalized by the ideal DCG.
double ndcg_at_k(std::span<const ItemId> ranked, std::span<const ItemId> positives, std::size_t k);

struct EvalOptions {
  std::size_t k = 20;
  EvalSplit split = EvalSplit::val;
  std::size_t sampled_negatives = 0;  // 0: full-catalog ranking; otherwise rank among this many sampled negatives
  std::uint64_t seed = 0;             // used by sampled mode only
};

/// Evaluates `users` (all users when empty). Users without positives in the
/// split are skipped. The user's train items are excluded from ranking.
EvalReport evaluate(const GlobalModel& model, std::span<const ClientState> clients, const SplitDataset& split,
                    std::span<const UserId> users, const EvalOptions& opts);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace fedrec
