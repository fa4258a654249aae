#pragma once

#include <span>
#include <vector>

#include "fedrec/client.hpp"
#include "fedrec/model.hpp"

namespace fedrec {

/// Sample-count weighted FedAvg over parameter deltas:
///   P_s += lr * sum_u w_u * dP_u,  w_u = |D_u| / sum |D_u|
/// Item rows no selected client uploaded keep their value. Updates are
/// consumed in user-id order, so the result does not depend on list order.
void aggregate(GlobalModel& global, std::span<const LocalUpdate> updates);

/// Rounds since each item embedding was last refreshed.
struct StalenessTracker {
  std::vector<long> tau;
  long window = 10;

  StalenessTracker() = default;
  StalenessTracker(std::size_t num_items, long window);
};

/// tau(v) = 0 for touched items, tau(v) + 1 for the rest.
void update_staleness(StalenessTracker& tracker, std::span<const ItemId> touched);

/// mean_v tau(v) / T, not clamped.
double staleness_value(const StalenessTracker& tracker);

/// lambda * acc - (1 - lambda) * staleness
double compute_reward(double acc, double staleness, double lambda);

/// Rows of a full-table upload whose delta norm exceeds 3 * sigma * sqrt(d);
/// with sigma == 0 any nonzero row counts.
std::vector<ItemId> detect_touched_rows(const LocalUpdate& update, double sigma);

/// Items the server treats as refreshed by this set of uploads.
std::vector<ItemId> touched_union(std::span<const LocalUpdate> updates, double ldp_sigma);

}  // namespace fedrec
