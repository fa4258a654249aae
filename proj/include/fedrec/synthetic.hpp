#pragma once

#include <cstddef>
#include <cstdint>

#include "fedrec/data.hpp"

namespace fedrec {

/// Topic-structured implicit-feedback generator. The defaults give a
/// MovieLens-100k-sized catalog: 943 users, 1682 items, about 10^5
/// interactions, every user with at least 20 of them.
struct SyntheticSpec {
  std::size_t users = 943;
  std::size_t items = 1682;
  std::size_t topics = 18;
  std::size_t min_activity = 20;
  std::size_t max_activity = 737;
  double activity_log_median = 4.1;  // log of the median per-user count
  double activity_log_sigma = 0.95;
  double popularity_exponent = 0.9;  // Zipf exponent over item ranks
  double topic_affinity = 0.75;      // probability a draw comes from a favourite topic
  std::uint64_t seed = 7;
};

InteractionDataset make_synthetic(const SyntheticSpec& spec);

}  // namespace fedrec
