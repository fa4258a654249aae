#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedrec/errors.hpp"
#include "fedrec/random.hpp"

namespace fedrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

enum class InteractionFormat { movielens_dat, tsv, csv };

InteractionFormat parse_format(const std::string& name);

/// Implicit-feedback interactions over dense 0-based user and item ids.
/// Per-user item lists are sorted and duplicate free.
struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::vector<ItemId>> user_items;
  // dense id -> raw id
  std::vector<std::string> raw_user_ids;
  std::vector<std::string> raw_item_ids;

  std::size_t num_interactions() const;
  const std::vector<ItemId>& items_of(UserId u) const { return user_items.at(u); }
  bool contains(UserId u, ItemId i) const;
  std::vector<std::pair<UserId, ItemId>> interactions() const;

  /// Dense id for a raw id, or -1 when unknown.
  long find_user(const std::string& raw) const;
  long find_item(const std::string& raw) const;

  /// Throws Error when an invariant is violated.
  void validate() const;
};

/// Parses user/item records; the rating and timestamp columns are ignored.
/// Raw ids receive dense indices in order of first appearance.
InteractionDataset load_interactions(const std::string& path, InteractionFormat format);
InteractionDataset parse_interactions(const std::string& text, InteractionFormat format);

/// Drops users with fewer than k interactions, then compacts item ids.
/// Items are never filtered on their own count, so one pass reaches the fixpoint.
InteractionDataset filter_min_interactions(const InteractionDataset& ds, std::size_t k);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitDataset {
  InteractionDataset train;
  InteractionDataset val;
  InteractionDataset test;
  std::uint64_t seed = 0;

  std::size_t num_users() const { return train.num_users; }
  std::size_t num_items() const { return train.num_items; }
};

/// Per-user random split. Each user keeps at least one train item.
SplitDataset split_dataset(const InteractionDataset& ds, SplitRatios ratios, std::uint64_t seed);

void write_split_manifest(const std::string& path, const SplitDataset& split);
SplitDataset read_split_manifest(const std::string& path);

struct Triplet {
  UserId user = 0;
  ItemId pos_item = 0;
  ItemId neg_item = 0;
};

/// n_neg triplets per positive, negatives uniform over the items the user
/// has not interacted with (rejection sampling). `positives` must be sorted.
std::vector<Triplet> sample_triplets(UserId user, std::span<const ItemId> positives,
                                     std::size_t num_items, std::size_t n_neg, Rng& rng);
std::vector<Triplet> sample_triplets(const SplitDataset& ds, UserId user, std::size_t n_neg, Rng& rng);

void write_interactions_tsv(const std::string& path, const InteractionDataset& ds);

}  // namespace fedrec
