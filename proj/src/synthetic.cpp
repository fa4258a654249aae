#include "fedrec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "fedrec/errors.hpp"

namespace fedrec {

InteractionDataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.users == 0 || spec.items == 0 || spec.topics == 0)
    throw ConfigError("synthetic: users, items and topics must be positive");
  if (spec.min_activity >= spec.items || spec.max_activity < spec.min_activity)
    throw ConfigError("synthetic: activity bounds inconsistent with catalog size");

  Rng rng = derive_stream(spec.seed, "synthetic");

  std::vector<std::size_t> rank(spec.items);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> popularity(spec.items);
  for (std::size_t i = 0; i < spec.items; ++i)
    popularity[i] = 1.0 / std::pow(static_cast<double>(rank[i] + 1), spec.popularity_exponent);

  std::uniform_int_distribution<std::size_t> topic_pick(0, spec.topics - 1);
  std::vector<std::vector<ItemId>> topic_items(spec.topics);
  for (ItemId i = 0; i < spec.items; ++i) topic_items[topic_pick(rng)].push_back(i);

  std::vector<std::discrete_distribution<std::size_t>> topic_dist;
  for (const auto& members : topic_items) {
    std::vector<double> w;
    for (ItemId i : members) w.push_back(popularity[i]);
    if (w.empty()) w.push_back(0.0);
    topic_dist.emplace_back(w.begin(), w.end());
  }
  std::discrete_distribution<std::size_t> global_dist(popularity.begin(), popularity.end());

  std::lognormal_distribution<double> activity(spec.activity_log_median, spec.activity_log_sigma);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> n_fav(1, 3);

  InteractionDataset ds;
  ds.num_users = spec.users;
  ds.num_items = spec.items;
  ds.user_items.resize(spec.users);
  for (std::size_t u = 0; u < spec.users; ++u) ds.raw_user_ids.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < spec.items; ++i) ds.raw_item_ids.push_back("i" + std::to_string(i));

  for (std::size_t u = 0; u < spec.users; ++u) {
    auto target = static_cast<std::size_t>(std::llround(activity(rng)));
    target = std::clamp(target, spec.min_activity, spec.max_activity);
    std::vector<std::size_t> favourites;
    for (int k = n_fav(rng); k > 0; --k) {
      std::size_t t = topic_pick(rng);
      if (!topic_items[t].empty()) favourites.push_back(t);
    }
    std::set<ItemId> chosen;
    std::size_t attempts = 0;
    while (chosen.size() < target && attempts < 50 * target) {
      ++attempts;
      ItemId item;
      if (!favourites.empty() && coin(rng) < spec.topic_affinity) {
        std::size_t t = favourites[std::uniform_int_distribution<std::size_t>(0, favourites.size() - 1)(rng)];
        item = topic_items[t][topic_dist[t](rng)];
      } else {
        item = static_cast<ItemId>(global_dist(rng));
      }
      chosen.insert(item);
    }
    // Saturated favourite topics: top up from the global distribution.
    while (chosen.size() < target) chosen.insert(static_cast<ItemId>(global_dist(rng)));
    ds.user_items[u].assign(chosen.begin(), chosen.end());
  }

  // Items nobody drew are dropped so every id appears in the data, as after loading a file.
  return filter_min_interactions(ds, 1);
}

}  // namespace fedrec
