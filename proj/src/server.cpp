#include "fedrec/server.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fedrec {

void aggregate(GlobalModel& global, std::span<const LocalUpdate> updates) {
  if (updates.empty()) throw ProtocolError("aggregate: no client updates");
  std::vector<const LocalUpdate*> ordered;
  double total = 0.0;
  for (const auto& u : updates) {
    ordered.push_back(&u);
    total += static_cast<double>(u.sample_count);
  }
  if (!(total > 0.0)) throw ProtocolError("aggregate: total sample count is zero");
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LocalUpdate* a, const LocalUpdate* b) { return a->user_id < b->user_id; });

  const int d = global.embed_dim();
  std::map<ItemId, Vec> row_sum;
  Mlp ncf_sum = global.params.ncf.zeros_like();
  Mlp proxy_sum = global.params.proxy.zeros_like();
  for (const LocalUpdate* u : ordered) {
    const double w = static_cast<double>(u->sample_count) / total;
    for (const auto& [item, delta] : u->delta_rows) {
      if (item >= global.num_items() || delta.size() != d)
        throw DimensionError("aggregate: update row out of range or wrong width");
      auto [it, fresh] = row_sum.try_emplace(item, Vec::Zero(d));
      it->second += w * delta;
    }
    ncf_sum.axpy(w, u->delta_ncf);
    proxy_sum.axpy(w, u->delta_proxy);
  }
  const double lr = global.server_lr;
  for (const auto& [item, delta] : row_sum) global.items.row(item) += lr * delta.transpose();
  global.params.ncf.axpy(lr, ncf_sum);
  global.params.proxy.axpy(lr, proxy_sum);
  ++global.round;
}

StalenessTracker::StalenessTracker(std::size_t num_items, long window) : tau(num_items, 0), window(window) {
  if (window <= 0) throw ConfigError("staleness window must be positive");
}

void update_staleness(StalenessTracker& tracker, std::span<const ItemId> touched) {
  std::vector<bool> hit(tracker.tau.size(), false);
  for (ItemId v : touched) {
    if (v >= tracker.tau.size()) throw DimensionError("update_staleness: item id out of range");
    hit[v] = true;
  }
  for (std::size_t v = 0; v < tracker.tau.size(); ++v) tracker.tau[v] = hit[v] ? 0 : tracker.tau[v] + 1;
}

double staleness_value(const StalenessTracker& tracker) {
  if (tracker.window <= 0) throw ConfigError("staleness window must be positive");
  if (tracker.tau.empty()) return 0.0;
  long double sum = 0;
  for (long t : tracker.tau) sum += t;
  return static_cast<double>(sum / static_cast<long double>(tracker.tau.size()) /
                             static_cast<long double>(tracker.window));
}

double compute_reward(double acc, double staleness, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!std::isfinite(acc) || !std::isfinite(staleness)) throw NumericError("compute_reward: non-finite input");
  if (lambda == 1.0) return acc;
  if (lambda == 0.0) return -staleness;
  return lambda * acc - (1.0 - lambda) * staleness;
}

std::vector<ItemId> detect_touched_rows(const LocalUpdate& update, double sigma) {
  std::vector<ItemId> out;
  for (const auto& [item, delta] : update.delta_rows) {
    const double threshold = 3.0 * sigma * std::sqrt(static_cast<double>(delta.size()));
    if (delta.norm() > threshold) out.push_back(item);
  }
  return out;
}

std::vector<ItemId> touched_union(std::span<const LocalUpdate> updates, double ldp_sigma) {
  std::vector<ItemId> out;
  for (const auto& u : updates) {
    if (u.full_table) {
      auto rows = detect_touched_rows(u, ldp_sigma);
      out.insert(out.end(), rows.begin(), rows.end());
    } else {
      out.insert(out.end(), u.touched_items.begin(), u.touched_items.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace fedrec
