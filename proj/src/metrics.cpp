#include "fedrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedrec {

ItemProjection project_items(const GlobalModel& model) {
  const int d = model.embed_dim();
  return {model.params.ncf.W1.rightCols(d) * model.items.transpose()};
}

Vec score_all_items(const Eigen::Ref<const Vec>& user, const GlobalModel& model, const ItemProjection& proj) {
  const Mlp& ncf = model.params.ncf;
  const int d = model.embed_dim();
  if (user.size() != d) throw DimensionError("score_all_items: user embedding length != d");
  const Vec user_part = ncf.W1.leftCols(d) * user + ncf.b1;
  const Mat hidden = (proj.hidden.colwise() + user_part).cwiseMax(0.0);
  return (ncf.W2.row(0) * hidden).transpose().array() + ncf.b2(0);
}

namespace {

struct ByScore {
  const double* s;
  bool operator()(ItemId a, ItemId b) const {
    if (s[a] != s[b]) return s[a] > s[b];
    return a < b;
  }
};

std::vector<ItemId> candidates(const Eigen::Ref<const Vec>& scores, std::span<const ItemId> exclude) {
  std::vector<ItemId> items;
  items.reserve(static_cast<std::size_t>(scores.size()));
  for (ItemId i = 0; i < scores.size(); ++i)
    if (!std::binary_search(exclude.begin(), exclude.end(), i)) items.push_back(i);
  return items;
}

}  // namespace

std::vector<ItemId> rank_items(const Eigen::Ref<const Vec>& scores, std::span<const ItemId> exclude) {
  auto items = candidates(scores, exclude);
  std::sort(items.begin(), items.end(), ByScore{scores.data()});
  return items;
}

std::vector<ItemId> top_k_items(const Eigen::Ref<const Vec>& scores, std::span<const ItemId> exclude, std::size_t k) {
  auto items = candidates(scores, exclude);
  const std::size_t m = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<long>(m), items.end(), ByScore{scores.data()});
  items.resize(m);
  return items;
}

double hr_at_k(std::span<const ItemId> ranked, std::span<const ItemId> positives, std::size_t k) {
  if (k < 1) throw ConfigError("K must be >= 1");
  if (positives.empty()) throw ConfigError("hr_at_k: empty positive set");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r)
    if (std::binary_search(positives.begin(), positives.end(), ranked[r])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(positives.size());
}

double ndcg_at_k(std::span<const ItemId> ranked, std::span<const ItemId> positives, std::size_t k) {
  if (k < 1) throw ConfigError("K must be >= 1");
  if (positives.empty()) throw ConfigError("ndcg_at_k: empty positive set");
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r)
    if (std::binary_search(positives.begin(), positives.end(), ranked[r]))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, positives.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

namespace {

/// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) c += (sum - t) + x;
    else c += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

}  // namespace

EvalReport evaluate(const GlobalModel& model, std::span<const ClientState> clients, const SplitDataset& split,
                    std::span<const UserId> users, const EvalOptions& opts) {
  EvalReport rep;
  rep.k = opts.k;
  rep.split = opts.split;
  const InteractionDataset& fold = opts.split == EvalSplit::val ? split.val : split.test;
  std::vector<UserId> all;
  if (users.empty()) {
    all.resize(split.num_users());
    std::iota(all.begin(), all.end(), 0);
    users = all;
  }
  const ItemProjection proj = project_items(model);
  Rng rng = derive_stream(opts.seed, "eval-negatives");
  CompensatedSum hr_sum, ndcg_sum;
  for (UserId u : users) {
    const auto& positives = fold.items_of(u);
    if (positives.empty()) continue;
    const ClientState& c = clients[u];
    const Vec scores = score_all_items(c.user_embedding, model, proj);
    std::vector<ItemId> ranked;
    if (opts.sampled_negatives == 0) {
      ranked = top_k_items(scores, c.train_items, opts.k);
    } else {
      std::vector<ItemId> pool(positives.begin(), positives.end());
      const std::size_t avail = split.num_items() - c.train_items.size() - positives.size();
      const std::size_t want = std::min(opts.sampled_negatives, avail);
      std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(split.num_items() - 1));
      std::vector<ItemId> negs;
      while (negs.size() < want) {
        const ItemId j = pick(rng);
        if (std::binary_search(c.train_items.begin(), c.train_items.end(), j) ||
            std::binary_search(positives.begin(), positives.end(), j) ||
            std::find(negs.begin(), negs.end(), j) != negs.end())
          continue;
        negs.push_back(j);
      }
      pool.insert(pool.end(), negs.begin(), negs.end());
      std::sort(pool.begin(), pool.end(), ByScore{scores.data()});
      ranked = std::move(pool);
    }
    const double hr = hr_at_k(ranked, positives, opts.k);
    const double nd = ndcg_at_k(ranked, positives, opts.k);
    rep.users.push_back(u);
    rep.per_user_hr.push_back(hr);
    rep.per_user_ndcg.push_back(nd);
    hr_sum.add(hr);
    ndcg_sum.add(nd);
  }
  if (!rep.users.empty()) {
    rep.hr = hr_sum.value() / static_cast<double>(rep.users.size());
    rep.ndcg = ndcg_sum.value() / static_cast<double>(rep.users.size());
  }
  return rep;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("spearman: need two equal-length samples of size >= 2");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const auto n = static_cast<Eigen::Index>(ra.size());
  Vec x = Eigen::Map<const Vec>(ra.data(), n);
  Vec y = Eigen::Map<const Vec>(rb.data(), n);
  x.array() -= x.mean();
  y.array() -= y.mean();
  const double denom = std::sqrt(x.squaredNorm() * y.squaredNorm());
  return denom > 0 ? x.dot(y) / denom : 0.0;
}

}  // namespace fedrec
