#include "fedrec/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fedrec/errors.hpp"

namespace fedrec {

InteractionFormat parse_format(const std::string& name) {
  if (name == "movielens-dat" || name == "dat") return InteractionFormat::movielens_dat;
  if (name == "tsv") return InteractionFormat::tsv;
  if (name == "csv") return InteractionFormat::csv;
  throw ConfigError("unknown interaction format '" + name + "'");
}

std::size_t InteractionDataset::num_interactions() const {
  std::size_t n = 0;
  for (const auto& items : user_items) n += items.size();
  return n;
}

bool InteractionDataset::contains(UserId u, ItemId i) const {
  const auto& items = user_items.at(u);
  return std::binary_search(items.begin(), items.end(), i);
}

std::vector<std::pair<UserId, ItemId>> InteractionDataset::interactions() const {
  std::vector<std::pair<UserId, ItemId>> out;
  out.reserve(num_interactions());
  for (UserId u = 0; u < user_items.size(); ++u)
    for (ItemId i : user_items[u]) out.emplace_back(u, i);
  return out;
}

long InteractionDataset::find_user(const std::string& raw) const {
  auto it = std::find(raw_user_ids.begin(), raw_user_ids.end(), raw);
  return it == raw_user_ids.end() ? -1 : static_cast<long>(it - raw_user_ids.begin());
}

long InteractionDataset::find_item(const std::string& raw) const {
  auto it = std::find(raw_item_ids.begin(), raw_item_ids.end(), raw);
  return it == raw_item_ids.end() ? -1 : static_cast<long>(it - raw_item_ids.begin());
}

void InteractionDataset::validate() const {
  if (user_items.size() != num_users) throw Error("dataset: user table size != num_users");
  for (const auto& items : user_items) {
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (items[k] >= num_items) throw Error("dataset: item id out of range");
      if (k > 0 && items[k] <= items[k - 1]) throw Error("dataset: item list not strictly sorted");
    }
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line, InteractionFormat format) {
  std::vector<std::string> fields;
  if (format == InteractionFormat::movielens_dat) {
    std::size_t start = 0;
    while (true) {
      auto pos = line.find("::", start);
      fields.push_back(line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 2;
    }
  } else {
    const char sep = format == InteractionFormat::csv ? ',' : '\t';
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, sep)) fields.push_back(field);
    if (!line.empty() && line.back() == sep) fields.emplace_back();
  }
  for (auto& f : fields) {
    auto b = f.find_first_not_of(" \r");
    auto e = f.find_last_not_of(" \r");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

}  // namespace

InteractionDataset parse_interactions(const std::string& text, InteractionFormat format) {
  InteractionDataset ds;
  std::unordered_map<std::string, UserId> user_index;
  std::unordered_map<std::string, ItemId> item_index;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_fields(line, format);
    if (fields.size() < 2 || fields.size() > 4 || fields[0].empty() || fields[1].empty())
      throw ParseError(line_no, "expected user, item[, rating, timestamp]: '" + line + "'");
    // A header row of a csv/tsv export is the only non-data line tolerated.
    if (line_no == 1 && format != InteractionFormat::movielens_dat && fields[0] == "user") continue;
    auto [uit, new_user] = user_index.try_emplace(fields[0], static_cast<UserId>(ds.raw_user_ids.size()));
    if (new_user) {
      ds.raw_user_ids.push_back(fields[0]);
      ds.user_items.emplace_back();
    }
    auto [iit, new_item] = item_index.try_emplace(fields[1], static_cast<ItemId>(ds.raw_item_ids.size()));
    if (new_item) ds.raw_item_ids.push_back(fields[1]);
    ds.user_items[uit->second].push_back(iit->second);
  }
  if (ds.raw_user_ids.empty()) throw EmptyDatasetError("no interactions found");
  for (auto& items : ds.user_items) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  ds.num_users = ds.raw_user_ids.size();
  ds.num_items = ds.raw_item_ids.size();
  return ds;
}

InteractionDataset load_interactions(const std::string& path, InteractionFormat format) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_interactions(buf.str(), format);
}

InteractionDataset filter_min_interactions(const InteractionDataset& ds, std::size_t k) {
  if (k < 1) throw ConfigError("filter threshold must be >= 1");
  std::vector<long> item_map(ds.num_items, -1);
  InteractionDataset out;
  for (UserId u = 0; u < ds.num_users; ++u) {
    if (ds.user_items[u].size() < k) continue;
    out.raw_user_ids.push_back(ds.raw_user_ids.at(u));
    out.user_items.emplace_back();
  }
  if (out.user_items.empty()) throw EmptyDatasetError("no user has at least " + std::to_string(k) + " interactions");
  // Compact item ids, preserving the original relative order.
  std::vector<bool> used(ds.num_items, false);
  for (UserId u = 0; u < ds.num_users; ++u)
    if (ds.user_items[u].size() >= k)
      for (ItemId i : ds.user_items[u]) used[i] = true;
  for (ItemId i = 0; i < ds.num_items; ++i) {
    if (!used[i]) continue;
    item_map[i] = static_cast<long>(out.raw_item_ids.size());
    out.raw_item_ids.push_back(ds.raw_item_ids.at(i));
  }
  std::size_t next = 0;
  for (UserId u = 0; u < ds.num_users; ++u) {
    if (ds.user_items[u].size() < k) continue;
    auto& items = out.user_items[next++];
    for (ItemId i : ds.user_items[u]) items.push_back(static_cast<ItemId>(item_map[i]));
  }
  out.num_users = out.user_items.size();
  out.num_items = out.raw_item_ids.size();
  return out;
}

namespace {

InteractionDataset empty_like(const InteractionDataset& ds) {
  InteractionDataset out;
  out.num_users = ds.num_users;
  out.num_items = ds.num_items;
  out.user_items.assign(ds.num_users, {});
  out.raw_user_ids = ds.raw_user_ids;
  out.raw_item_ids = ds.raw_item_ids;
  return out;
}

}  // namespace

SplitDataset split_dataset(const InteractionDataset& ds, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative, train > 0, and sum to 1");
  SplitDataset out;
  out.seed = seed;
  out.train = empty_like(ds);
  out.val = empty_like(ds);
  out.test = empty_like(ds);
  Rng rng = derive_stream(seed, "split");
  for (UserId u = 0; u < ds.num_users; ++u) {
    std::vector<ItemId> items = ds.user_items[u];
    const std::size_t n = items.size();
    if (n < 3)
      throw ConfigError("user " + ds.raw_user_ids.at(u) + " has " + std::to_string(n) +
                        " interactions; raise the min-interaction filter to at least 3");
    for (std::size_t i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(items[i], items[pick(rng)]);
    }
    std::size_t n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n)));
    while (n_test + n_val >= n) {
      if (n_val >= n_test && n_val > 0) --n_val;
      else --n_test;
    }
    auto take = [&](std::vector<ItemId>& dst, std::size_t from, std::size_t count) {
      dst.assign(items.begin() + static_cast<long>(from), items.begin() + static_cast<long>(from + count));
      std::sort(dst.begin(), dst.end());
    };
    take(out.test.user_items[u], 0, n_test);
    take(out.val.user_items[u], n_test, n_val);
    take(out.train.user_items[u], n_test + n_val, n - n_test - n_val);
  }
  return out;
}

void write_split_manifest(const std::string& path, const SplitDataset& split) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << "# fedrec split manifest v1\n";
  os << "# num_users " << split.num_users() << " num_items " << split.num_items() << " seed " << split.seed << '\n';
  os << "user\titem\tfold\traw_user\traw_item\n";
  const InteractionDataset* folds[] = {&split.train, &split.val, &split.test};
  const char* names[] = {"train", "val", "test"};
  for (UserId u = 0; u < split.num_users(); ++u)
    for (int f = 0; f < 3; ++f)
      for (ItemId i : folds[f]->user_items[u])
        os << u << '\t' << i << '\t' << names[f] << '\t' << split.train.raw_user_ids[u] << '\t'
           << split.train.raw_item_ids[i] << '\n';
}

SplitDataset read_split_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t num_users = 0, num_items = 0;
  std::uint64_t seed = 0;
  InteractionDataset base;
  SplitDataset out;
  bool sized = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.rfind("# num_users", 0) == 0) {
      std::istringstream ss(line.substr(2));
      std::string a, b, c;
      ss >> a >> num_users >> b >> num_items >> c >> seed;
      base.num_users = num_users;
      base.num_items = num_items;
      base.user_items.assign(num_users, {});
      base.raw_user_ids.assign(num_users, {});
      base.raw_item_ids.assign(num_items, {});
      out.train = out.val = out.test = base;
      out.seed = seed;
      sized = true;
      continue;
    }
    if (line.empty() || line[0] == '#' || line.rfind("user\t", 0) == 0) continue;
    if (!sized) throw ParseError(line_no, "manifest header missing");
    std::istringstream ss(line);
    std::size_t u = 0, i = 0;
    std::string fold, ru, ri;
    if (!(ss >> u >> i >> fold >> ru >> ri) || u >= num_users || i >= num_items)
      throw ParseError(line_no, "bad manifest row");
    InteractionDataset* dst = fold == "train" ? &out.train : fold == "val" ? &out.val : fold == "test" ? &out.test : nullptr;
    if (!dst) throw ParseError(line_no, "unknown fold '" + fold + "'");
    dst->user_items[u].push_back(static_cast<ItemId>(i));
    for (auto* d : {&out.train, &out.val, &out.test}) {
      d->raw_user_ids[u] = ru;
      d->raw_item_ids[i] = ri;
    }
  }
  if (!sized) throw ParseError(line_no, "manifest header missing");
  for (auto* d : {&out.train, &out.val, &out.test})
    for (auto& items : d->user_items) std::sort(items.begin(), items.end());
  return out;
}

std::vector<Triplet> sample_triplets(UserId user, std::span<const ItemId> positives,
                                     std::size_t num_items, std::size_t n_neg, Rng& rng) {
  if (positives.empty()) throw SkipClient("user " + std::to_string(user) + " has no train items");
  if (n_neg < 1) throw ConfigError("n_neg must be >= 1");
  if (positives.size() >= num_items)
    throw NoNegativesError("user " + std::to_string(user) + " interacted with every item");
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(num_items - 1));
  std::vector<Triplet> out;
  out.reserve(positives.size() * n_neg);
  for (ItemId pos : positives) {
    for (std::size_t k = 0; k < n_neg; ++k) {
      ItemId neg;
      do {
        neg = pick(rng);
      } while (std::binary_search(positives.begin(), positives.end(), neg));
      out.push_back({user, pos, neg});
    }
  }
  return out;
}

std::vector<Triplet> sample_triplets(const SplitDataset& ds, UserId user, std::size_t n_neg, Rng& rng) {
  return sample_triplets(user, ds.train.items_of(user), ds.num_items(), n_neg, rng);
}

void write_interactions_tsv(const std::string& path, const InteractionDataset& ds) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  for (UserId u = 0; u < ds.num_users; ++u)
    for (ItemId i : ds.user_items[u]) os << ds.raw_user_ids[u] << '\t' << ds.raw_item_ids[i] << '\n';
}

}  // namespace fedrec
