#include "fedrec/model.hpp"

#include <cstring>

namespace fedrec {

GlobalModel GlobalModel::xavier(std::size_t num_items, int embed_dim, int hidden, Rng& rng) {
  GlobalModel m;
  m.items = xavier_init<double>(static_cast<Eigen::Index>(num_items), embed_dim, rng);
  m.params = ProxyNcfParams::xavier(embed_dim, hidden, rng);
  return m;
}

std::size_t GlobalModel::parameter_count() const {
  return static_cast<std::size_t>(items.size() + params.ncf.parameter_count() + params.proxy.parameter_count());
}

bool GlobalModel::all_finite() const {
  return items.allFinite() && params.ncf.all_finite() && params.proxy.all_finite();
}

void mlp_to_tensors(const Mlp& m, const std::string& prefix, TensorMap& out) {
  out[prefix + ".W1"] = m.W1;
  out[prefix + ".b1"] = m.b1;
  out[prefix + ".W2"] = m.W2;
  out[prefix + ".b2"] = m.b2;
}

Mlp mlp_from_tensors(const TensorMap& in, const std::string& prefix) {
  auto get = [&](const std::string& name) -> const Eigen::MatrixXd& {
    auto it = in.find(prefix + "." + name);
    if (it == in.end()) throw Error("checkpoint is missing tensor " + prefix + "." + name);
    return it->second;
  };
  Mlp m;
  m.W1 = get("W1");
  m.b1 = get("b1");
  m.W2 = get("W2");
  m.b2 = get("b2");
  return m;
}

void GlobalModel::to_tensors(TensorMap& out) const {
  out["items"] = items;
  mlp_to_tensors(params.ncf, "ncf", out);
  mlp_to_tensors(params.proxy, "proxy", out);
  Eigen::MatrixXd meta(1, 2);
  meta << static_cast<double>(round), server_lr;
  out["meta.round_lr"] = meta;
}

GlobalModel GlobalModel::from_tensors(const TensorMap& in) {
  GlobalModel m;
  auto it = in.find("items");
  if (it == in.end()) throw Error("checkpoint is missing tensor items");
  m.items = it->second;
  m.params.embed_dim = static_cast<int>(m.items.cols());
  m.params.ncf = mlp_from_tensors(in, "ncf");
  m.params.proxy = mlp_from_tensors(in, "proxy");
  m.params.validate();
  if (auto meta = in.find("meta.round_lr"); meta != in.end() && meta->second.size() == 2) {
    m.round = static_cast<int>(meta->second(0, 0));
    m.server_lr = meta->second(0, 1);
  }
  return m;
}

namespace {

void hash_bytes(std::uint64_t& h, const double* data, Eigen::Index n) {
  const auto* p = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::uint64_t model_hash(const GlobalModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_bytes(h, model.items.data(), model.items.size());
  for (const Mlp* m : {&model.params.ncf, &model.params.proxy})
    m->for_each_tensor([&](const char*, const double* data, Eigen::Index n) { hash_bytes(h, data, n); });
  return h;
}

}  // namespace fedrec
