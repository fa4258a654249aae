#pragma once

#include <cstdint>
#include <string>

#include "fedrec/proxyncf.hpp"
#include "fedrec/tensor_io.hpp"

namespace fedrec {

/// Server-side model: global item table plus both MLP branches.
struct GlobalModel {
  ItemTable items;  // |V| x d
  ProxyNcfParams params;
  int round = 0;
  double server_lr = 1.0;

  static GlobalModel xavier(std::size_t num_items, int embed_dim, int hidden, Rng& rng);

  std::size_t num_items() const { return static_cast<std::size_t>(items.rows()); }
  int embed_dim() const { return params.embed_dim; }
  /// Scalars in one broadcast snapshot (item table and both branches).
  std::size_t parameter_count() const;
  std::size_t snapshot_bytes() const { return parameter_count() * sizeof(double); }
  bool all_finite() const;

  void to_tensors(TensorMap& out) const;
  static GlobalModel from_tensors(const TensorMap& in);
};

void mlp_to_tensors(const Mlp& m, const std::string& prefix, TensorMap& out);
Mlp mlp_from_tensors(const TensorMap& in, const std::string& prefix);

/// FNV-1a over every stored scalar; used to check that read-only paths do not write.
std::uint64_t model_hash(const GlobalModel& model);

}  // namespace fedrec
