#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "fedrec/data.hpp"
#include "fedrec/model.hpp"

namespace fedrec {

/// Everything a device keeps between rounds. The user embedding never
/// leaves this struct.
struct ClientState {
  UserId user_id = 0;
  Vec user_embedding;
  std::vector<ItemId> train_items;  // sorted
  std::vector<ItemId> val_items;    // sorted
  AdamState<double> user_adam;
  Rng rng;

  std::size_t sample_count() const { return train_items.size(); }
};

ClientState make_client(UserId user, const SplitDataset& split, Vec user_embedding, double user_lr,
                        std::uint64_t seed);

/// Upload payload: parameter deltas (trained - snapshot) for touched item
/// rows and both branches.
struct LocalUpdate {
  UserId user_id = 0;
  std::map<ItemId, Vec> delta_rows;
  Mlp delta_ncf;
  Mlp delta_proxy;
  std::size_t sample_count = 0;
  std::vector<ItemId> touched_items;  // sorted; empty when full_table is set
  bool full_table = false;
};

struct ContributionReport {
  UserId user_id = 0;
  double predicted_loss = 0.0;
};

struct LocalTrainConfig {
  int epochs = 2;
  std::size_t n_neg = 4;
  double lr = 0.01;
  std::size_t batch_size = 0;  // 0: one full batch per epoch
  ProxyForm proxy_form = ProxyForm::pairwise;
  int round = 0;               // only used for error context
};

struct TrainTrace {
  std::vector<double> epoch_ncf_loss;
  std::vector<double> epoch_proxy_loss;
};

/// Proxy-branch estimate of the client's summed triplet loss under the
/// snapshot. At most max_triplets triplets are scored; when the full batch is
/// larger the sum is scaled by batch/max_triplets. Never writes to the model.
ContributionReport predict_contribution(const ClientState& client, const GlobalModel& global, std::size_t n_neg,
                                        std::size_t max_triplets, Rng& rng,
                                        ProxyForm form = ProxyForm::pairwise);

/// Summed BPR loss of a freshly sampled triplet batch under the snapshot (no training).
double true_loss(const ClientState& client, const GlobalModel& global, std::size_t n_neg, Rng& rng);

/// Local training from the snapshot. The user embedding and its Adam state
/// are updated in place; everything else is returned as deltas.
LocalUpdate local_train(ClientState& client, const GlobalModel& global, const LocalTrainConfig& cfg, Rng& rng,
                        TrainTrace* trace = nullptr);

/// Loss reported after a throwaway local training run on a copy of the
/// client: the summed BPR loss of the last local epoch.
double pre_round_training_loss(const ClientState& client, const GlobalModel& global, const LocalTrainConfig& cfg,
                               Rng& rng);

struct LdpOptions {
  double sigma = 0.0;
  bool full_table = false;  // upload every item row so touched rows are hidden
  bool noise_mlp = false;
};

/// Adds N(0, sigma^2) to every uploaded item-row entry.
LocalUpdate apply_ldp(const LocalUpdate& update, const LdpOptions& opts, std::size_t num_items, Rng& rng);

}  // namespace fedrec
