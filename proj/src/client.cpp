#include "fedrec/client.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace fedrec {

ClientState make_client(UserId user, const SplitDataset& split, Vec user_embedding, double user_lr,
                        std::uint64_t seed) {
  ClientState c;
  c.user_id = user;
  c.user_embedding = std::move(user_embedding);
  c.train_items = split.train.items_of(user);
  c.val_items = split.val.items_of(user);
  c.user_adam = AdamState<double>(AdamHyper{.lr = user_lr});
  c.rng = derive_stream(seed, "client", user);
  return c;
}

ContributionReport predict_contribution(const ClientState& client, const GlobalModel& global, std::size_t n_neg,
                                        std::size_t max_triplets, Rng& rng, ProxyForm form) {
  if (max_triplets < 1) throw ConfigError("max_triplets must be >= 1");
  auto triplets = sample_triplets(client.user_id, client.train_items, global.num_items(), n_neg, rng);
  const std::size_t batch = triplets.size();
  double scale = 1.0;
  if (batch > max_triplets) {
    for (std::size_t i = 0; i < max_triplets; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, batch - 1);
      std::swap(triplets[i], triplets[pick(rng)]);
    }
    triplets.resize(max_triplets);
    scale = static_cast<double>(batch) / static_cast<double>(max_triplets);
  }
  const auto preds = proxy_predictions(global.params, client.user_embedding, global.items, triplets, form);
  double sum = 0.0;
  for (double p : preds) sum += p;
  return {client.user_id, sum * scale};
}

double true_loss(const ClientState& client, const GlobalModel& global, std::size_t n_neg, Rng& rng) {
  auto triplets = sample_triplets(client.user_id, client.train_items, global.num_items(), n_neg, rng);
  return client_losses(global.params, client.user_embedding, global.items, triplets).ncf;
}

LocalUpdate local_train(ClientState& client, const GlobalModel& global, const LocalTrainConfig& cfg, Rng& rng,
                        TrainTrace* trace) {
  if (client.train_items.empty()) throw SkipClient("user " + std::to_string(client.user_id) + " has no train items");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  const int d = global.embed_dim();

  // Negatives are resampled every epoch; draw them all up front so the
  // touched rows are known before training.
  std::vector<std::vector<Triplet>> epoch_batches;
  for (int e = 0; e < cfg.epochs; ++e)
    epoch_batches.push_back(
        sample_triplets(client.user_id, client.train_items, global.num_items(), cfg.n_neg, rng));

  std::vector<ItemId> touched;
  for (const auto& batch : epoch_batches)
    for (const auto& t : batch) {
      touched.push_back(t.pos_item);
      touched.push_back(t.neg_item);
    }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

  std::unordered_map<ItemId, ItemId> local_row;
  ItemTable table(static_cast<Eigen::Index>(touched.size()), d);
  for (std::size_t k = 0; k < touched.size(); ++k) {
    local_row.emplace(touched[k], static_cast<ItemId>(k));
    table.row(static_cast<Eigen::Index>(k)) = global.items.row(touched[k]);
  }
  for (auto& batch : epoch_batches)
    for (auto& t : batch) {
      t.pos_item = local_row.at(t.pos_item);
      t.neg_item = local_row.at(t.neg_item);
    }

  ProxyNcfParams params = global.params;
  AdamState<double> model_adam(AdamHyper{.lr = cfg.lr});

  for (int e = 0; e < cfg.epochs; ++e) {
    const auto& batch = epoch_batches[static_cast<std::size_t>(e)];
    const std::size_t step = cfg.batch_size == 0 ? batch.size() : cfg.batch_size;
    double epoch_ncf = 0.0, epoch_proxy = 0.0;
    for (std::size_t start = 0; start < batch.size(); start += step) {
      std::span<const Triplet> mb(batch.data() + start, std::min(step, batch.size() - start));
      auto g = client_backward(params, client.user_embedding, table, mb, cfg.proxy_form,
                               1.0 / static_cast<double>(mb.size()));
      if (!std::isfinite(g.losses.ncf) || !std::isfinite(g.losses.proxy))
        throw ClientAbortError(cfg.round, client.user_id, "non-finite local loss");
      epoch_ncf += g.losses.ncf;
      epoch_proxy += g.losses.proxy;

      ItemTable table_grad = ItemTable::Zero(table.rows(), d);
      for (const auto& [row, grad] : g.items) table_grad.row(row) = grad.transpose();

      std::vector<ParamSlot<double>> slots;
      slots.push_back({"items", table.data(), table_grad.data(), table.size()});
      append_slots(params.ncf, g.ncf, "ncf", slots);
      append_slots(params.proxy, g.proxy, "proxy", slots);
      adam_step(slots, model_adam);

      std::vector<ParamSlot<double>> user_slot{
          {"user", client.user_embedding.data(), g.user.data(), client.user_embedding.size()}};
      adam_step(user_slot, client.user_adam);
    }
    if (trace) {
      trace->epoch_ncf_loss.push_back(epoch_ncf);
      trace->epoch_proxy_loss.push_back(epoch_proxy);
    }
  }

  LocalUpdate up;
  up.user_id = client.user_id;
  up.sample_count = client.sample_count();
  up.touched_items = touched;
  for (std::size_t k = 0; k < touched.size(); ++k)
    up.delta_rows.emplace(touched[k],
                          (table.row(static_cast<Eigen::Index>(k)) - global.items.row(touched[k])).transpose());
  up.delta_ncf = params.ncf - global.params.ncf;
  up.delta_proxy = params.proxy - global.params.proxy;
  return up;
}

double pre_round_training_loss(const ClientState& client, const GlobalModel& global, const LocalTrainConfig& cfg,
                               Rng& rng) {
  ClientState probe = client;
  TrainTrace trace;
  local_train(probe, global, cfg, rng, &trace);
  return trace.epoch_ncf_loss.empty() ? 0.0 : trace.epoch_ncf_loss.back();
}

LocalUpdate apply_ldp(const LocalUpdate& update, const LdpOptions& opts, std::size_t num_items, Rng& rng) {
  if (!std::isfinite(opts.sigma) || opts.sigma < 0) throw ConfigError("ldp sigma must be finite and >= 0");
  LocalUpdate out = update;
  if (opts.full_table) {
    const Eigen::Index d = out.delta_ncf.input_size() / 2;
    for (ItemId i = 0; i < num_items; ++i) out.delta_rows.try_emplace(i, Vec::Zero(d));
    out.touched_items.clear();
    out.full_table = true;
  }
  if (opts.sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, opts.sigma);
  for (auto& [item, row] : out.delta_rows)
    for (Eigen::Index k = 0; k < row.size(); ++k) row(k) += noise(rng);
  if (opts.noise_mlp) {
    for (Mlp* m : {&out.delta_ncf, &out.delta_proxy})
      m->for_each_tensor([&](const char*, double* data, Eigen::Index n) {
        for (Eigen::Index k = 0; k < n; ++k) data[k] += noise(rng);
      });
  }
  return out;
}

}  // namespace fedrec
