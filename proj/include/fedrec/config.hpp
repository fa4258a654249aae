#pragma once

// Flat key = value experiment configuration, schema version 1.
// Lines starting with '#' are comments; unknown keys are rejected.

#include <cstdint>
#include <map>
#include <string>

#include "fedrec/client.hpp"
#include "fedrec/data.hpp"
#include "fedrec/selection.hpp"
#include "fedrec/synthetic.hpp"

namespace fedrec {

enum class Ablation { none, no_proxy, no_staleness, no_accuracy };
Ablation parse_ablation(const std::string& name);
std::string_view ablation_name(Ablation a);

enum class RewardMetric { hr, ndcg };

struct ExperimentConfig {
  // data
  std::string dataset_format = "synthetic";  // synthetic | movielens-dat | tsv | csv
  std::string dataset_path;
  std::size_t min_interactions = 20;
  SyntheticSpec synthetic;
  SplitRatios ratios;

  // model and training
  int embed_dim = 32;
  int hidden = 64;
  std::size_t clients_per_round = 50;
  int max_rounds = 100;
  int patience = 5;
  double server_lr = 1.0;
  LocalTrainConfig local;
  double user_lr = 0.01;
  std::size_t proxy_max_triplets = 64;
  LdpOptions ldp;

  // reward and evaluation
  double lambda = 0.6;
  RewardMetric reward_metric = RewardMetric::hr;
  long staleness_window = 10;
  std::size_t eval_k = 20;
  std::size_t val_users = 500;  // per-round validation subsample; 0 = everyone
  std::size_t eval_sampled_negatives = 0;

  SelectorConfig selector;
  Ablation ablation = Ablation::none;

  std::uint64_t seed = 1;
  std::string output_dir;  // empty: no files written
  int checkpoint_every = 0;

  /// lambda after applying the ablation flag.
  double effective_lambda() const;
  bool uses_proxy() const { return ablation != Ablation::no_proxy; }

  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_text() const;

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

}  // namespace fedrec
