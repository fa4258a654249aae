#pragma once

// Round loop, early stopping and experiment outputs.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedrec/client.hpp"
#include "fedrec/config.hpp"
#include "fedrec/metrics.hpp"
#include "fedrec/model.hpp"
#include "fedrec/selection.hpp"
#include "fedrec/server.hpp"

namespace fedrec {

/// Dataset named by the config, after the minimum-interaction filter.
InteractionDataset load_dataset(const ExperimentConfig& cfg);

struct RoundLog {
  int round = 0;
  std::vector<UserId> selected;
  double reward = 0.0;
  double accuracy = 0.0;  // reward accuracy term (val subsample)
  double staleness = 0.0;
  double val_hr = 0.0;
  double val_ndcg = 0.0;
  std::optional<double> test_hr;  // filled on checkpoint rounds
  std::optional<double> test_ndcg;
  std::size_t unique_clients = 0;  // distinct clients selected so far
  std::size_t bytes_up = 0;
  std::size_t bytes_down = 0;
  std::optional<AgentLosses> agent;
  double contrib_ms = 0.0;
  double wall_ms = 0.0;
};

/// Columns of rounds.csv; the last two are timings.
extern const char* const kRoundsHeader;
std::string format_round(const RoundLog& log);
std::vector<RoundLog> read_rounds_csv(const std::string& path);

/// Stops after `patience` consecutive rounds without improvement, or at max_rounds.
class EarlyStopping {
 public:
  EarlyStopping(int patience, int max_rounds);
  /// Records one round's validation metric; true when training should stop.
  bool update(double metric);
  bool improved() const { return last_improved_; }
  int rounds() const { return rounds_; }
  int best_round() const { return best_round_; }
  double best() const { return best_; }

 private:
  int patience_;
  int max_rounds_;
  int rounds_ = 0;
  int best_round_ = 0;
  int bad_ = 0;
  double best_;
  bool last_improved_ = false;
};

class Simulation {
 public:
  explicit Simulation(const ExperimentConfig& cfg);
  Simulation(const ExperimentConfig& cfg, SplitDataset split);

  /// One federated round.
  RoundLog step();
  /// Contribution reports from every client under the current snapshot
  /// (proxy inference, or throwaway local training in no_proxy mode).
  SelectionState contribution_state(int round);
  /// Hands the last pending transition to the selector as terminal.
  void finish();

  EvalReport evaluate_full(EvalSplit split) const;

  const ExperimentConfig& config() const { return cfg_; }
  const SplitDataset& split() const { return split_; }
  const GlobalModel& global() const { return global_; }
  GlobalModel& global() { return global_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  std::vector<ClientState>& clients() { return clients_; }
  const StalenessTracker& tracker() const { return tracker_; }
  const Selector& selector() const { return *selector_; }
  const std::vector<std::size_t>& selection_counts() const { return selection_counts_; }
  const std::vector<UserId>& val_users() const { return val_users_; }

  Mat user_table() const;
  void set_user_table(const Mat& users);

 private:
  ExperimentConfig cfg_;
  SplitDataset split_;
  GlobalModel global_;
  std::vector<ClientState> clients_;
  std::vector<std::size_t> sample_counts_;
  StalenessTracker tracker_;
  std::unique_ptr<Selector> selector_;
  Rng selector_rng_;
  std::vector<UserId> val_users_;
  std::vector<std::size_t> selection_counts_;
  std::size_t unique_ = 0;
  std::optional<Transition> pending_;
};

struct ExperimentResult {
  std::vector<RoundLog> rounds;
  int best_round = 0;
  double best_val = 0.0;
  bool early_stopped = false;
  EvalReport val;   // full population, best checkpoint
  EvalReport test;  // full population, best checkpoint
  std::size_t unique_clients = 0;
  std::vector<std::size_t> selection_counts;
};

/// Runs until early stopping, restores the best validation checkpoint and
/// evaluates it on the test split. Writes rounds.csv, summary.txt and
/// checkpoints when cfg.output_dir is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::function<void(const RoundLog&)>& on_round = {});

struct Checkpoint {
  ExperimentConfig config;
  GlobalModel model;
  Mat users;  // |U| x d
  std::vector<long> tau;
};

void save_checkpoint(const std::string& dir, const Simulation& sim);
Checkpoint load_checkpoint(const std::string& dir);

struct SelectionBias {
  std::size_t unique_clients = 0;
  std::size_t rounds = 0;
  std::vector<std::size_t> counts;  // indexed by user id
};

SelectionBias selection_bias(const std::vector<RoundLog>& logs, std::size_t num_clients = 0);
/// "client,count" rows for every client id.
void write_bias_csv(const std::string& path, const SelectionBias& bias);

}  // namespace fedrec
