#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "fedrec/harness.hpp"

using namespace fedrec;

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& selector,
            double lambda, std::size_t clients, std::uint64_t seed, const std::string& ablation,
            const std::string& out_dir, bool quiet) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!selector.empty()) cfg.set("selector", selector);
  if (lambda >= 0) cfg.lambda = lambda;
  if (clients > 0) cfg.clients_per_round = clients;
  if (seed > 0) cfg.seed = seed;
  if (!ablation.empty()) cfg.ablation = parse_ablation(ablation);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  cfg.validate();

  const auto res = run_experiment(cfg, [&](const RoundLog& r) {
    if (quiet) return;
    std::printf("round %3d  reward %+.4f  val_hr %.4f  staleness %.3f  unique %zu  contrib %.0f ms  wall %.0f ms\n",
                r.round, r.reward, r.val_hr, r.staleness, r.unique_clients, r.contrib_ms, r.wall_ms);
    std::fflush(stdout);
  });
  std::printf("best round %d (%s)  test HR@%zu %.4f  NDCG@%zu %.4f  unique clients %zu\n", res.best_round,
              res.early_stopped ? "early stop" : "round cap", res.test.k, res.test.hr, res.test.k, res.test.ndcg,
              res.unique_clients);
  return 0;
}

int cmd_evaluate(const std::string& dir) {
  const Checkpoint ck = load_checkpoint(dir);
  ExperimentConfig cfg = ck.config;
  Simulation sim(cfg);
  if (ck.model.num_items() != sim.global().num_items() || ck.model.embed_dim() != sim.global().embed_dim())
    throw DimensionError("checkpoint does not match the dataset named by its config");
  sim.global() = ck.model;
  sim.set_user_table(ck.users);
  for (EvalSplit s : {EvalSplit::val, EvalSplit::test}) {
    const EvalReport r = sim.evaluate_full(s);
    std::printf("%s  HR@%zu %.6f  NDCG@%zu %.6f  users %zu\n", s == EvalSplit::val ? "val " : "test", r.k, r.hr, r.k,
                r.ndcg, r.users.size());
  }
  return 0;
}

int cmd_bias(const std::string& logs, const std::string& out, std::size_t num_clients) {
  const auto rounds = read_rounds_csv(logs);
  const SelectionBias b = selection_bias(rounds, num_clients);
  std::printf("rounds %zu  unique clients %zu of %zu\n", b.rounds, b.unique_clients, b.counts.size());
  if (!out.empty()) write_bias_csv(out, b);
  return 0;
}

int cmd_synth(const std::string& out, const std::string& config_path) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
  const InteractionDataset ds = make_synthetic(cfg.synthetic);
  write_interactions_tsv(out, ds);
  std::printf("%zu users, %zu items, %zu interactions\n", ds.num_users, ds.num_items, ds.num_interactions());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated recommendation simulator with proxy-guided client selection"};
  app.require_subcommand(1);

  std::string config_path, selector, ablation, out_dir;
  std::vector<std::string> overrides;
  double lambda = -1;
  std::size_t clients = 0;
  std::uint64_t seed = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config_path, "Config file (key = value)");
  run->add_option("--set", overrides, "Override a config key, key=value (repeatable)");
  run->add_option("--selector", selector, "random | powd | kmeans | proxyrl");
  run->add_option("--lambda", lambda, "Reward weight in [0, 1]");
  run->add_option("--clients", clients, "Clients per round (K)");
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--ablation", ablation, "none | no_proxy | no_staleness | no_accuracy");
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--quiet", quiet, "Only print the final summary");

  std::string ckpt;
  auto* eval = app.add_subcommand("evaluate", "Evaluate a saved checkpoint on the full population");
  eval->add_option("--checkpoint", ckpt, "Checkpoint directory")->required();

  std::string logs, bias_out;
  std::size_t num_clients = 0;
  auto* bias = app.add_subcommand("bias-report", "Selection frequencies from a rounds.csv");
  bias->add_option("--logs", logs, "rounds.csv")->required();
  bias->add_option("--out", bias_out, "Write client,count CSV here");
  bias->add_option("--num-clients", num_clients, "Population size (default: largest selected id + 1)");

  std::string synth_out, synth_cfg;
  auto* synth = app.add_subcommand("synth", "Write the synthetic dataset as user/item TSV");
  synth->add_option("--out", synth_out, "Output TSV")->required();
  synth->add_option("--config", synth_cfg, "Config file with synthetic.* keys");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, overrides, selector, lambda, clients, seed, ablation, out_dir, quiet);
    if (*eval) return cmd_evaluate(ckpt);
    if (*bias) return cmd_bias(logs, bias_out, num_clients);
    if (*synth) return cmd_synth(synth_out, synth_cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
