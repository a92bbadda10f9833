#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "psnlab/evaluation.hpp"
#include "psnlab/harness.hpp"

namespace {

int cmd_train(const std::string& config_path) {
  const psnlab::RunConfig cfg = psnlab::load_config(config_path);
  const psnlab::TrainOutputs out = psnlab::run_train(cfg);
  std::cout << "checkpoint: " << out.checkpoint_path << "\n"
            << "metrics: " << out.metrics_path << "\n"
            << "rollouts: " << out.rollout_log_path << "\n"
            << "final_train_reward: " << out.final_mean_reward << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path) {
  const psnlab::RunConfig cfg = psnlab::load_config(config_path);
  const std::string report_path = cfg.output_dir + "/eval_report.csv";
  const psnlab::EvalReport r = psnlab::run_eval_checkpoint(checkpoint, cfg, report_path);
  std::cout << "k,pass_at_k\n";
  for (const auto& [k, v] : r.pass_at_k_rows) std::cout << k << ',' << v << '\n';
  std::cout << "semantic_diversity," << r.semantic_div << '\n'
            << "operation_diversity," << r.operation_div << '\n'
            << "report: " << report_path << '\n';
  return 0;
}

int cmd_sweep(const std::string& preset, const std::string& config_path) {
  const psnlab::RunConfig cfg = psnlab::load_config(config_path);
  const std::string dir = psnlab::run_sweep(preset, cfg);
  std::cout << "sweep summary: " << dir << "/summary.csv\n";
  return 0;
}

int cmd_passk(const std::string& log_path, const std::vector<int>& ks) {
  const auto records = psnlab::records_from_log(log_path);
  std::cout << "k,pass_at_k\n";
  for (int k : ks) {
    std::cout << k << ',' << psnlab::pass_at_k_dataset(records, k) << '\n';
  }
  return 0;
}

int cmd_diversity(const std::string& log_path) {
  const auto records = psnlab::records_from_log(log_path);
  double cos_sum = 0.0, sem_sum = 0.0, op_sum = 0.0;
  std::size_t counted = 0;
  for (const auto& rec : records) {
    if (rec.rollout_texts.size() < 2) continue;
    const auto sd = psnlab::semantic_diversity(rec.rollout_texts);
    cos_sum += sd.mean_pairwise_cosine;
    sem_sum += sd.diversity;
    op_sum += psnlab::operation_diversity(rec.op_sequences);
    ++counted;
  }
  if (counted == 0) {
    std::cerr << "error: no task in the log has >= 2 rollouts\n";
    return 1;
  }
  std::cout << "mean_cosine," << cos_sum / counted << '\n'
            << "semantic_diversity," << sem_sum / counted << '\n'
            << "operation_diversity," << op_sum / counted << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"psnlab: parameter-space-noise GRPO laboratory"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, preset, log_path;
  std::vector<int> ks;

  CLI::App* train = app.add_subcommand("train", "Run a training run from a config file");
  train->add_option("--config", config_path, "JSON run config")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on held-out tasks");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint.bin path")->required();
  eval->add_option("--config", config_path, "JSON run config")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "Run an ablation preset");
  sweep->add_option("--preset", preset,
                    "injection_site | sigma_grid | tis_ablation | scheduler_mode | train_temperature")
      ->required();
  sweep->add_option("--config", config_path, "JSON run config")->required();

  CLI::App* passk = app.add_subcommand("passk", "pass@k from a rollout log (JSONL)");
  passk->add_option("--log", log_path, "rollouts.jsonl path")->required();
  passk->add_option("--k", ks, "k values")->required();

  CLI::App* diversity = app.add_subcommand("diversity", "Diversity metrics from a rollout log");
  diversity->add_option("--log", log_path, "rollouts.jsonl path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path);
    if (eval->parsed()) return cmd_eval(checkpoint_path, config_path);
    if (sweep->parsed()) return cmd_sweep(preset, config_path);
    if (passk->parsed()) return cmd_passk(log_path, ks);
    if (diversity->parsed()) return cmd_diversity(log_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
