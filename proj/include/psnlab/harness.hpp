#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psnlab/env.hpp"
#include "psnlab/evaluation.hpp"
#include "psnlab/noise.hpp"
#include "psnlab/policy.hpp"
#include "psnlab/scheduler.hpp"
#include "psnlab/trainer.hpp"

namespace psnlab {

struct EnvConfig {
  EnvId env_id = EnvId::PathSum;
  int difficulty = 6;
  int num_train_tasks = 16;  // fixed pool of recurring training instances
  int num_eval_tasks = 16;   // held-out, disjoint seed range
};

struct EvalConfig {
  int n_samples = 64;
  std::vector<int> k_list = {1, 8, 32};
  double eval_temperature = 0.9;
};

struct SchedulerConfig {
  SchedulerMode mode = SchedulerMode::Fixed;
  double sigma_init = -1.0;  // < 0: inherit noise.sigma
  double beta = 1.01;
  double kl_target = 0.03;
  std::size_t history_cap = 0;
};

struct RunConfig {
  PolicyConfig policy{tok::kVocabSize, 48, 16, 1, 32, 1};
  EnvConfig env;
  TrainConfig trainer;
  NoiseSpec noise{0.004, NoiseSpec::mlp_only(), 0};
  SchedulerConfig scheduler;
  EvalConfig eval;
  std::uint64_t master_seed = 1;
  std::string output_dir = "runs/out";

  double resolved_sigma_init() const {
    return scheduler.sigma_init >= 0.0 ? scheduler.sigma_init : noise.sigma;
  }
};

// JSON round-trip; unknown keys are rejected. Environment variables
// PSNLAB_OUTPUT_DIR and PSNLAB_MASTER_SEED override the file values.
RunConfig load_config(const std::string& path);
RunConfig parse_config_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);

struct TrainOutputs {
  std::string checkpoint_path;
  std::string metrics_path;
  std::string rollout_log_path;
  double final_mean_reward = 0.0;
};

// Full deterministic training run; writes checkpoint.bin, metrics.csv,
// rollouts.jsonl, and the resolved config.json into cfg.output_dir.
TrainOutputs run_train(const RunConfig& cfg);

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<std::pair<int, double>> pass_at_k_rows;  // (k, dataset pass@k)
  double mean_cosine = 0.0;
  double semantic_div = 0.0;
  double operation_div = 0.0;
  double mean_reward = 0.0;  // = dataset pass@1
};

// Samples eval.n_samples clean-policy completions per held-out task at
// eval_temperature; writes eval_report.csv next to the checkpoint when
// report_path is nonempty.
EvalReport run_eval(const ParameterSet& params, const RunConfig& cfg,
                    const std::string& report_path);
EvalReport run_eval_checkpoint(const std::string& checkpoint_path, const RunConfig& cfg,
                               const std::string& report_path);

// Ablation presets: injection_site, sigma_grid, tis_ablation, scheduler_mode,
// train_temperature. One run per grid point with derived seeds; summary.csv
// in <output_dir>/sweep_<preset>/.
std::string run_sweep(const std::string& preset, const RunConfig& base);

// Held-out / training task pools (training seeds and eval seeds are disjoint).
std::vector<TaskInstance> training_task_pool(const RunConfig& cfg);
std::vector<TaskInstance> eval_task_pool(const RunConfig& cfg);

// Rollout-log (JSONL) consumers backing the `passk` and `diversity` commands.
std::vector<EvalRecord> records_from_log(const std::string& jsonl_path);

}  // namespace psnlab
