#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psnlab/env.hpp"
#include "psnlab/noise.hpp"
#include "psnlab/policy.hpp"

namespace psnlab {

struct Rollout {
  TaskInstance task;
  TokenSeq tokens;
  std::vector<double> lp_sampler;     // under theta_tilde at the sampling temperature
  std::vector<double> lp_sampler_t1;  // under theta_tilde at temperature 1 (TIS denominator)
  std::vector<double> lp_clean;       // under clean theta at temperature 1
  int reward = 0;
  std::vector<std::string> op_sequence;
  bool truncated = false;
  double entropy_sum = 0.0;  // sampler-distribution entropy summed over steps
};

struct GroupBatch {
  TaskInstance task;
  std::vector<Rollout> rollouts;  // exactly G
  NoiseSpec noise_spec_used;
  int iteration = 0;
};

// Samples G rollouts autoregressively from token_distribution(theta_tilde, ., temperature)
// until EOS or max_len tokens. Deterministic given rng_seed (per-rollout substreams).
GroupBatch generate_group(const ParameterSet& clean_params, const ParameterSet& noisy_params,
                          const NoiseSpec& spec, const TaskInstance& task, int group_size,
                          double temperature, int max_len, std::uint64_t rng_seed);

// Post-hoc per-token log-probs of the rollout's tokens under `params` at T=1.
std::vector<double> rescore(const ParameterSet& params, const Rollout& rollout);

// One JSONL log line per rollout.
std::string rollout_log_line(const Rollout& r, int iteration, double sigma,
                             const NoiseSpec& spec);

}  // namespace psnlab
