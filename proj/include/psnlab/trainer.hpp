#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "psnlab/noise.hpp"
#include "psnlab/policy.hpp"
#include "psnlab/rollout.hpp"
#include "psnlab/scheduler.hpp"

namespace psnlab {

struct TrainConfig {
  double clip_eps = 0.2;
  double tis_cap = 10.0;  // +infinity disables truncation
  double kl_coef = 1e-4;
  double lr = 3e-3;
  double adv_eps = 1e-6;
  int group_size = 8;
  int iterations = 200;
  int prompt_batch = 8;
  int minibatch_passes = 2;
  double temperature = 1.0;
  int max_completion_len = 16;
  bool per_query_noise = false;
  bool force_unit_tis = false;  // plain-GRPO path: importance weights fixed at 1

  void validate() const;  // throws ConfigError
};

struct TrainerState {
  ParameterSet params;      // clean theta
  ParameterSet params_old;  // pi_theta_old snapshot, refreshed once per rollout batch
  ParameterSet params_ref;  // frozen KL reference
  GradientSet m;            // Adam first moment
  GradientSet v;            // Adam second moment
  long step = 0;

  static TrainerState make(const ParameterSet& initial);
};

// A_i = (r_i - mean) / max(std, adv_eps); all zero when the group is degenerate.
std::vector<double> group_advantages(const std::vector<double>& rewards, double adv_eps);

// w_t = min(exp(lp_clean[t] - lp_sampler[t]), cap); one-sided truncation.
std::vector<double> tis_weights(const std::vector<double>& lp_clean,
                                const std::vector<double>& lp_sampler, double cap);

struct LossResult {
  double loss = 0.0;
  GradientSet grad;
  double kl_to_ref = 0.0;
  double mean_tis_weight = 0.0;
  double frac_tis_capped = 0.0;
};

// Clipped surrogate with TIS weighting and k1 KL regularization to the
// reference policy; the gradient treats TIS weights and the old-policy
// log-probs stored on the rollouts as constants.
LossResult surrogate_loss_and_grad(const ParameterSet& params, const ParameterSet& params_ref,
                                   std::span<const GroupBatch> batches, const TrainConfig& cfg);

// Adam update (beta1=0.9, beta2=0.999, eps=1e-8). Refuses nonfinite gradients.
void optimizer_step(TrainerState& state, const GradientSet& grad, const TrainConfig& cfg);

struct IterationMetrics {
  int iteration = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double kl_to_ref = 0.0;
  double sigma = 0.0;
  double mean_tis_weight = 0.0;
  double frac_tis_capped = 0.0;
  double mean_entropy = 0.0;
  double grad_norm = 0.0;
  Variant2Metrics v2;
};

struct IterationResult {
  IterationMetrics metrics;
  std::vector<GroupBatch> batches;  // for rollout logging
  NoiseSpec spec_used;
};

// One full PSN-GRPO iteration: scheduler probes (Variant II), perturbation,
// rollout generation, old-policy snapshot, minibatch optimizer passes, and the
// retrospective sigma update (Variant I).
IterationResult train_iteration(TrainerState& state, SchedulerState& sched,
                                const std::vector<TaskInstance>& tasks, const TrainConfig& cfg,
                                const NoiseSpec& base_noise, int iteration,
                                std::uint64_t master_seed);

}  // namespace psnlab
