#pragma once

#include <string>
#include <vector>

#include "psnlab/embedding.hpp"
#include "psnlab/policy.hpp"
#include "psnlab/rollout.hpp"

namespace psnlab {

enum class SchedulerMode { Fixed, VariantI, VariantII };
SchedulerMode scheduler_mode_from_name(const std::string& name);  // throws ConfigError
const char* scheduler_mode_name(SchedulerMode m);

struct SchedulerState {
  SchedulerMode mode = SchedulerMode::Fixed;
  double sigma = 0.0;
  double sigma_init = 0.0;
  double beta = 1.01;
  double sigma_low = 0.0;   // 0.8 * sigma_init
  double sigma_high = 0.0;  // 1.2 * sigma_init
  double kl_target = 0.03;  // Variant I target divergence

  // Variant II running state.
  bool extrema_initialized = false;
  double sc_min = 0.0;
  double sc_max = 0.0;
  std::vector<double> ind_history;
  std::size_t history_cap = 0;  // 0 = unwindowed

  static SchedulerState make(SchedulerMode mode, double sigma_init, double beta,
                             double kl_target, std::size_t history_cap);
  void clamp_sigma();
};

// Two clean-policy probe completions for one query (Variant II).
struct ProbePair {
  TokenSeq o1;
  TokenSeq o2;
  double sc1 = 0.0;  // self-certainty of each probe under the clean policy
  double sc2 = 0.0;
};

// Exact KL(p || q) between two categorical distributions, in nats.
double categorical_kl(const std::vector<double>& p, const std::vector<double>& q);

// Mean over all token positions of the batch of the exact categorical
// KL(pi_noisy(.|s) || pi_clean(.|s)) at that position's prefix.
double kl_divergence_estimate(const ParameterSet& clean_params, const ParameterSet& noisy_params,
                              const std::vector<GroupBatch>& batch);

// sigma_{k+1} = beta*sigma_k if d <= kl_target else sigma_k/beta, then clamped.
void update_variant1(SchedulerState& state, double divergence);

// Mean across decoding steps of KL(U || p(.|prompt, o_<i)), U uniform over vocab.
double self_certainty(const ParameterSet& params, const TokenSeq& prompt,
                      const TokenSeq& completion);

// Updates running extrema, then returns clip((sc - S_min)/(S_max - S_min + 1e-8), 0, 1).
double normalize_sc(SchedulerState& state, double sc_batch_mean);

struct Variant2Metrics {
  double d_sem_mean = 0.0;
  double sc_mean = 0.0;
  double sc_norm = 0.0;
  double indicator = 0.0;
  double indicator_hist_mean = 0.0;  // mean before appending the new indicator
};

// Composite-indicator update: Ind = SC_norm + d_sem_mean; sigma increases when
// the history mean (0 when the history is empty) is <= Ind, else decreases;
// clamped; Ind appended to the history.
Variant2Metrics update_variant2(SchedulerState& state, const std::vector<ProbePair>& probes);

}  // namespace psnlab
