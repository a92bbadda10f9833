#include "psnlab/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psnlab/errors.hpp"

namespace psnlab {

SchedulerMode scheduler_mode_from_name(const std::string& name) {
  if (name == "Fixed") return SchedulerMode::Fixed;
  if (name == "VariantI") return SchedulerMode::VariantI;
  if (name == "VariantII") return SchedulerMode::VariantII;
  throw ConfigError("unknown scheduler mode: " + name);
}

const char* scheduler_mode_name(SchedulerMode m) {
  switch (m) {
    case SchedulerMode::Fixed: return "Fixed";
    case SchedulerMode::VariantI: return "VariantI";
    case SchedulerMode::VariantII: return "VariantII";
  }
  throw ConfigError("unknown scheduler mode");
}

SchedulerState SchedulerState::make(SchedulerMode mode, double sigma_init, double beta,
                                    double kl_target, std::size_t history_cap) {
  if (sigma_init < 0.0) throw ConfigError("sigma_init must be >= 0");
  if (!(beta > 1.0)) throw ConfigError("beta must be > 1");
  if (kl_target < 0.0) throw ConfigError("kl_target must be >= 0");
  SchedulerState s;
  s.mode = mode;
  s.sigma = sigma_init;
  s.sigma_init = sigma_init;
  s.beta = beta;
  s.sigma_low = 0.8 * sigma_init;
  s.sigma_high = 1.2 * sigma_init;
  s.kl_target = kl_target;
  s.history_cap = history_cap;
  return s;
}

void SchedulerState::clamp_sigma() { sigma = std::clamp(sigma, sigma_low, sigma_high); }

double categorical_kl(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw InputError("categorical_kl: size mismatch");
  double kl = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (p[v] > 0.0) kl += p[v] * std::log(p[v] / q[v]);
  }
  return kl;
}

double kl_divergence_estimate(const ParameterSet& clean_params, const ParameterSet& noisy_params,
                              const std::vector<GroupBatch>& batch) {
  double total = 0.0;
  std::size_t positions = 0;
  for (const GroupBatch& gb : batch) {
    for (const Rollout& r : gb.rollouts) {
      TokenSeq prefix = r.task.prompt;
      for (std::size_t t = 0; t < r.tokens.size(); ++t) {
        const std::vector<double> lp_noisy = log_softmax(forward_logits(noisy_params, prefix));
        const std::vector<double> lp_clean = log_softmax(forward_logits(clean_params, prefix));
        double kl = 0.0;
        for (std::size_t v = 0; v < lp_noisy.size(); ++v) {
          kl += std::exp(lp_noisy[v]) * (lp_noisy[v] - lp_clean[v]);
        }
        total += kl;
        ++positions;
        prefix.push_back(r.tokens[t]);
      }
    }
  }
  if (positions == 0) throw InputError("kl_divergence_estimate: empty batch");
  return total / static_cast<double>(positions);
}

void update_variant1(SchedulerState& state, double divergence) {
  if (divergence < 0.0) throw InputError("divergence must be >= 0");
  if (divergence <= state.kl_target) {
    state.sigma *= state.beta;
  } else {
    state.sigma /= state.beta;
  }
  state.clamp_sigma();
}

double self_certainty(const ParameterSet& params, const TokenSeq& prompt,
                      const TokenSeq& completion) {
  if (completion.empty()) throw InputError("self_certainty: empty completion");
  const int V = params.config.vocab_size;
  const double log_v = std::log(static_cast<double>(V));
  TokenSeq prefix = prompt;
  double total = 0.0;
  for (int token : completion) {
    const std::vector<double> lp = log_softmax(forward_logits(params, prefix));
    double mean_lp = 0.0;
    for (double x : lp) mean_lp += x;
    mean_lp /= V;
    total += -log_v - mean_lp;  // KL(U || p) = -log V - (1/V) sum_j log p_j
    prefix.push_back(token);
  }
  return total / static_cast<double>(completion.size());
}

double normalize_sc(SchedulerState& state, double sc_batch_mean) {
  if (!std::isfinite(sc_batch_mean) || sc_batch_mean < 0.0) {
    throw InputError("sc_batch_mean must be finite and >= 0");
  }
  if (!state.extrema_initialized) {
    state.sc_min = sc_batch_mean;
    state.sc_max = sc_batch_mean;
    state.extrema_initialized = true;
  } else {
    state.sc_min = std::min(state.sc_min, sc_batch_mean);
    state.sc_max = std::max(state.sc_max, sc_batch_mean);
  }
  const double normalized = (sc_batch_mean - state.sc_min) / (state.sc_max - state.sc_min + 1e-8);
  return std::clamp(normalized, 0.0, 1.0);
}

Variant2Metrics update_variant2(SchedulerState& state, const std::vector<ProbePair>& probes) {
  if (probes.empty()) throw InputError("update_variant2: no probe pairs");
  Variant2Metrics m;
  double sc_sum = 0.0;
  for (const ProbePair& p : probes) {
    m.d_sem_mean += semantic_similarity(p.o1, p.o2);
    sc_sum += 0.5 * (p.sc1 + p.sc2);
  }
  m.d_sem_mean /= static_cast<double>(probes.size());
  m.sc_mean = sc_sum / static_cast<double>(probes.size());
  m.sc_norm = normalize_sc(state, m.sc_mean);
  m.indicator = m.sc_norm + m.d_sem_mean;

  // Empty history reads as mean 0, so the first iteration always increases sigma.
  m.indicator_hist_mean =
      state.ind_history.empty()
          ? 0.0
          : std::accumulate(state.ind_history.begin(), state.ind_history.end(), 0.0) /
                static_cast<double>(state.ind_history.size());
  if (m.indicator_hist_mean <= m.indicator) {
    state.sigma *= state.beta;
  } else {
    state.sigma /= state.beta;
  }
  state.clamp_sigma();
  state.ind_history.push_back(m.indicator);
  if (state.history_cap > 0 && state.ind_history.size() > state.history_cap) {
    state.ind_history.erase(state.ind_history.begin());
  }
  return m;
}

}  // namespace psnlab
