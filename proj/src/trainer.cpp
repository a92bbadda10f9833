#include "psnlab/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "psnlab/errors.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

namespace {

// Seed derivation tags for per-iteration substreams.
constexpr std::uint64_t kTagRollout = 0x9001;
constexpr std::uint64_t kTagNoise = 0x9002;
constexpr std::uint64_t kTagProbe = 0x9003;

}  // namespace

void TrainConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must be in (0,1)");
  if (!(tis_cap >= 1.0)) throw ConfigError("tis_cap must be >= 1");
  if (kl_coef < 0.0) throw ConfigError("kl_coef must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(adv_eps > 0.0)) throw ConfigError("adv_eps must be > 0");
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (prompt_batch < 1) throw ConfigError("prompt_batch must be >= 1");
  if (minibatch_passes < 1) throw ConfigError("minibatch_passes must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (max_completion_len < 1) throw ConfigError("max_completion_len must be >= 1");
}

TrainerState TrainerState::make(const ParameterSet& initial) {
  TrainerState s;
  s.params = initial;
  s.params_old = initial;
  s.params_ref = initial;
  s.m = ParameterSet::zeros_like(initial.config);
  s.v = ParameterSet::zeros_like(initial.config);
  return s;
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double adv_eps) {
  const std::size_t n = rewards.size();
  if (n < 2) throw InputError("group_advantages: need at least 2 rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));  // population std
  std::vector<double> adv(n, 0.0);
  if (sd < adv_eps) return adv;  // degenerate group contributes no gradient
  for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

std::vector<double> tis_weights(const std::vector<double>& lp_clean,
                                const std::vector<double>& lp_sampler, double cap) {
  if (lp_clean.size() != lp_sampler.size()) throw InputError("tis_weights: length mismatch");
  if (!(cap >= 1.0)) throw InputError("tis_weights: cap must be >= 1");
  std::vector<double> w(lp_clean.size());
  for (std::size_t t = 0; t < w.size(); ++t) {
    if (!std::isfinite(lp_clean[t]) || !std::isfinite(lp_sampler[t])) {
      throw InputError("tis_weights: nonfinite log-probs");
    }
    w[t] = std::min(std::exp(lp_clean[t] - lp_sampler[t]), cap);
  }
  return w;
}

LossResult surrogate_loss_and_grad(const ParameterSet& params, const ParameterSet& params_ref,
                                   std::span<const GroupBatch> batches, const TrainConfig& cfg) {
  std::size_t n_rollouts = 0, n_tokens = 0;
  for (const GroupBatch& gb : batches) {
    n_rollouts += gb.rollouts.size();
    for (const Rollout& r : gb.rollouts) n_tokens += r.tokens.size();
  }
  if (n_rollouts == 0 || n_tokens == 0) throw InputError("surrogate_loss_and_grad: empty batch");

  LossResult res;
  res.grad = ParameterSet::zeros_like(params.config);
  double surrogate = 0.0;
  double kl_sum = 0.0;
  double tis_sum = 0.0;
  std::size_t tis_capped = 0;

  for (const GroupBatch& gb : batches) {
    std::vector<double> rewards;
    rewards.reserve(gb.rollouts.size());
    for (const Rollout& r : gb.rollouts) rewards.push_back(static_cast<double>(r.reward));
    const std::vector<double> adv = group_advantages(rewards, cfg.adv_eps);

    for (std::size_t i = 0; i < gb.rollouts.size(); ++i) {
      const Rollout& r = gb.rollouts[i];
      const double a = adv[i];
      const std::size_t len = r.tokens.size();
      std::vector<double> w(len, 1.0);
      if (!cfg.force_unit_tis) {
        w = tis_weights(r.lp_clean, r.lp_sampler_t1, cfg.tis_cap);
      }
      const std::vector<double> lp_cur =
          sequence_logprobs(params, r.task.prompt, r.tokens, 1.0);
      const std::vector<double> lp_ref =
          sequence_logprobs(params_ref, r.task.prompt, r.tokens, 1.0);

      std::vector<double> grad_coef(len, 0.0);
      double rollout_surr = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double ratio = std::exp(lp_cur[t] - r.lp_clean[t]);  // lp_clean == lp under theta_old
        const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        const double unclipped_term = ratio * a;
        const double clipped_term = clipped * a;
        rollout_surr += w[t] * std::min(unclipped_term, clipped_term);
        const bool active = unclipped_term <= clipped_term;
        if (active) {
          grad_coef[t] -= w[t] * a * ratio / (static_cast<double>(len) * n_rollouts);
        }
        grad_coef[t] += cfg.kl_coef / static_cast<double>(n_tokens);
        kl_sum += lp_cur[t] - lp_ref[t];
        tis_sum += w[t];
        if (std::isfinite(cfg.tis_cap) && w[t] >= cfg.tis_cap) ++tis_capped;
      }
      surrogate += rollout_surr / static_cast<double>(len);
      const GradientSet g = grad_weighted_logprob(params, r.task.prompt, r.tokens, grad_coef);
      for (int gi = 0; gi < kNumGroups; ++gi) {
        auto& dst = res.grad.groups[gi];
        const auto& src = g.groups[gi];
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
  }

  res.kl_to_ref = kl_sum / static_cast<double>(n_tokens);
  res.loss = -surrogate / static_cast<double>(n_rollouts) + cfg.kl_coef * res.kl_to_ref;
  res.mean_tis_weight = tis_sum / static_cast<double>(n_tokens);
  res.frac_tis_capped = static_cast<double>(tis_capped) / static_cast<double>(n_tokens);
  return res;
}

void optimizer_step(TrainerState& state, const GradientSet& grad, const TrainConfig& cfg) {
  if (!grad.all_finite()) throw TrainingError("nonfinite gradient; step refused");
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (int gi = 0; gi < kNumGroups; ++gi) {
    auto& p = state.params.groups[gi];
    auto& m = state.m.groups[gi];
    auto& v = state.v.groups[gi];
    const auto& g = grad.groups[gi];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      p[j] -= cfg.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
  }
}

IterationResult train_iteration(TrainerState& state, SchedulerState& sched,
                                const std::vector<TaskInstance>& tasks, const TrainConfig& cfg,
                                const NoiseSpec& base_noise, int iteration,
                                std::uint64_t master_seed) {
  cfg.validate();
  if (tasks.empty()) throw InputError("train_iteration: no tasks");
  IterationResult out;
  out.metrics.iteration = iteration;

  // (1) Variant II probes from the clean policy, excluded from the training batch.
  if (sched.mode == SchedulerMode::VariantII) {
    const int probe_len = std::max(1, cfg.max_completion_len / 2);
    std::vector<ProbePair> probes;
    probes.reserve(tasks.size());
    for (std::size_t q = 0; q < tasks.size(); ++q) {
      const std::uint64_t key =
          rng::derive(master_seed, kTagProbe, static_cast<std::uint64_t>(iteration) * 4096 + q);
      GroupBatch pb = generate_group(state.params, state.params, NoiseSpec{}, tasks[q], 2,
                                     cfg.temperature, probe_len, key);
      ProbePair pair;
      pair.o1 = pb.rollouts[0].tokens;
      pair.o2 = pb.rollouts[1].tokens;
      pair.sc1 = self_certainty(state.params, tasks[q].prompt, pair.o1);
      pair.sc2 = self_certainty(state.params, tasks[q].prompt, pair.o2);
      probes.push_back(std::move(pair));
    }
    out.metrics.v2 = update_variant2(sched, probes);
  }

  // (2) Perturb: one epsilon per iteration, shared across the whole batch.
  NoiseSpec spec = base_noise;
  spec.sigma = sched.sigma;
  spec.noise_seed = rng::derive(base_noise.noise_seed, kTagNoise, iteration);
  out.spec_used = spec;
  out.metrics.sigma = spec.sigma;

  ParameterSet noisy = perturb(state.params, spec);

  // (3) Rollout generation.
  double entropy_total = 0.0;
  std::size_t token_total = 0;
  double reward_total = 0.0;
  for (std::size_t q = 0; q < tasks.size(); ++q) {
    NoiseSpec qspec = spec;
    const ParameterSet* sampler = &noisy;
    ParameterSet per_query;
    if (cfg.per_query_noise) {
      qspec.noise_seed = rng::combine(spec.noise_seed, q + 1);
      per_query = perturb(state.params, qspec);
      sampler = &per_query;
    }
    const std::uint64_t key =
        rng::derive(master_seed, kTagRollout, static_cast<std::uint64_t>(iteration) * 4096 + q);
    GroupBatch gb = generate_group(state.params, *sampler, qspec, tasks[q], cfg.group_size,
                                   cfg.temperature, cfg.max_completion_len, key);
    gb.iteration = iteration;
    for (const Rollout& r : gb.rollouts) {
      entropy_total += r.entropy_sum;
      token_total += r.tokens.size();
      reward_total += r.reward;
    }
    out.batches.push_back(std::move(gb));
  }
  out.metrics.mean_reward =
      reward_total / static_cast<double>(tasks.size() * cfg.group_size);
  out.metrics.mean_entropy = entropy_total / static_cast<double>(token_total);

  // (4) Old-policy snapshot, once per rollout batch.
  state.params_old = state.params;

  // (5) Minibatch optimizer passes over contiguous task chunks.
  const int passes = std::min<int>(cfg.minibatch_passes, static_cast<int>(out.batches.size()));
  const std::size_t chunk = (out.batches.size() + passes - 1) / passes;
  double loss_sum = 0.0, kl_sum = 0.0, tis_sum = 0.0, capped_sum = 0.0, gnorm_sum = 0.0;
  int pass_count = 0;
  for (std::size_t begin = 0; begin < out.batches.size(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, out.batches.size());
    std::span<const GroupBatch> mb(out.batches.data() + begin, end - begin);
    LossResult lr = surrogate_loss_and_grad(state.params, state.params_ref, mb, cfg);
    if (!std::isfinite(lr.loss)) throw TrainingError("nonfinite loss");
    double gn = 0.0;
    for (const auto& g : lr.grad.groups) {
      for (double x : g) gn += x * x;
    }
    gnorm_sum += std::sqrt(gn);
    optimizer_step(state, lr.grad, cfg);
    loss_sum += lr.loss;
    kl_sum += lr.kl_to_ref;
    tis_sum += lr.mean_tis_weight;
    capped_sum += lr.frac_tis_capped;
    ++pass_count;
  }
  out.metrics.loss = loss_sum / pass_count;
  out.metrics.kl_to_ref = kl_sum / pass_count;
  out.metrics.mean_tis_weight = tis_sum / pass_count;
  out.metrics.frac_tis_capped = capped_sum / pass_count;
  out.metrics.grad_norm = gnorm_sum / pass_count;

  // (6) Retrospective sigma update from the measured divergence (Variant I).
  if (sched.mode == SchedulerMode::VariantI) {
    const double d = kl_divergence_estimate(state.params, noisy, out.batches);
    update_variant1(sched, d);
  }
  return out;
}

}  // namespace psnlab
