#include "psnlab/rollout.hpp"

#include <cmath>
#include <sstream>

#include "psnlab/errors.hpp"
#include "psnlab/rng.hpp"

#include "json.hpp"

namespace psnlab {

namespace {

// One autoregressive sample from the noisy policy. Log-probs are computed with
// the same log-softmax path as sequence_logprobs so post-hoc rescoring
// reproduces them exactly.
Rollout sample_one(const ParameterSet& noisy_params, const TaskInstance& task, double temperature,
                   int max_len, std::uint64_t key) {
  Rollout r;
  r.task = task;
  rng::Stream stream(key);
  TokenSeq prefix = task.prompt;
  for (int step = 0; step < max_len; ++step) {
    std::vector<double> logits = forward_logits(noisy_params, prefix);
    std::vector<double> logits_t = logits;
    if (temperature != 1.0) {
      for (double& x : logits_t) x /= temperature;
    }
    const std::vector<double> lp_t = log_softmax(logits_t);
    const std::vector<double> probs = softmax(logits_t);

    double entropy = 0.0;
    for (std::size_t v = 0; v < probs.size(); ++v) entropy -= probs[v] * lp_t[v];
    r.entropy_sum += entropy;

    const double u = stream.uniform();
    int token = static_cast<int>(probs.size()) - 1;
    double cum = 0.0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      cum += probs[v];
      if (u < cum) {
        token = static_cast<int>(v);
        break;
      }
    }

    r.tokens.push_back(token);
    r.lp_sampler.push_back(lp_t[token]);
    r.lp_sampler_t1.push_back(temperature == 1.0 ? lp_t[token] : log_softmax(logits)[token]);
    prefix.push_back(token);
    if (token == tok::kEos) break;
  }
  r.truncated = static_cast<int>(r.tokens.size()) == max_len && r.tokens.back() != tok::kEos;
  return r;
}

}  // namespace

GroupBatch generate_group(const ParameterSet& clean_params, const ParameterSet& noisy_params,
                          const NoiseSpec& spec, const TaskInstance& task, int group_size,
                          double temperature, int max_len, std::uint64_t rng_seed) {
  if (group_size < 2) throw ConfigError("group size must be >= 2");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (static_cast<int>(task.prompt.size()) + max_len > clean_params.config.context_len) {
    throw ConfigError("prompt + max_len exceeds context_len");
  }
  GroupBatch batch;
  batch.task = task;
  batch.noise_spec_used = spec;
  batch.rollouts.reserve(group_size);
  for (int g = 0; g < group_size; ++g) {
    Rollout r = sample_one(noisy_params, task, temperature, max_len, rng::derive(rng_seed, 0x601u, g));
    r.lp_clean = sequence_logprobs(clean_params, task.prompt, r.tokens, 1.0);
    Verdict v = verify(task, r.tokens);
    r.reward = r.truncated ? 0 : v.reward;
    r.op_sequence = v.op_sequence;
    batch.rollouts.push_back(std::move(r));
  }
  return batch;
}

std::vector<double> rescore(const ParameterSet& params, const Rollout& rollout) {
  return sequence_logprobs(params, rollout.task.prompt, rollout.tokens, 1.0);
}

std::string rollout_log_line(const Rollout& r, int iteration, double sigma,
                             const NoiseSpec& spec) {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["task_seed"] = r.task.instance_seed;
  j["env_id"] = env_name(r.task.env_id);
  j["tokens"] = r.tokens;
  j["lp_sampler"] = r.lp_sampler;
  j["lp_clean"] = r.lp_clean;
  j["reward"] = r.reward;
  j["op_sequence"] = r.op_sequence;
  j["truncated"] = r.truncated;
  j["sigma"] = sigma;
  std::vector<std::string> groups;
  for (ParamGroup g : spec.target_groups) groups.push_back(group_name(g));
  j["target_groups"] = groups;
  return j.dump();
}

}  // namespace psnlab
