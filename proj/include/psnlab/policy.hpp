#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace psnlab {

using TokenSeq = std::vector<int>;

struct PolicyConfig {
  int vocab_size = 0;
  int context_len = 0;
  int d_model = 0;
  int n_blocks = 0;
  int d_mlp = 0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  bool operator==(const PolicyConfig&) const = default;
};

// Named parameter groups; the injection-site partition for parameter noise.
enum class ParamGroup : int { Embed = 0, Attn = 1, Mlp = 2, Norm = 3, Head = 4 };
inline constexpr int kNumGroups = 5;
inline constexpr std::array<ParamGroup, kNumGroups> kGroupOrder = {
    ParamGroup::Embed, ParamGroup::Attn, ParamGroup::Mlp, ParamGroup::Norm, ParamGroup::Head};

const char* group_name(ParamGroup g);
ParamGroup group_from_name(const std::string& name);  // throws ConfigError on unknown name

// Parameters (or a gradient with identical layout) as five flat arrays in
// canonical group order: embed, attn, mlp, norm, head.
struct ParameterSet {
  PolicyConfig config;
  std::array<std::vector<double>, kNumGroups> groups;

  std::vector<double>& group(ParamGroup g) { return groups[static_cast<int>(g)]; }
  const std::vector<double>& group(ParamGroup g) const { return groups[static_cast<int>(g)]; }

  std::size_t total_dim() const;
  bool all_finite() const;

  std::vector<double> flatten() const;
  static ParameterSet unflatten(const PolicyConfig& cfg, const std::vector<double>& flat);

  // Shape-identical zero set for the same config.
  static ParameterSet zeros_like(const PolicyConfig& cfg);
};

using GradientSet = ParameterSet;

// Expected flat size of each group under cfg.
std::array<std::size_t, kNumGroups> group_sizes(const PolicyConfig& cfg);

// Deterministic initialization: zero-mean draws with scale 1/sqrt(fan_in)
// per weight matrix, zero biases and unit norm gains.
ParameterSet init_params(const PolicyConfig& cfg);

// Logits over the vocabulary for the next token after `prefix`.
std::vector<double> forward_logits(const ParameterSet& params, const TokenSeq& prefix);

// softmax(logits / temperature); sums to 1 within 1e-12.
std::vector<double> token_distribution(const ParameterSet& params, const TokenSeq& prefix,
                                       double temperature);

// Per-token log-probabilities of `completion` given `prompt`, at the given
// temperature. Entry t conditions on prompt ++ completion[<t].
std::vector<double> sequence_logprobs(const ParameterSet& params, const TokenSeq& prompt,
                                      const TokenSeq& completion, double temperature);

// Analytic gradient of sum_t weights[t] * log pi(completion[t] | prompt, completion[<t])
// at temperature 1, by backpropagation through the forward pass.
GradientSet grad_weighted_logprob(const ParameterSet& params, const TokenSeq& prompt,
                                  const TokenSeq& completion, const std::vector<double>& weights);

// Numerically stable helpers shared across modules.
std::vector<double> softmax(const std::vector<double>& logits);
std::vector<double> log_softmax(const std::vector<double>& logits);

// Checkpoint format: magic "PSNCKPT1", six little-endian u64 header fields
// (vocab_size, context_len, d_model, n_blocks, d_mlp, seed), u64 total_dim,
// then total_dim little-endian f64 values in canonical group order.
void save_params(const ParameterSet& params, const std::string& path);
ParameterSet load_params(const std::string& path);

}  // namespace psnlab
