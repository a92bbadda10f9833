#include "psnlab/evaluation.hpp"

#include <algorithm>
#include <set>

#include "psnlab/embedding.hpp"
#include "psnlab/errors.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

double pass_at_k(int n, int c, int k) {
  if (c < 0 || c > n) throw InputError("pass_at_k: require 0 <= c <= n");
  if (k < 1 || k > n) throw InputError("pass_at_k: require 1 <= k <= n");
  if (n - c < k) return 1.0;  // every k-subset contains a correct completion
  double miss = 1.0;
  for (int i = 0; i < k; ++i) {
    miss *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  }
  return 1.0 - miss;
}

double pass_at_k_dataset(const std::vector<EvalRecord>& records, int k) {
  if (records.empty()) throw InputError("pass_at_k_dataset: no records");
  double sum = 0.0;
  for (const EvalRecord& r : records) {
    if (r.n < k) throw InputError("pass_at_k_dataset: record with n < k");
    sum += pass_at_k(r.n, r.c, k);
  }
  return sum / static_cast<double>(records.size());
}

SemanticDiversity semantic_diversity(const std::vector<TokenSeq>& rollout_texts) {
  if (rollout_texts.size() < 2) throw InputError("semantic_diversity: need >= 2 rollouts");
  std::vector<std::vector<double>> embeds;
  embeds.reserve(rollout_texts.size());
  for (const TokenSeq& t : rollout_texts) embeds.push_back(embed_text(t));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < embeds.size(); ++i) {
    for (std::size_t j = i + 1; j < embeds.size(); ++j) {
      sum += cosine(embeds[i], embeds[j]);
      ++pairs;
    }
  }
  SemanticDiversity out;
  out.mean_pairwise_cosine = sum / static_cast<double>(pairs);
  out.diversity = 1.0 - out.mean_pairwise_cosine;
  return out;
}

double operation_diversity(const std::vector<std::vector<std::string>>& op_sequences) {
  if (op_sequences.empty()) throw InputError("operation_diversity: empty input");
  std::set<std::vector<std::string>> distinct(op_sequences.begin(), op_sequences.end());
  return static_cast<double>(distinct.size()) / static_cast<double>(op_sequences.size());
}

double passk_unbiasedness_check(int n, int c, int k, int trials, std::uint64_t seed) {
  if (c < 0 || c > n) throw InputError("passk_unbiasedness_check: require 0 <= c <= n");
  if (k < 1 || k > n) throw InputError("passk_unbiasedness_check: require 1 <= k <= n");
  rng::Stream stream(rng::derive(seed, 0xACEu));
  int hits = 0;
  std::vector<int> pool(n);
  for (int trial = 0; trial < trials; ++trial) {
    for (int i = 0; i < n; ++i) pool[i] = i;
    bool hit = false;
    // Partial Fisher-Yates: draw k without replacement; items < c are correct.
    for (int i = 0; i < k && !hit; ++i) {
      const int j = i + static_cast<int>(stream.below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
      hit = pool[i] < c;
    }
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace psnlab
