#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psnlab/env.hpp"
#include "psnlab/policy.hpp"

namespace psnlab {

struct EvalRecord {
  TaskInstance task;
  int n = 0;  // total completions sampled
  int c = 0;  // correct count
  std::vector<TokenSeq> rollout_texts;
  std::vector<std::vector<std::string>> op_sequences;
};

// Unbiased pass@k: 1 - C(n-c, k)/C(n, k), computed in stable product form.
double pass_at_k(int n, int c, int k);

// Mean of per-record pass@k over the dataset.
double pass_at_k_dataset(const std::vector<EvalRecord>& records, int k);

struct SemanticDiversity {
  double mean_pairwise_cosine = 0.0;
  double diversity = 0.0;  // 1 - mean cosine; higher = more diverse
};

SemanticDiversity semantic_diversity(const std::vector<TokenSeq>& rollout_texts);

// Fraction of distinct operation sequences.
double operation_diversity(const std::vector<std::vector<std::string>>& op_sequences);

// Monte Carlo resampling oracle for the closed-form estimator: fraction of
// `trials` draws of k-of-n without replacement containing >= 1 correct.
double passk_unbiasedness_check(int n, int c, int k, int trials, std::uint64_t seed);

}  // namespace psnlab
