#pragma once

#include <vector>

#include "psnlab/policy.hpp"

namespace psnlab {

inline constexpr int kEmbedDim = 256;

// Deterministic hashed token n-gram embedding (n in {1,2,3}), L2-normalized.
// Stands in for a sentence-embedding model over the formal token CoT.
std::vector<double> embed_text(const TokenSeq& tokens);

// Cosine of embed_text outputs; in [-1, 1] (here [0, 1], counts are nonnegative).
double semantic_similarity(const TokenSeq& a, const TokenSeq& b);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace psnlab
