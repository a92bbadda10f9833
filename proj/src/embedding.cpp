#include "psnlab/embedding.hpp"

#include <cmath>

#include "psnlab/errors.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

namespace {
constexpr std::uint64_t kHashSeed = 0x5EEDC0DEULL;
}

std::vector<double> embed_text(const TokenSeq& tokens) {
  if (tokens.empty()) throw InputError("embed_text: empty token sequence");
  std::vector<double> v(kEmbedDim, 0.0);
  for (int n = 1; n <= 3; ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::uint64_t h = rng::derive(kHashSeed, static_cast<std::uint64_t>(n));
      for (int j = 0; j < n; ++j) {
        h = rng::combine(h, static_cast<std::uint64_t>(tokens[i + j]) + 1);
      }
      v[h % kEmbedDim] += 1.0;
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InputError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

double semantic_similarity(const TokenSeq& a, const TokenSeq& b) {
  return cosine(embed_text(a), embed_text(b));
}

}  // namespace psnlab
