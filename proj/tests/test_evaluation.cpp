#include <algorithm>
#include <cmath>

#include <boost/multiprecision/cpp_int.hpp>

#include "doctest.h"
#include "psnlab/errors.hpp"
#include "psnlab/evaluation.hpp"

using namespace psnlab;

namespace {

// Exact rational oracle: pass@k = 1 - C(n-c, k)/C(n, k) in big-integer
// arithmetic, rounded to double only at the very end.
double passk_oracle(int n, int c, int k) {
  using boost::multiprecision::cpp_int;
  if (n - c < k) return 1.0;
  cpp_int num = 1, den = 1;
  for (int i = 0; i < k; ++i) {
    num *= (n - c - i);
    den *= (n - i);
  }
  const cpp_int scale = cpp_int(1) << 80;
  const cpp_int q = (cpp_int(num) * scale) / den;
  return 1.0 - static_cast<double>(q.convert_to<long double>() /
                                   static_cast<long double>(std::pow(2.0L, 80)));
}

}  // namespace

TEST_CASE("pass@k boundary values") {
  CHECK(pass_at_k(10, 0, 5) == 0.0);
  CHECK(pass_at_k(10, 10, 1) == 1.0);
  CHECK(pass_at_k(5, 3, 3) == 1.0);  // n - c < k: certain hit
  CHECK(pass_at_k(5, 0, 5) == 0.0);
  CHECK(pass_at_k(1, 1, 1) == 1.0);
  CHECK(pass_at_k(1, 0, 1) == 0.0);
}

TEST_CASE("pass@k worked example: n=5, c=2, k=2 gives 0.7") {
  // miss = (3/5)(2/4) = 0.3
  CHECK(pass_at_k(5, 2, 2) == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("pass@1 equals the plain accuracy c/n") {
  for (int n : {3, 10, 300}) {
    for (int c = 0; c <= n; c += std::max(1, n / 7)) {
      CHECK(pass_at_k(n, c, 1) == doctest::Approx(static_cast<double>(c) / n).epsilon(1e-15));
    }
  }
}

TEST_CASE("pass@k is monotone in k and in c") {
  for (int k = 1; k < 20; ++k) CHECK(pass_at_k(20, 3, k + 1) >= pass_at_k(20, 3, k));
  for (int c = 0; c < 20; ++c) CHECK(pass_at_k(20, c + 1, 4) >= pass_at_k(20, c, 4));
}

TEST_CASE("pass@k matches the exact big-integer oracle") {
  // Dense sweep over small n plus the evaluation-protocol shape n=300, large k.
  for (int n = 1; n <= 24; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        CHECK(std::abs(pass_at_k(n, c, k) - passk_oracle(n, c, k)) <= 1e-12);
      }
    }
  }
  for (int c : {0, 1, 7, 50, 150, 299, 300}) {
    for (int k : {1, 8, 32, 128, 256, 300}) {
      CHECK(std::abs(pass_at_k(300, c, k) - passk_oracle(300, c, k)) <= 1e-12);
    }
  }
}

TEST_CASE("pass@k input validation") {
  CHECK_THROWS_AS(pass_at_k(5, -1, 1), InputError);
  CHECK_THROWS_AS(pass_at_k(5, 6, 1), InputError);
  CHECK_THROWS_AS(pass_at_k(5, 2, 0), InputError);
  CHECK_THROWS_AS(pass_at_k(5, 2, 6), InputError);
}

TEST_CASE("Monte Carlo resampling agrees with the closed form") {
  const int trials = 100000;
  const double est = passk_unbiasedness_check(20, 5, 4, trials, 77);
  const double exact = pass_at_k(20, 5, 4);
  CHECK(std::abs(est - exact) < 0.005);
  // Degenerate corners are exact under resampling too.
  CHECK(passk_unbiasedness_check(10, 0, 3, 1000, 1) == 0.0);
  CHECK(passk_unbiasedness_check(10, 10, 1, 1000, 1) == 1.0);
}

TEST_CASE("dataset-level pass@k") {
  EvalRecord a;
  a.n = 5;
  a.c = 1;  // pass@1 = 0.2
  EvalRecord b;
  b.n = 5;
  b.c = 4;  // pass@1 = 0.8
  CHECK(pass_at_k_dataset({a}, 1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(pass_at_k_dataset({a, b}, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(pass_at_k_dataset({}, 1), InputError);
  EvalRecord small;
  small.n = 2;
  small.c = 1;
  CHECK_THROWS_AS(pass_at_k_dataset({small}, 3), InputError);
}

TEST_CASE("semantic diversity") {
  const TokenSeq x = {tok::kAdd1, tok::kAns, tok::kEos};
  const TokenSeq y = {tok::kMul3, tok::kMul2, tok::kAns, tok::kEos};
  SUBCASE("identical rollouts give cosine 1, diversity 0") {
    const SemanticDiversity d = semantic_diversity({x, x, x});
    CHECK(d.mean_pairwise_cosine == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.diversity == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("mixed rollouts land strictly between the extremes") {
    const SemanticDiversity d = semantic_diversity({x, y});
    CHECK(d.mean_pairwise_cosine >= 0.0);
    CHECK(d.mean_pairwise_cosine < 1.0);
    CHECK(d.diversity == doctest::Approx(1.0 - d.mean_pairwise_cosine).epsilon(1e-15));
  }
  SUBCASE("the mean runs over all unordered pairs") {
    // For {x, x, y}: pairs (x,x), (x,y), (x,y) -> (1 + 2 cos(x,y)) / 3.
    const double cxy = semantic_diversity({x, y}).mean_pairwise_cosine;
    const double m = semantic_diversity({x, x, y}).mean_pairwise_cosine;
    CHECK(m == doctest::Approx((1.0 + 2.0 * cxy) / 3.0).epsilon(1e-12));
  }
  SUBCASE("fewer than two rollouts is an error") {
    CHECK_THROWS_AS(semantic_diversity({x}), InputError);
  }
}

TEST_CASE("operation diversity") {
  const std::vector<std::string> p = {"+1", "x2"};
  const std::vector<std::string> q = {"x2", "+1"};  // order matters
  CHECK(operation_diversity({p, p, p, p}) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(operation_diversity({p, q}) == 1.0);
  CHECK(operation_diversity({p}) == 1.0);
  CHECK_THROWS_AS(operation_diversity({}), InputError);
  // Permutation invariance of the input list.
  std::vector<std::vector<std::string>> seqs = {p, q, p, {"+3"}, {}, q};
  const double base = operation_diversity(seqs);
  std::sort(seqs.begin(), seqs.end());
  do {
    CHECK(operation_diversity(seqs) == base);
  } while (std::next_permutation(seqs.begin(), seqs.end()));
}
