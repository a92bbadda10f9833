#include <cmath>

#include "doctest.h"
#include "psnlab/errors.hpp"
#include "psnlab/noise.hpp"
#include "psnlab/rng.hpp"

using namespace psnlab;

namespace {

ParameterSet base_params() {
  // Large MLP so the sampling-statistics oracle has ~1e4 entries.
  const PolicyConfig cfg{8, 16, 8, 2, 310, 5};
  ParameterSet p = init_params(cfg);
  REQUIRE(p.group(ParamGroup::Mlp).size() >= 10000);
  return p;
}

}  // namespace

TEST_CASE("sigma zero is the identity") {
  const ParameterSet p = base_params();
  NoiseSpec spec;
  spec.sigma = 0.0;
  spec.noise_seed = 9;
  const ParameterSet q = perturb(p, spec);
  for (int i = 0; i < kNumGroups; ++i) CHECK(q.groups[i] == p.groups[i]);
}

TEST_CASE("targeting perturbs only the chosen groups") {
  const ParameterSet p = base_params();
  NoiseSpec spec{0.01, NoiseSpec::mlp_only(), 42};
  const ParameterSet q = perturb(p, spec);
  CHECK(q.group(ParamGroup::Embed) == p.group(ParamGroup::Embed));
  CHECK(q.group(ParamGroup::Attn) == p.group(ParamGroup::Attn));
  CHECK(q.group(ParamGroup::Norm) == p.group(ParamGroup::Norm));
  CHECK(q.group(ParamGroup::Head) == p.group(ParamGroup::Head));
  CHECK(q.group(ParamGroup::Mlp) != p.group(ParamGroup::Mlp));
}

TEST_CASE("perturb is pure and leaves the input untouched") {
  const ParameterSet p = base_params();
  const std::vector<double> before = p.flatten();
  NoiseSpec spec{0.004, NoiseSpec::all_groups(), 7};
  const ParameterSet a = perturb(p, spec);
  const ParameterSet b = perturb(p, spec);
  CHECK(p.flatten() == before);
  CHECK(a.flatten() == b.flatten());
  spec.noise_seed = 8;
  CHECK(perturb(p, spec).flatten() != a.flatten());
}

TEST_CASE("perturbation deltas match Gaussian sampling statistics") {
  const double sigma = 0.004;
  const ParameterSet p = base_params();
  const NoiseSpec spec{sigma, NoiseSpec::mlp_only(), 1234};
  const ParameterSet q = perturb(p, spec);
  const auto& a = p.group(ParamGroup::Mlp);
  const auto& b = q.group(ParamGroup::Mlp);
  const double n = static_cast<double>(a.size());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    sum += d;
    sum_sq += d * d;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean) < 4.0 * sigma / std::sqrt(n));
  CHECK(std::abs(sd - sigma) < 0.05 * sigma);
}

TEST_CASE("invalid specs and params are rejected") {
  ParameterSet p = base_params();
  CHECK_THROWS_AS(perturb(p, NoiseSpec{-0.1, NoiseSpec::mlp_only(), 0}), ConfigError);
  CHECK_THROWS_AS(perturb(p, NoiseSpec{0.1, {}, 0}), ConfigError);
  p.group(ParamGroup::Head)[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(perturb(p, NoiseSpec{0.1, NoiseSpec::mlp_only(), 0}), InputError);
}

TEST_CASE("perturbation_report") {
  const ParameterSet p = base_params();
  SUBCASE("identical inputs give an all-zero report") {
    for (const auto& s : perturbation_report(p, p)) {
      CHECK(s.l2 == 0.0);
      CHECK(s.mean == 0.0);
      CHECK(s.std_dev == 0.0);
    }
  }
  SUBCASE("a single +1 entry shows up as that group's L2") {
    ParameterSet q = p;
    q.group(ParamGroup::Head)[3] += 1.0;
    for (const auto& s : perturbation_report(p, q)) {
      if (s.group == "head") {
        CHECK(s.l2 == doctest::Approx(1.0));
      } else {
        CHECK(s.l2 == 0.0);
      }
    }
  }
  SUBCASE("reported std agrees with direct recomputation") {
    const NoiseSpec spec{0.02, NoiseSpec::mlp_only(), 77};
    const ParameterSet q = perturb(p, spec);
    const auto report = perturbation_report(p, q);
    const auto& a = p.group(ParamGroup::Mlp);
    const auto& b = q.group(ParamGroup::Mlp);
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += (b[i] - a[i]);
    mean /= static_cast<double>(a.size());
    double var = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      var += (b[i] - a[i] - mean) * (b[i] - a[i] - mean);
    }
    var /= static_cast<double>(a.size());
    for (const auto& s : report) {
      if (s.group == "mlp") CHECK(s.std_dev == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
    }
  }
}
