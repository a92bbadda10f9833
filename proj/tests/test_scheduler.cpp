#include <cmath>

#include "doctest.h"
#include "psnlab/embedding.hpp"
#include "psnlab/errors.hpp"
#include "psnlab/scheduler.hpp"

using namespace psnlab;

namespace {

// A 4-token policy whose next-token distribution is exactly `probs` at every
// position: zero everything, then set the head bias to log(probs).
ParameterSet fixed_distribution_policy(const std::vector<double>& probs) {
  const PolicyConfig cfg{static_cast<int>(probs.size()), 8, 4, 0, 1, 1};
  ParameterSet p = init_params(cfg);
  for (auto& g : p.groups) std::fill(g.begin(), g.end(), 0.0);
  auto& head = p.group(ParamGroup::Head);
  for (std::size_t v = 0; v < probs.size(); ++v) {
    head[cfg.vocab_size * cfg.d_model + v] = std::log(probs[v]);
  }
  return p;
}

}  // namespace

TEST_CASE("categorical_kl hand values") {
  const double kl = categorical_kl({0.9, 0.1}, {0.5, 0.5});
  CHECK(kl == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-14));
  CHECK(kl == doctest::Approx(0.3680642071684971).epsilon(1e-12));
  CHECK(categorical_kl({0.25, 0.75}, {0.25, 0.75}) == 0.0);
  // Zero p-entries contribute nothing.
  CHECK(categorical_kl({0.0, 1.0}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  // Asymmetric in general.
  CHECK(categorical_kl({0.5, 0.5}, {0.9, 0.1}) != doctest::Approx(kl).epsilon(1e-6));
  CHECK_THROWS_AS(categorical_kl({1.0}, {0.5, 0.5}), InputError);
}

TEST_CASE("kl_divergence_estimate is zero for identical policies") {
  const PolicyConfig cfg{tok::kVocabSize, 48, 16, 1, 24, 2};
  const ParameterSet p = init_params(cfg);
  const TaskInstance task = sample_task(EnvId::ModChain, 1, 3);
  std::vector<GroupBatch> batch = {generate_group(p, p, NoiseSpec{}, task, 4, 1.0, 10, 2)};
  CHECK(kl_divergence_estimate(p, p, batch) == 0.0);
  CHECK_THROWS_AS(kl_divergence_estimate(p, p, std::vector<GroupBatch>{}), InputError);
}

TEST_CASE("kl_divergence_estimate grows with the noise scale") {
  const PolicyConfig cfg{tok::kVocabSize, 48, 16, 1, 24, 2};
  const ParameterSet p = init_params(cfg);
  const TaskInstance task = sample_task(EnvId::ModChain, 2, 4);
  double mean_small = 0.0, mean_large = 0.0;
  int larger_wins = 0;
  const int n_seeds = 10;
  for (std::uint64_t s = 0; s < n_seeds; ++s) {
    const NoiseSpec small{0.005, NoiseSpec::mlp_only(), s};
    const NoiseSpec large{0.05, NoiseSpec::mlp_only(), s};
    const ParameterSet qs = perturb(p, small);
    const ParameterSet ql = perturb(p, large);
    std::vector<GroupBatch> bs = {generate_group(p, qs, small, task, 4, 1.0, 10, s)};
    std::vector<GroupBatch> bl = {generate_group(p, ql, large, task, 4, 1.0, 10, s)};
    const double ks = kl_divergence_estimate(p, qs, bs);
    const double kl = kl_divergence_estimate(p, ql, bl);
    CHECK(ks >= 0.0);
    CHECK(kl >= 0.0);
    mean_small += ks;
    mean_large += kl;
    if (kl > ks) ++larger_wins;
  }
  CHECK(mean_large > mean_small);
  CHECK(larger_wins >= 8);
}

TEST_CASE("Variant I update: worked example, boundary, and clamping") {
  SchedulerState s = SchedulerState::make(SchedulerMode::VariantI, 0.004, 1.01, 0.03, 0);
  SUBCASE("divergence under target scales sigma up by beta") {
    update_variant1(s, 0.02);
    CHECK(s.sigma == doctest::Approx(0.00404).epsilon(1e-14));
  }
  SUBCASE("the comparison is inclusive at the target") {
    update_variant1(s, 0.03);
    CHECK(s.sigma == doctest::Approx(0.004 * 1.01).epsilon(1e-14));
  }
  SUBCASE("divergence above target scales sigma down") {
    update_variant1(s, 0.0301);
    CHECK(s.sigma == doctest::Approx(0.004 / 1.01).epsilon(1e-14));
  }
  SUBCASE("sigma is clamped to [0.8, 1.2] of its initial value") {
    for (int i = 0; i < 100; ++i) update_variant1(s, 0.0);
    CHECK(s.sigma == doctest::Approx(0.0048).epsilon(1e-12));
    for (int i = 0; i < 200; ++i) update_variant1(s, 1.0);
    CHECK(s.sigma == doctest::Approx(0.0032).epsilon(1e-12));
  }
  SUBCASE("negative divergence is rejected") {
    CHECK_THROWS_AS(update_variant1(s, -1e-9), InputError);
  }
}

TEST_CASE("scheduler construction validates its inputs") {
  CHECK_THROWS_AS(SchedulerState::make(SchedulerMode::Fixed, -0.1, 1.01, 0.03, 0), ConfigError);
  CHECK_THROWS_AS(SchedulerState::make(SchedulerMode::Fixed, 0.1, 1.0, 0.03, 0), ConfigError);
  CHECK_THROWS_AS(SchedulerState::make(SchedulerMode::Fixed, 0.1, 1.01, -0.1, 0), ConfigError);
  CHECK(scheduler_mode_from_name("VariantII") == SchedulerMode::VariantII);
  CHECK_THROWS_AS(scheduler_mode_from_name("variant2"), ConfigError);
  CHECK(scheduler_mode_name(SchedulerMode::VariantI) == std::string("VariantI"));
}

TEST_CASE("self-certainty hand values") {
  SUBCASE("uniform distribution gives zero") {
    const ParameterSet p = fixed_distribution_policy({0.25, 0.25, 0.25, 0.25});
    CHECK(self_certainty(p, {0}, {1, 2}) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("worked example at V=4, p=(0.7,0.1,0.1,0.1)") {
    const ParameterSet p = fixed_distribution_policy({0.7, 0.1, 0.1, 0.1});
    const double expected =
        -std::log(4.0) - 0.25 * (std::log(0.7) + 3.0 * std::log(0.1));
    CHECK(expected == doctest::Approx(0.4298).epsilon(1e-3));
    CHECK(self_certainty(p, {0}, {1, 2, 3}) == doctest::Approx(expected).epsilon(1e-10));
  }
  SUBCASE("sharper distributions score higher") {
    const double sc_soft =
        self_certainty(fixed_distribution_policy({0.4, 0.2, 0.2, 0.2}), {0}, {1});
    const double sc_sharp =
        self_certainty(fixed_distribution_policy({0.97, 0.01, 0.01, 0.01}), {0}, {1});
    CHECK(sc_sharp > sc_soft);
    CHECK(sc_soft > 0.0);
  }
  SUBCASE("empty completion is rejected") {
    const ParameterSet p = fixed_distribution_policy({0.25, 0.25, 0.25, 0.25});
    CHECK_THROWS_AS(self_certainty(p, {0}, {}), InputError);
  }
}

TEST_CASE("running min-max normalization of self-certainty") {
  SchedulerState s = SchedulerState::make(SchedulerMode::VariantII, 0.004, 1.01, 0.03, 0);
  // First observation defines both extrema: normalized value is 0.
  CHECK(normalize_sc(s, 2.0) == 0.0);
  // A new maximum normalizes to ~1 (extrema updated before the ratio).
  CHECK(normalize_sc(s, 3.0) == doctest::Approx(1.0).epsilon(1e-7));
  // A midpoint lands at ~0.5.
  CHECK(normalize_sc(s, 2.5) == doctest::Approx(0.5).epsilon(1e-7));
  // A new minimum normalizes to 0 and widens the range.
  CHECK(normalize_sc(s, 1.0) == 0.0);
  CHECK(s.sc_min == 1.0);
  CHECK(s.sc_max == 3.0);
  CHECK(normalize_sc(s, 2.0) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK_THROWS_AS(normalize_sc(s, -1.0), InputError);
}

TEST_CASE("Variant II composite-indicator update") {
  const TokenSeq same = {tok::kAdd1, tok::kAns, tok::kEos};
  const ProbePair identical{same, same, 2.0, 2.0};

  SUBCASE("empty history reads as mean 0 and always increases sigma") {
    SchedulerState s = SchedulerState::make(SchedulerMode::VariantII, 0.004, 1.01, 0.03, 0);
    const Variant2Metrics m = update_variant2(s, {identical});
    CHECK(m.indicator_hist_mean == 0.0);
    CHECK(m.d_sem_mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.sc_mean == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(m.sc_norm == 0.0);  // first normalization call
    CHECK(m.indicator == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.sigma == doctest::Approx(0.004 * 1.01).epsilon(1e-14));
    REQUIRE(s.ind_history.size() == 1);
    CHECK(s.ind_history[0] == m.indicator);
  }

  SUBCASE("history mean above the indicator decreases sigma") {
    SchedulerState s = SchedulerState::make(SchedulerMode::VariantII, 0.004, 1.01, 0.03, 0);
    s.ind_history = {1.2};
    const Variant2Metrics m = update_variant2(s, {identical});
    CHECK(m.indicator_hist_mean == doctest::Approx(1.2));
    CHECK(m.indicator == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.sigma == doctest::Approx(0.004 / 1.01).epsilon(1e-14));
  }

  SUBCASE("the comparison is inclusive at equality") {
    SchedulerState s = SchedulerState::make(SchedulerMode::VariantII, 0.004, 1.01, 0.03, 0);
    s.ind_history = {1.0};
    update_variant2(s, {identical});  // indicator is exactly sc_norm(0) + 1.0
    CHECK(s.sigma == doctest::Approx(0.004 * 1.01).epsilon(1e-14));
  }

  SUBCASE("repeated increases are clamped at 1.2 sigma_init") {
    SchedulerState s = SchedulerState::make(SchedulerMode::VariantII, 0.004, 1.01, 0.03, 0);
    for (int i = 0; i < 100; ++i) {
      s.ind_history.clear();  // force the increase branch each time
      update_variant2(s, {identical});
    }
    CHECK(s.sigma == doctest::Approx(0.0048).epsilon(1e-12));
  }

  SUBCASE("history cap keeps a sliding window") {
    SchedulerState s = SchedulerState::make(SchedulerMode::VariantII, 0.004, 1.01, 0.03, 2);
    for (int i = 0; i < 5; ++i) update_variant2(s, {identical});
    CHECK(s.ind_history.size() == 2);
  }

  SUBCASE("dissimilar probes lower the semantic term") {
    SchedulerState s = SchedulerState::make(SchedulerMode::VariantII, 0.004, 1.01, 0.03, 0);
    const ProbePair mixed{{tok::kAdd1, tok::kAns, tok::kEos},
                          {tok::kMul3, tok::kMul2, tok::kAns, tok::kEos},
                          1.0,
                          3.0};
    const Variant2Metrics m = update_variant2(s, {identical, mixed});
    CHECK(m.d_sem_mean < 1.0);
    CHECK(m.d_sem_mean > 0.0);
    CHECK(m.sc_mean == doctest::Approx(0.5 * (2.0 + 2.0)).epsilon(1e-14));
  }

  SUBCASE("no probes is an error") {
    SchedulerState s = SchedulerState::make(SchedulerMode::VariantII, 0.004, 1.01, 0.03, 0);
    CHECK_THROWS_AS(update_variant2(s, {}), InputError);
  }
}

TEST_CASE("hashed n-gram embedding") {
  const TokenSeq a = {3, tok::kPlus, 4, tok::kArrow, 7};
  SUBCASE("unit norm and determinism") {
    const std::vector<double> e1 = embed_text(a);
    const std::vector<double> e2 = embed_text(a);
    CHECK(e1 == e2);
    REQUIRE(e1.size() == kEmbedDim);
    double norm = 0.0;
    for (double x : e1) norm += x * x;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("identical sequences have cosine 1; disjoint unigrams, cosine 0") {
    CHECK(semantic_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    // Single-token sequences have exactly one n-gram each; a zero cosine
    // also certifies the two hash buckets are distinct at dim 256.
    CHECK(semantic_similarity({0}, {1}) == 0.0);
  }
  SUBCASE("shared structure scores between the extremes") {
    const double sim = semantic_similarity(a, {3, tok::kPlus, 4, tok::kArrow, 8});
    CHECK(sim > 0.0);
    CHECK(sim < 1.0);
  }
  SUBCASE("empty input is rejected") {
    CHECK_THROWS_AS(embed_text({}), InputError);
    CHECK_THROWS_AS(semantic_similarity({}, a), InputError);
  }
}
