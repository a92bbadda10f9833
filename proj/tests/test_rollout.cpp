#include <cmath>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "psnlab/errors.hpp"
#include "psnlab/rollout.hpp"
#include "psnlab/rng.hpp"

using namespace psnlab;

namespace {

PolicyConfig small_cfg() { return PolicyConfig{tok::kVocabSize, 48, 16, 1, 24, 3}; }

TaskInstance small_task() { return sample_task(EnvId::ModChain, 1, 5); }

}  // namespace

TEST_CASE("generate_group is deterministic in its seed") {
  const ParameterSet p = init_params(small_cfg());
  const NoiseSpec spec{0.01, NoiseSpec::mlp_only(), 4};
  const ParameterSet q = perturb(p, spec);
  const TaskInstance task = small_task();
  const GroupBatch a = generate_group(p, q, spec, task, 4, 1.0, 12, 77);
  const GroupBatch b = generate_group(p, q, spec, task, 4, 1.0, 12, 77);
  REQUIRE(a.rollouts.size() == 4);
  for (int g = 0; g < 4; ++g) {
    CHECK(a.rollouts[g].tokens == b.rollouts[g].tokens);
    CHECK(a.rollouts[g].lp_sampler == b.rollouts[g].lp_sampler);
    CHECK(a.rollouts[g].lp_clean == b.rollouts[g].lp_clean);
    CHECK(a.rollouts[g].reward == b.rollouts[g].reward);
  }
  // A different seed changes at least one rollout.
  const GroupBatch c = generate_group(p, q, spec, task, 4, 1.0, 12, 78);
  bool any_diff = false;
  for (int g = 0; g < 4; ++g) any_diff |= (a.rollouts[g].tokens != c.rollouts[g].tokens);
  CHECK(any_diff);
}

TEST_CASE("rollout invariants: length, EOS position, truncation, reward") {
  const ParameterSet p = init_params(small_cfg());
  const TaskInstance task = small_task();
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const GroupBatch b = generate_group(p, p, NoiseSpec{}, task, 8, 1.2, 10, seed);
    for (const Rollout& r : b.rollouts) {
      REQUIRE(!r.tokens.empty());
      CHECK(r.tokens.size() <= 10);
      CHECK(r.lp_sampler.size() == r.tokens.size());
      CHECK(r.lp_sampler_t1.size() == r.tokens.size());
      CHECK(r.lp_clean.size() == r.tokens.size());
      // EOS, if present, terminates the sequence.
      for (std::size_t i = 0; i + 1 < r.tokens.size(); ++i) CHECK(r.tokens[i] != tok::kEos);
      const bool expect_trunc = r.tokens.size() == 10 && r.tokens.back() != tok::kEos;
      CHECK(r.truncated == expect_trunc);
      if (r.truncated) CHECK(r.reward == 0);
      if (!r.truncated) CHECK(r.reward == verify(task, r.tokens).reward);
      CHECK(r.entropy_sum > 0.0);
    }
  }
}

TEST_CASE("zero noise: sampler log-probs equal clean log-probs exactly") {
  const ParameterSet p = init_params(small_cfg());
  NoiseSpec spec;
  spec.sigma = 0.0;
  const ParameterSet q = perturb(p, spec);
  const TaskInstance task = small_task();
  const GroupBatch b = generate_group(p, q, spec, task, 8, 1.0, 12, 13);
  for (const Rollout& r : b.rollouts) {
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      CHECK(r.lp_sampler[t] == r.lp_clean[t]);       // bitwise: identical code path
      CHECK(r.lp_sampler_t1[t] == r.lp_sampler[t]);  // T = 1
    }
  }
}

TEST_CASE("rescore reproduces the sampler's own T=1 log-probs") {
  const ParameterSet p = init_params(small_cfg());
  const NoiseSpec spec{0.02, NoiseSpec::all_groups(), 21};
  const ParameterSet q = perturb(p, spec);
  const TaskInstance task = small_task();
  for (double temp : {1.0, 1.4}) {
    const GroupBatch b = generate_group(p, q, spec, task, 4, temp, 12, 5);
    for (const Rollout& r : b.rollouts) {
      const std::vector<double> again = rescore(q, r);
      REQUIRE(again.size() == r.lp_sampler_t1.size());
      for (std::size_t t = 0; t < again.size(); ++t) {
        CHECK(std::abs(again[t] - r.lp_sampler_t1[t]) <= 1e-12);
      }
      // And the clean side matches rescoring under the clean parameters.
      const std::vector<double> clean = rescore(p, r);
      for (std::size_t t = 0; t < clean.size(); ++t) CHECK(clean[t] == r.lp_clean[t]);
    }
  }
}

TEST_CASE("near-zero temperature collapses the group to greedy decoding") {
  const ParameterSet p = init_params(small_cfg());
  const TaskInstance task = small_task();
  const GroupBatch b = generate_group(p, p, NoiseSpec{}, task, 6, 1e-4, 12, 9);
  for (const Rollout& r : b.rollouts) CHECK(r.tokens == b.rollouts[0].tokens);
}

TEST_CASE("uniform policy: per-step entropy is log V") {
  PolicyConfig cfg = small_cfg();
  ParameterSet p = init_params(cfg);
  for (auto& g : p.groups) std::fill(g.begin(), g.end(), 0.0);  // logits identically zero
  const TaskInstance task = small_task();
  const GroupBatch b = generate_group(p, p, NoiseSpec{}, task, 4, 1.0, 6, 3);
  const double logv = std::log(static_cast<double>(tok::kVocabSize));
  for (const Rollout& r : b.rollouts) {
    CHECK(r.entropy_sum ==
          doctest::Approx(logv * static_cast<double>(r.tokens.size())).epsilon(1e-9));
    for (double lp : r.lp_sampler) CHECK(lp == doctest::Approx(-logv).epsilon(1e-12));
  }
}

TEST_CASE("sampling matches the policy distribution (chi-square, first token)") {
  const ParameterSet p = init_params(small_cfg());
  const TaskInstance task = small_task();
  const double temp = 1.1;
  const std::vector<double> probs = token_distribution(p, task.prompt, temp);
  const int n = 100000;
  std::vector<int> counts(tok::kVocabSize, 0);
  const GroupBatch b = generate_group(p, p, NoiseSpec{}, task, n, temp, 1, 424242);
  for (const Rollout& r : b.rollouts) ++counts[r.tokens[0]];
  double stat = 0.0;
  for (int v = 0; v < tok::kVocabSize; ++v) {
    const double expected = probs[v] * n;
    REQUIRE(expected > 5.0);  // chi-square applicability
    stat += (counts[v] - expected) * (counts[v] - expected) / expected;
  }
  // 0.999 quantile of chi-square with V-1 = 22 degrees of freedom.
  CHECK(stat < 48.26794229083518);
}

TEST_CASE("generate_group validates its arguments") {
  const ParameterSet p = init_params(small_cfg());
  const TaskInstance task = small_task();
  CHECK_THROWS_AS(generate_group(p, p, NoiseSpec{}, task, 1, 1.0, 8, 0), ConfigError);
  CHECK_THROWS_AS(generate_group(p, p, NoiseSpec{}, task, 4, 1.0, 0, 0), ConfigError);
  CHECK_THROWS_AS(generate_group(p, p, NoiseSpec{}, task, 4, 1.0, 1000, 0), ConfigError);
}

TEST_CASE("rollout log lines are valid JSON with the expected fields") {
  const ParameterSet p = init_params(small_cfg());
  const NoiseSpec spec{0.004, NoiseSpec::mlp_only(), 2};
  const ParameterSet q = perturb(p, spec);
  const TaskInstance task = small_task();
  const GroupBatch b = generate_group(p, q, spec, task, 2, 1.0, 12, 1);
  const Rollout& r = b.rollouts[0];
  const nlohmann::json j = nlohmann::json::parse(rollout_log_line(r, 7, 0.004, spec));
  CHECK(j["iteration"] == 7);
  CHECK(j["task_seed"] == task.instance_seed);
  CHECK(j["env_id"] == "ModChain");
  CHECK(j["tokens"].get<TokenSeq>() == r.tokens);
  CHECK(j["lp_sampler"].size() == r.tokens.size());
  CHECK(j["lp_clean"].size() == r.tokens.size());
  CHECK(j["reward"] == r.reward);
  CHECK(j["truncated"] == r.truncated);
  CHECK(j["sigma"] == 0.004);
  CHECK(j["target_groups"] == std::vector<std::string>{"mlp"});
}
