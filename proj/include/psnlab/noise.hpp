#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "psnlab/policy.hpp"

namespace psnlab {

struct NoiseSpec {
  double sigma = 0.0;
  std::set<ParamGroup> target_groups;
  std::uint64_t noise_seed = 0;

  void validate() const;  // throws ConfigError

  // Presets for the injection-site ablation.
  static std::set<ParamGroup> all_groups();
  static std::set<ParamGroup> mlp_only();
  static std::set<ParamGroup> head_only();
};

// theta_tilde = theta + eps, eps ~ N(0, sigma^2 I) on target groups only.
// Pure function of (params, spec): draws are counter-based, keyed by
// (noise_seed, group, parameter index).
ParameterSet perturb(const ParameterSet& params, const NoiseSpec& spec);

struct GroupDeltaStats {
  std::string group;
  double l2 = 0.0;
  double mean = 0.0;
  double std_dev = 0.0;
};

std::vector<GroupDeltaStats> perturbation_report(const ParameterSet& params,
                                                 const ParameterSet& perturbed);

}  // namespace psnlab
