#include "psnlab/noise.hpp"

#include <cmath>

#include "psnlab/errors.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

void NoiseSpec::validate() const {
  if (sigma < 0.0 || !std::isfinite(sigma)) throw ConfigError("sigma must be finite and >= 0");
  if (sigma > 0.0 && target_groups.empty()) {
    throw ConfigError("target_groups must be nonempty when sigma > 0");
  }
}

std::set<ParamGroup> NoiseSpec::all_groups() {
  return {ParamGroup::Embed, ParamGroup::Attn, ParamGroup::Mlp, ParamGroup::Norm,
          ParamGroup::Head};
}
std::set<ParamGroup> NoiseSpec::mlp_only() { return {ParamGroup::Mlp}; }
std::set<ParamGroup> NoiseSpec::head_only() { return {ParamGroup::Head}; }

ParameterSet perturb(const ParameterSet& params, const NoiseSpec& spec) {
  spec.validate();
  if (!params.all_finite()) throw InputError("nonfinite parameters");
  ParameterSet out = params;
  if (spec.sigma == 0.0) return out;
  for (ParamGroup g : spec.target_groups) {
    const std::uint64_t key = rng::derive(spec.noise_seed, static_cast<std::uint64_t>(g) + 1);
    auto& vec = out.group(g);
    for (std::size_t i = 0; i < vec.size(); ++i) {
      vec[i] += spec.sigma * rng::gaussian(key, i);
    }
  }
  return out;
}

std::vector<GroupDeltaStats> perturbation_report(const ParameterSet& params,
                                                 const ParameterSet& perturbed) {
  if (!(params.config == perturbed.config)) throw InputError("parameter set config mismatch");
  std::vector<GroupDeltaStats> report;
  for (ParamGroup g : kGroupOrder) {
    const auto& a = params.group(g);
    const auto& b = perturbed.group(g);
    if (a.size() != b.size()) throw InputError("parameter group shape mismatch");
    GroupDeltaStats s;
    s.group = group_name(g);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = b[i] - a[i];
      sum += d;
      sum_sq += d * d;
    }
    if (!a.empty()) {
      const double n = static_cast<double>(a.size());
      s.l2 = std::sqrt(sum_sq);
      s.mean = sum / n;
      const double var = sum_sq / n - s.mean * s.mean;
      s.std_dev = std::sqrt(std::max(var, 0.0));
    }
    report.push_back(s);
  }
  return report;
}

}  // namespace psnlab
