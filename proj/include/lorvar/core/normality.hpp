#ifndef LORVAR_CORE_NORMALITY_HPP
#define LORVAR_CORE_NORMALITY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lorvar/core/error.hpp"
#include "lorvar/core/stats.hpp"

namespace lorvar {

struct NormalityDiagnostic {
  std::size_t n = 0;
  /// max_i |Phi(z_(i)) - empirical cdf| over the standardized sample
  /// (Kolmogorov-Smirnov distance with estimated mean and scale).
  double max_pp_deviation = 0.0;
  double anderson_darling = 0.0;
  double excess_kurtosis = 0.0;
  bool degenerate = false;
  bool passes = false;
};

/// Compares standardized values against N(0, 1).  A sample with no spread is
/// reported as degenerate (the zero-variance branch of the CLT) and passes.
inline NormalityDiagnostic clt_normality(std::span<const double> values, double threshold = 0.05) {
  if (values.size() < 8) throw DomainError("clt_normality needs at least 8 values");
  NormalityDiagnostic out;
  out.n = values.size();
  const auto var = sample_variance(values);
  double scale = 0.0;
  for (double v : values) scale = std::max(scale, std::abs(v));
  if (!(var.variance > 1e-28 * std::max(scale * scale, 1e-300))) {
    out.degenerate = true;
    out.passes = true;
    return out;
  }
  const double sd = std::sqrt(var.variance);
  std::vector<double> cdf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) cdf[i] = normal_cdf((values[i] - var.mean) / sd);
  std::sort(cdf.begin(), cdf.end());
  const double n = static_cast<double>(cdf.size());
  double dmax = 0.0;
  double ad = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    dmax = std::max({dmax, std::abs(cdf[i] - lo), std::abs(cdf[i] - hi)});
    const double a = std::clamp(cdf[i], 1e-300, 1.0 - 1e-16);
    const double b = std::clamp(cdf[cdf.size() - 1 - i], 1e-300, 1.0 - 1e-16);
    ad += (2.0 * static_cast<double>(i) + 1.0) * (std::log(a) + std::log1p(-b));
  }
  out.max_pp_deviation = dmax;
  out.anderson_darling = -n - ad / n;
  out.excess_kurtosis = var.excess_kurtosis;
  out.passes = dmax < threshold;
  return out;
}

}  // namespace lorvar

#endif  // LORVAR_CORE_NORMALITY_HPP
