#ifndef LORVAR_CORE_STATS_HPP
#define LORVAR_CORE_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lorvar/core/error.hpp"

namespace lorvar {

/// Neumaier compensated summation; order-dependent only at the last ulp.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double mean(std::span<const double> v) {
  if (v.empty()) throw DomainError("mean of empty sequence");
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("linear_fit needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("linear_fit: abscissae are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.points = static_cast<std::size_t>(n);
  return fit;
}

struct MeanEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Mean with a batch-means standard error (valid for weakly dependent series).
inline MeanEstimate batch_mean(std::span<const double> series, std::size_t batches = 64) {
  if (series.size() < 2 * batches) throw DomainError("batch_mean: series shorter than 2 * batches");
  const std::size_t len = series.size() / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) means[b] = mean(series.subspan(b * len, len));
  const double m = mean(means);
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  return {mean(series), std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches))};
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Sample variance and a standard error for it from the fourth central moment.
struct VarianceOfSample {
  double mean = 0.0;
  double variance = 0.0;
  double stderr_ = 0.0;
  double excess_kurtosis = 0.0;
};

inline VarianceOfSample sample_variance(std::span<const double> v) {
  if (v.size() < 4) throw DomainError("sample_variance needs >= 4 values");
  const double n = static_cast<double>(v.size());
  const double m = mean(v);
  CompensatedSum s2, s4;
  for (double x : v) {
    const double d = (x - m) * (x - m);
    s2.add(d);
    s4.add(d * d);
  }
  VarianceOfSample out;
  out.mean = m;
  out.variance = s2.value() / (n - 1.0);
  const double m2 = s2.value() / n;
  const double m4 = s4.value() / n;
  out.stderr_ = std::sqrt(std::max(0.0, m4 - m2 * m2) / n);
  out.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  return out;
}

/// Tag for how a variance was obtained.
enum class VarianceMethod { GreenKubo, BatchMeans, UlamPoisson };

inline std::string to_string(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::GreenKubo: return "green-kubo";
    case VarianceMethod::BatchMeans: return "batch-means";
    case VarianceMethod::UlamPoisson: return "ulam-poisson";
  }
  return "unknown";
}

/// A CLT variance estimate with its uncertainty and the metadata needed to
/// reproduce it.
struct VarianceEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  VarianceMethod method = VarianceMethod::GreenKubo;
  std::size_t n_trunc = 0;
  double theta_hat = std::numeric_limits<double>::quiet_NaN();
  double tail_bound = 0.0;
  bool tail_unbounded = false;
  std::uint64_t seed = 0;
  /// Leave-one-block-out replicates (Green-Kubo only); lets callers form
  /// jackknife errors for differences of estimates computed on one ensemble.
  std::vector<double> replicates;
};

/// Standard error of a - b from paired jackknife replicates of a shared ensemble.
inline double paired_jackknife_stderr(const VarianceEstimate& a, const VarianceEstimate& b) {
  if (a.replicates.size() != b.replicates.size() || a.replicates.size() < 2) {
    throw DomainError("paired_jackknife_stderr: replicate sets differ");
  }
  const std::size_t k = a.replicates.size();
  std::vector<double> d(k);
  for (std::size_t i = 0; i < k; ++i) d[i] = a.replicates[i] - b.replicates[i];
  const double m = mean(d);
  double ss = 0.0;
  for (double v : d) ss += (v - m) * (v - m);
  return std::sqrt(static_cast<double>(k - 1) / static_cast<double>(k) * ss);
}

inline double combined_stderr(double a, double b) { return std::sqrt(a * a + b * b); }

}  // namespace lorvar

#endif  // LORVAR_CORE_STATS_HPP
