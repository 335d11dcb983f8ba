#ifndef LORVAR_SKEWMAP_HPP
#define LORVAR_SKEWMAP_HPP

// Normalized Poincare skew product F(x, y) = (T x, g(x, y)), sampling of its
// SRB measure, the anisotropic seminorms, correlations and Green-Kubo
// variance estimation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "lorvar/core/error.hpp"
#include "lorvar/core/io.hpp"
#include "lorvar/core/normality.hpp"
#include "lorvar/core/parallel.hpp"
#include "lorvar/core/rng.hpp"
#include "lorvar/core/stats.hpp"
#include "lorvar/onedmap.hpp"

namespace lorvar::skewmap {

using onedmap::MapFamily;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Observable on the section Sigma = I x I.
using Observable = std::function<double(double x, double y)>;

/// F(x, y) = (T x, rho y + offset sign(x)).  Same-x pairs contract by exactly
/// rho per step, so K = 1.
class SkewProduct {
 public:
  explicit SkewProduct(MapFamily base, double rho = 0.4, double offset = 0.25)
      : base_(base), rho_(rho), offset_(offset) {
    if (!(rho > 0.0 && rho < 1.0)) throw ModelViolation("SkewProduct: rho must lie in (0, 1)");
    if (!(0.5 * rho + std::abs(offset) <= 0.5)) {
      throw ModelViolation("SkewProduct: rho/2 + |offset| must not exceed 1/2 (fiber map into I)");
    }
  }

  const MapFamily& base() const noexcept { return base_; }
  double rho() const noexcept { return rho_; }
  double offset() const noexcept { return offset_; }
  static constexpr double K() noexcept { return 1.0; }

  double fiber(double x, double y) const noexcept { return rho_ * y + (x > 0.0 ? offset_ : -offset_); }

  /// sup |g| + sup |Dg| over Sigma minus Gamma.
  double fiber_c1_norm() const noexcept { return 0.5 * rho_ + std::abs(offset_) + rho_; }

  Point operator()(Point p) const {
    if (p.x == 0.0) throw OrbitTerminated("orbit reached x = 0");
    return {base_(p.x), fiber(p.x, p.y)};
  }

  Point iterate(Point p, std::size_t n) const {
    for (std::size_t i = 0; i < n; ++i) p = (*this)(p);
    return p;
  }

 private:
  MapFamily base_;
  double rho_;
  double offset_;
};

/// A single forward orbit of F from a Lebesgue-random start.
///
/// For the doubling base the x-orbit is carried as a 64-bit binary expansion
/// of x + 1/2 that is shifted left each step with a fresh random bit entering
/// at the bottom: floating-point doubling would collapse onto the fixed point
/// after 53 steps.  For other bases an orbit that lands exactly on x = 0 is
/// restarted from a new random point and the restart is counted.
class Orbit {
 public:
  Orbit(const SkewProduct& F, std::uint64_t seed, std::uint64_t stream)
      : F_(&F), rng_(seed, stream), exact_bits_(F.base().is_doubling()) {
    reset();
  }

  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  std::size_t restarts() const noexcept { return restarts_; }

  void step() {
    if (exact_bits_) {
      const bool right = (bits_ >> 63) != 0;
      y_ = F_->rho() * y_ + (right ? F_->offset() : -F_->offset());
      bits_ = (bits_ << 1) | next_bit();
      x_ = bits_to_x(bits_);
      return;
    }
    if (x_ == 0.0) {
      ++restarts_;
      reset();
      return;
    }
    y_ = F_->fiber(x_, y_);
    x_ = F_->base()(x_);
  }

 private:
  static double bits_to_x(std::uint64_t b) noexcept {
    return static_cast<double>(b >> 11) * 0x1.0p-53 - 0.5;
  }

  std::uint64_t next_bit() noexcept {
    if (pool_left_ == 0) {
      pool_ = rng_();
      pool_left_ = 64;
    }
    const std::uint64_t bit = pool_ & 1u;
    pool_ >>= 1;
    --pool_left_;
    return bit;
  }

  void reset() {
    if (exact_bits_) {
      bits_ = rng_();
      x_ = bits_to_x(bits_);
    } else {
      do {
        x_ = rng_.uniform(-0.5, 0.5);
      } while (x_ == 0.0);
    }
    y_ = rng_.uniform(-0.5, 0.5);
  }

  const SkewProduct* F_;
  RandomStream rng_;
  bool exact_bits_;
  std::uint64_t bits_ = 0;
  std::uint64_t pool_ = 0;
  int pool_left_ = 0;
  double x_ = 0.0;
  double y_ = 0.0;
  std::size_t restarts_ = 0;
};

/// Points along one orbit after burn-in, distributed per the SRB measure.
struct OrbitEnsemble {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t burn_in = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::size_t restarts = 0;

  std::size_t size() const noexcept { return x.size(); }
  Point at(std::size_t i) const noexcept { return {x[i], y[i]}; }
};

inline OrbitEnsemble sample_srb(const SkewProduct& F, std::size_t n_samples, std::size_t burn_in, std::uint64_t seed,
                                std::uint64_t stream = 0) {
  if (n_samples == 0) throw DomainError("sample_srb: n_samples must be positive");
  Orbit orbit(F, seed, stream);
  for (std::size_t i = 0; i < burn_in; ++i) orbit.step();
  OrbitEnsemble e;
  e.burn_in = burn_in;
  e.seed = seed;
  e.stream = stream;
  e.x.resize(n_samples);
  e.y.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    e.x[i] = orbit.x();
    e.y[i] = orbit.y();
    orbit.step();
  }
  e.restarts = orbit.restarts();
  return e;
}

/// Psi along the ensemble, evaluated in parallel.
inline std::vector<double> evaluate(const Observable& psi, const OrbitEnsemble& e) {
  std::vector<double> out(e.size());
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (e.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(e.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) out[i] = psi(e.x[i], e.y[i]);
  });
  return out;
}

/// Histogram density of the x-marginal on n equal bins of I.
inline std::vector<double> x_marginal_density(const OrbitEnsemble& e, std::size_t bins) {
  const onedmap::Partition part(MapFamily::kDomain, bins);
  std::vector<double> h(bins, 0.0);
  for (double x : e.x) h[part.index_of(x)] += 1.0;
  const double scale = 1.0 / (static_cast<double>(e.size()) * part.width());
  for (double& v : h) v *= scale;
  return h;
}

// ---------------------------------------------------------------------------
// Correlations.

/// Centered autocorrelations c(0..max_lag) with delete-a-block jackknife
/// replicates.  Pairs (i, i + n) belong to the block of i.
struct Autocorrelation {
  std::vector<double> value;
  std::vector<double> stderr_;
  /// replicates[b][n]: estimate of c(n) with block b removed.
  std::vector<std::vector<double>> replicates;
  double mean = 0.0;
};

inline Autocorrelation autocorrelation(std::span<const double> series, std::size_t max_lag, std::size_t blocks = 64) {
  const std::size_t N = series.size();
  if (max_lag >= N) throw DomainError("autocorrelation: lag must be shorter than the series");
  if (N < 2 * blocks) throw DomainError("autocorrelation: series too short for the jackknife blocks");
  const std::size_t L = max_lag + 1;
  Autocorrelation out;
  out.mean = mean(series);
  std::vector<double> d(N);
  for (std::size_t i = 0; i < N; ++i) d[i] = series[i] - out.mean;

  struct BlockSums {
    std::vector<double> prod, left, right;
    std::vector<std::size_t> count;
    double total = 0.0;
    std::size_t len = 0;
  };
  std::vector<BlockSums> bs(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t begin = N * b / blocks;
    const std::size_t end = N * (b + 1) / blocks;
    BlockSums& s = bs[b];
    s.prod.assign(L, 0.0);
    s.left.assign(L, 0.0);
    s.right.assign(L, 0.0);
    s.count.assign(L, 0);
    s.len = end - begin;
    for (std::size_t i = begin; i < end; ++i) s.total += d[i];
    for (std::size_t n = 0; n < L; ++n) {
      const std::size_t stop = std::min(end, N - n);
      if (stop <= begin) continue;
      double p = 0.0, l = 0.0, r = 0.0;
      for (std::size_t i = begin; i < stop; ++i) {
        p += d[i] * d[i + n];
        l += d[i];
        r += d[i + n];
      }
      s.prod[n] = p;
      s.left[n] = l;
      s.right[n] = r;
      s.count[n] = stop - begin;
    }
  });

  std::vector<double> P(L, 0.0), A(L, 0.0), R(L, 0.0);
  std::vector<std::size_t> C(L, 0);
  for (const auto& s : bs) {
    for (std::size_t n = 0; n < L; ++n) {
      P[n] += s.prod[n];
      A[n] += s.left[n];
      R[n] += s.right[n];
      C[n] += s.count[n];
    }
  }
  out.value.resize(L);
  for (std::size_t n = 0; n < L; ++n) out.value[n] = P[n] / static_cast<double>(C[n]);
  out.replicates.assign(blocks, std::vector<double>(L));
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto& s = bs[b];
    // Mean of the retained data, relative to the full-series mean.
    const double delta = -s.total / static_cast<double>(N - s.len);
    for (std::size_t n = 0; n < L; ++n) {
      const double cnt = static_cast<double>(C[n] - s.count[n]);
      const double p = P[n] - s.prod[n];
      const double lr = (A[n] - s.left[n]) + (R[n] - s.right[n]);
      out.replicates[b][n] = (p - delta * lr + cnt * delta * delta) / cnt;
    }
  }
  out.stderr_.resize(L);
  const double k = static_cast<double>(blocks);
  for (std::size_t n = 0; n < L; ++n) {
    double m = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) m += out.replicates[b][n];
    m /= k;
    double ss = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) ss += (out.replicates[b][n] - m) * (out.replicates[b][n] - m);
    out.stderr_[n] = std::sqrt((k - 1.0) / k * ss);
  }
  return out;
}

struct CorrelationValue {
  double value = 0.0;
  double stderr_ = 0.0;
};

inline CorrelationValue correlation(const Observable& psi, const OrbitEnsemble& e, std::size_t lag) {
  if (lag >= e.size()) throw DomainError("correlation: lag >= ensemble length");
  const auto series = evaluate(psi, e);
  const auto ac = autocorrelation(series, lag);
  return {ac.value[lag], ac.stderr_[lag]};
}

inline io::Table correlation_table(const Autocorrelation& ac) {
  io::Table t({"lag", "value", "stderr"});
  for (std::size_t n = 0; n < ac.value.size(); ++n) {
    t.add_row({static_cast<std::uint64_t>(n), ac.value[n], ac.stderr_[n]});
  }
  return t;
}

/// Geometric envelope C theta^n fitted to log |c(n)| over the leading run of
/// lags 1, 2, ... (at most fit_lags) whose |c(n)| exceeds twice its standard
/// error.  Isolated significant lags further out are noise and are ignored.
struct TailFit {
  double C = 0.0;
  double theta = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;
  std::size_t last_significant = 0;
  bool fitted = false;
};

inline TailFit fit_tail(const Autocorrelation& ac, std::size_t fit_lags = 30) {
  TailFit fit;
  std::vector<double> xs, ys;
  for (std::size_t n = 1; n <= fit_lags && n < ac.value.size(); ++n) {
    if (!(std::abs(ac.value[n]) > 2.0 * ac.stderr_[n])) break;
    xs.push_back(static_cast<double>(n));
    ys.push_back(std::log(std::abs(ac.value[n])));
    fit.last_significant = n;
  }
  fit.points = xs.size();
  if (xs.size() < 3) return fit;
  const auto lf = linear_fit(xs, ys);
  fit.theta = std::exp(lf.slope);
  fit.C = std::exp(lf.intercept);
  fit.fitted = true;
  return fit;
}

struct GreenKuboOptions {
  /// Fixed truncation lag; when empty it is chosen from the fitted tail.
  std::optional<std::size_t> n_trunc;
  std::size_t max_lag = 60;
  std::size_t fit_lags = 30;
  double relative_tail_tol = 1e-3;
  std::size_t blocks = 64;
};

/// sigma^2 = c(0) + 2 sum_{n=1}^{N} c(n) on one stationary series.
///
/// N is the smallest lag at which the fitted tail C theta^N / (1 - theta)
/// drops below relative_tail_tol * c(0), capped at max_lag.  With fewer than
/// three leading lags above twice their standard error the correlations are
/// at the noise floor and N is the length of that run (at least 1).  A fitted theta >= 1
/// marks the estimate tail-unbounded.  The standard error is the block
/// jackknife error of the whole truncated sum plus twice the tail bound.
inline VarianceEstimate green_kubo(std::span<const double> series, std::uint64_t seed = 0,
                                   const GreenKuboOptions& opt = {}) {
  VarianceEstimate est;
  est.method = VarianceMethod::GreenKubo;
  est.seed = seed;
  const std::size_t max_lag = std::max(opt.max_lag, opt.n_trunc.value_or(0));
  const auto ac = autocorrelation(series, max_lag, opt.blocks);
  if (ac.value[0] <= 0.0) {
    est.n_trunc = opt.n_trunc.value_or(0);
    est.replicates.assign(opt.blocks, 0.0);
    return est;
  }
  const auto tail = fit_tail(ac, opt.fit_lags);
  double tail_bound = 0.0;
  std::size_t N = 0;
  if (tail.fitted) {
    est.theta_hat = tail.theta;
    if (tail.theta >= 1.0) {
      est.tail_unbounded = true;
      N = opt.max_lag;
    } else {
      const double thr = opt.relative_tail_tol * ac.value[0];
      N = 1;
      while (N < opt.max_lag && tail.C * std::pow(tail.theta, static_cast<double>(N)) / (1.0 - tail.theta) >= thr) {
        ++N;
      }
      tail_bound = 2.0 * tail.C * std::pow(tail.theta, static_cast<double>(N + 1)) / (1.0 - tail.theta);
    }
  } else {
    N = std::max<std::size_t>(1, tail.last_significant);
  }
  if (opt.n_trunc) N = *opt.n_trunc;
  est.n_trunc = N;
  est.tail_bound = tail_bound;

  auto gk = [&](const std::vector<double>& c) {
    double s = c[0];
    for (std::size_t n = 1; n <= N; ++n) s += 2.0 * c[n];
    return s;
  };
  est.value = gk(ac.value);
  est.replicates.resize(opt.blocks);
  for (std::size_t b = 0; b < opt.blocks; ++b) est.replicates[b] = gk(ac.replicates[b]);
  const double k = static_cast<double>(opt.blocks);
  const double m = mean(est.replicates);
  double ss = 0.0;
  for (double r : est.replicates) ss += (r - m) * (r - m);
  est.stderr_ = std::sqrt((k - 1.0) / k * ss) + tail_bound;
  return est;
}

inline VarianceEstimate green_kubo_map(const Observable& psi, const OrbitEnsemble& e,
                                       const GreenKuboOptions& opt = {}) {
  const auto series = evaluate(psi, e);
  return green_kubo(series, e.seed, opt);
}

// ---------------------------------------------------------------------------
// Independent Monte-Carlo CLT oracle.

struct CltOracleResult {
  VarianceEstimate estimate;
  NormalityDiagnostic normality;
  /// Normalized block sums (S_r - n m) / sqrt(n), one per replica.
  std::vector<double> block_sums;
};

/// Variance of normalized Birkhoff sums over n_reps independent orbits, each
/// started from a Lebesgue-random point on its own random stream.
inline CltOracleResult clt_oracle_map(const SkewProduct& F, const Observable& psi, std::size_t n_block,
                                      std::size_t n_reps, std::uint64_t seed, std::size_t burn_in = 1000) {
  if (n_block == 0 || n_reps < 8) throw DomainError("clt_oracle_map: need n_block >= 1 and n_reps >= 8");
  std::vector<double> sums(n_reps);
  parallel_for(n_reps, [&](std::size_t r) {
    Orbit orbit(F, seed, r + 1);
    for (std::size_t i = 0; i < burn_in; ++i) orbit.step();
    CompensatedSum s;
    for (std::size_t i = 0; i < n_block; ++i) {
      s.add(psi(orbit.x(), orbit.y()));
      orbit.step();
    }
    sums[r] = s.value();
  });
  const double m = mean(sums) / static_cast<double>(n_block);
  const double root = std::sqrt(static_cast<double>(n_block));
  CltOracleResult out;
  out.block_sums.resize(n_reps);
  for (std::size_t r = 0; r < n_reps; ++r) {
    out.block_sums[r] = (sums[r] - static_cast<double>(n_block) * m) / root;
  }
  const auto v = sample_variance(out.block_sums);
  out.estimate.value = v.variance;
  out.estimate.stderr_ = v.stderr_;
  out.estimate.method = VarianceMethod::BatchMeans;
  out.estimate.n_trunc = n_block;
  out.estimate.seed = seed;
  out.normality = clt_normality(out.block_sums);
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic reference for observables of x alone.

namespace detail {

inline double ulam_series_variance(const MapFamily& T, const std::function<double(double)>& f, std::size_t cells,
                                   std::size_t max_terms) {
  const onedmap::Partition part(MapFamily::kDomain, cells);
  const auto op = onedmap::build_ulam(T, part);
  const auto h = onedmap::invariant_density(op, 1e-13);
  const auto fc = onedmap::cell_averages(part, f);
  const double w = part.width();
  double m = 0.0;
  for (std::size_t i = 0; i < cells; ++i) m += fc[i] * h.weights[i] * w;
  std::vector<double> fhat(cells), g(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    fhat[i] = fc[i] - m;
    g[i] = fhat[i] * h.weights[i];
  }
  auto pair = [&](const std::vector<double>& a) {
    CompensatedSum s;
    for (std::size_t i = 0; i < cells; ++i) s.add(a[i] * fhat[i]);
    return s.value() * w;
  };
  const double c0 = pair(g);
  double total = c0;
  for (std::size_t n = 1; n <= max_terms; ++n) {
    g = op.push_forward(g);
    const double c = pair(g);
    total += 2.0 * c;
    if (std::abs(c) < 1e-15 * std::max(c0, 1e-300)) break;
  }
  return total;
}

}  // namespace detail

/// sigma^2 of f(x) from the Ulam operator: c(n) = ∫ P^n(fhat h) fhat summed
/// until the terms vanish (the Neumann series of the Poisson equation
/// (I - P) u = fhat h).  The cell averages of f are taken against h, so this
/// has no sampling noise; its error is the discretization error, estimated
/// as the change from cells / 2 to cells.
inline VarianceEstimate ulam_poisson_variance(const MapFamily& T, const std::function<double(double)>& f,
                                              std::size_t cells = 16384, std::size_t max_terms = 5000) {
  if (cells < 4) throw DomainError("ulam_poisson_variance: need at least 4 cells");
  VarianceEstimate est;
  est.method = VarianceMethod::UlamPoisson;
  est.value = detail::ulam_series_variance(T, f, cells, max_terms);
  est.stderr_ = std::abs(est.value - detail::ulam_series_variance(T, f, cells / 2, max_terms));
  est.n_trunc = max_terms;
  return est;
}

// ---------------------------------------------------------------------------
// Seminorms.

struct SeminormGrid {
  std::size_t nx = 2048;
  std::size_t ny = 64;
  double alpha = 1.0;
  double p = 2.0;
  double rho0 = 0.1;
};

struct InequalityCheck {
  std::size_t j = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

struct SeminormRecord {
  double sup_norm = 0.0;
  double h_alpha_s = 0.0;   // fiber-direction Holder seminorm
  double h_alpha = 0.0;     // piecewise Holder seminorm on Sigma+ and Sigma-
  double vhat_p = 0.0;      // transverse p-variation
  double pi_bv_norm = 0.0;  // ||Pi Psi||_{1,1/p}
  double d_psi = 0.0;
  bool grid_too_coarse = false;
  InequalityCheck projection_bound;           // V_{1,1/p}(Pi Psi) <= 2^{1/p} Vhat_p(Psi)
  std::vector<InequalityCheck> iterate_bounds;  // Vhat_p(Psi o F^j), j = 1..max_j
};

namespace detail {

/// Values of an observable on the midpoint grid: v[i * ny + k] = Psi(x_i, y_k).
struct GridValues {
  std::size_t nx, ny;
  std::vector<double> xs, ys, v;
  double at(std::size_t i, std::size_t k) const noexcept { return v[i * ny + k]; }
};

inline GridValues sample_grid(const Observable& psi, const SeminormGrid& g) {
  GridValues out{g.nx, g.ny, {}, {}, std::vector<double>(g.nx * g.ny)};
  for (std::size_t i = 0; i < g.nx; ++i) out.xs.push_back(-0.5 + (static_cast<double>(i) + 0.5) / static_cast<double>(g.nx));
  for (std::size_t k = 0; k < g.ny; ++k) out.ys.push_back(-0.5 + (static_cast<double>(k) + 0.5) / static_cast<double>(g.ny));
  parallel_for(g.nx, [&](std::size_t i) {
    for (std::size_t k = 0; k < g.ny; ++k) out.v[i * g.ny + k] = psi(out.xs[i], out.ys[k]);
  });
  return out;
}

/// sup over x-chains and per-link y choices; O(nx^2 ny) recursion as in vp_norm.
inline double vhat_p(const GridValues& gv, double p) {
  const std::size_t m = gv.nx;
  auto link = [&](std::size_t a, std::size_t b) {
    double best = 0.0;
    for (std::size_t k = 0; k < gv.ny; ++k) best = std::max(best, std::abs(gv.at(a, k) - gv.at(b, k)));
    return best;
  };
  if (p == 1.0) {
    double s = 0.0;
    for (std::size_t i = 1; i < m; ++i) s += link(i - 1, i);
    return s;
  }
  std::vector<double> best(m, 0.0);
  for (std::size_t k = 1; k < m; ++k) {
    double b = 0.0;
    for (std::size_t j = 0; j < k; ++j) b = std::max(b, best[j] + std::pow(link(j, k), p));
    best[k] = b;
  }
  return std::pow(best[m - 1], 1.0 / p);
}

inline double h_alpha_s(const GridValues& gv, double alpha) {
  double best = 0.0;
  for (std::size_t i = 0; i < gv.nx; ++i) {
    for (std::size_t a = 0; a < gv.ny; ++a) {
      for (std::size_t b = a + 1; b < gv.ny; ++b) {
        const double q = std::abs(gv.at(i, b) - gv.at(i, a)) / std::pow(gv.ys[b] - gv.ys[a], alpha);
        best = std::max(best, q);
      }
    }
  }
  return best;
}

}  // namespace detail

/// Grid estimates of the seminorms entering D_Psi, and numerical checks of
/// V_{1,1/p}(Pi Psi) <= 2^{1/p} Vhat_p(Psi) and
/// Vhat_p(Psi o F^j) <= (2^j - 1) M ||Psi||_{alpha,s} + 2^j Vhat_p(Psi) for
/// j = 1..max_j, M = 4 (1 + ||g||_{C^1}^alpha).
inline SeminormRecord measure_seminorms(const SkewProduct& F, const Observable& psi, const SeminormGrid& g = {},
                                        std::size_t max_j = 3) {
  if (g.nx < 4 || g.ny < 2) throw DomainError("measure_seminorms: grid too small");
  if (!(g.alpha > 0.0 && g.alpha <= 1.0) || !(g.p >= 1.0 / g.alpha)) {
    throw DomainError("measure_seminorms: need alpha in (0, 1] and p >= 1 / alpha");
  }
  const auto gv = detail::sample_grid(psi, g);
  SeminormRecord rec;
  for (double v : gv.v) rec.sup_norm = std::max(rec.sup_norm, std::abs(v));
  rec.h_alpha_s = detail::h_alpha_s(gv, g.alpha);
  rec.vhat_p = detail::vhat_p(gv, g.p);

  // Holder quotients at dyadic separations 2^-k, k = 3..10, within one side.
  double finest = 0.0, coarser = 0.0;
  for (int k = 3; k <= 10; ++k) {
    const double h = std::ldexp(1.0, -k);
    double q = 0.0;
    for (std::size_t i = 0; i < gv.nx; ++i) {
      const double x = gv.xs[i];
      const double x2 = x + h;
      if (x2 >= 0.5 || (x < 0.0) != (x2 < 0.0)) continue;
      for (std::size_t k2 = 0; k2 < gv.ny; k2 += std::max<std::size_t>(1, gv.ny / 16)) {
        const double y = gv.ys[k2];
        const double y2 = std::min(y + h, 0.5);
        const double dist = std::hypot(x2 - x, y2 - y);
        q = std::max(q, std::abs(psi(x2, y2) - psi(x, y)) / std::pow(dist, g.alpha));
      }
    }
    rec.h_alpha = std::max(rec.h_alpha, q);
    if (k == 10) {
      finest = q;
    } else {
      coarser = std::max(coarser, q);
    }
  }
  rec.grid_too_coarse = finest > 1.5 * coarser && coarser > 0.0;

  std::vector<double> pi(gv.nx);
  for (std::size_t i = 0; i < gv.nx; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < gv.ny; ++k) s += gv.at(i, k);
    pi[i] = s / static_cast<double>(gv.ny);
  }
  const double v11p = onedmap::bv_seminorm(pi, MapFamily::kDomain, g.p, g.rho0);
  rec.pi_bv_norm = onedmap::bv_norm(pi, MapFamily::kDomain, g.p, g.rho0);
  rec.d_psi = rec.pi_bv_norm + rec.vhat_p + rec.sup_norm + rec.h_alpha_s;
  rec.projection_bound = {0, v11p, std::pow(2.0, 1.0 / g.p) * rec.vhat_p, false};
  rec.projection_bound.holds = rec.projection_bound.lhs <= rec.projection_bound.rhs + 1e-9;

  const double M = 4.0 * (1.0 + std::pow(F.fiber_c1_norm(), g.alpha));
  const double norm_as = rec.h_alpha_s + rec.sup_norm;
  for (std::size_t j = 1; j <= max_j; ++j) {
    const Observable composed = [&F, &psi, j](double x, double y) {
      const Point q = F.iterate({x, y}, j);
      return psi(q.x, q.y);
    };
    const auto gj = detail::sample_grid(composed, g);
    const double lhs = detail::vhat_p(gj, g.p);
    const double pj = std::ldexp(1.0, static_cast<int>(j));
    const double rhs = (pj - 1.0) * M * norm_as + pj * rec.vhat_p;
    rec.iterate_bounds.push_back({j, lhs, rhs, lhs <= rhs + 1e-9});
  }
  return rec;
}

}  // namespace lorvar::skewmap

#endif  // LORVAR_SKEWMAP_HPP
