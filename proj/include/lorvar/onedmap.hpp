#ifndef LORVAR_ONEDMAP_HPP
#define LORVAR_ONEDMAP_HPP

// One-dimensional Lorenz-like expanding maps, Ulam discretization of their
// transfer operators, and the p-variation / oscillation seminorms.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "lorvar/core/error.hpp"
#include "lorvar/core/io.hpp"
#include "lorvar/core/parallel.hpp"
#include "lorvar/core/stats.hpp"

namespace lorvar::onedmap {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const noexcept { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

/// An interval map made of finitely many increasing branches, each with a
/// closed-form inverse.  branch_value must be the continuous extension of the
/// branch to the closed branch domain (one-sided limits at breakpoints).
template <class M>
concept BranchMap = requires(const M& m, std::size_t k, double v) {
  { m.domain() } -> std::convertible_to<Interval>;
  { m.branch_count() } -> std::convertible_to<std::size_t>;
  { m.branch_domain(k) } -> std::convertible_to<Interval>;
  { m.branch_value(k, v) } -> std::convertible_to<double>;
  { m.branch_inverse(k, v) } -> std::convertible_to<double>;
};

/// T(x) = sign(x) (c |x|^gamma - 1/2) on I = [-1/2, 1/2].
///
/// Increasing on both branches, T(0+) = -1/2 < 0 < 1/2 = T(0-), and the
/// derivative c gamma |x|^(gamma-1) is smallest at |x| = 1/2.  The
/// constructor rejects parameters for which the map leaves I or fails to be
/// uniformly expanding.  gamma = 1, c = 2 is the doubling map x -> 2x mod 1
/// written on I.
class MapFamily {
 public:
  static constexpr Interval kDomain{-0.5, 0.5};

  MapFamily(double gamma, double c, double eps = 0.0) : gamma_(gamma), c_(c), eps_(eps) {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
      throw ModelViolation("MapFamily: gamma must lie in (0, 1] for uniform expansion");
    }
    if (!(c > 0.0) || c * std::exp2(-gamma) > 1.0 + 1e-15) {
      throw ModelViolation("MapFamily: c 2^-gamma must not exceed 1 (image inside I)");
    }
    if (!(min_slope() > 1.0 + 1e-12)) {
      throw ModelViolation("MapFamily: minimum slope c gamma 2^(1-gamma) must exceed 1");
    }
    if (!(eps >= 0.0)) throw ModelViolation("MapFamily: eps must be >= 0");
  }

  /// gamma = gamma0 + eps, c = 2^gamma: both endpoints of I are fixed.
  static MapFamily geometric(double eps = 0.0, double gamma0 = 0.6) {
    const double g = gamma0 + eps;
    return MapFamily(g, std::exp2(g), eps);
  }

  static MapFamily doubling() { return MapFamily(1.0, 2.0, 0.0); }

  double gamma() const noexcept { return gamma_; }
  double c() const noexcept { return c_; }
  double eps() const noexcept { return eps_; }
  bool is_doubling() const noexcept { return gamma_ == 1.0 && c_ == 2.0; }

  double operator()(double x) const {
    if (x == 0.0) throw SingularityError("T is undefined at x = 0");
    return x > 0.0 ? branch_value(1, x) : branch_value(0, x);
  }

  double derivative(double x) const {
    if (x == 0.0) throw SingularityError("T' is undefined at x = 0");
    return c_ * gamma_ * std::pow(std::abs(x), gamma_ - 1.0);
  }

  double min_slope() const noexcept { return c_ * gamma_ * std::exp2(1.0 - gamma_); }

  Interval domain() const noexcept { return kDomain; }
  static constexpr std::size_t branch_count() noexcept { return 2; }
  Interval branch_domain(std::size_t k) const noexcept {
    return k == 0 ? Interval{-0.5, 0.0} : Interval{0.0, 0.5};
  }
  double branch_value(std::size_t k, double x) const noexcept {
    return k == 0 ? 0.5 - c_ * std::pow(-x, gamma_) : c_ * std::pow(x, gamma_) - 0.5;
  }
  double branch_inverse(std::size_t k, double y) const noexcept {
    if (k == 0) return -std::pow(std::max(0.0, 0.5 - y) / c_, 1.0 / gamma_);
    return std::pow(std::max(0.0, y + 0.5) / c_, 1.0 / gamma_);
  }

 private:
  double gamma_;
  double c_;
  double eps_;
};

/// 2x mod 1 on [0, 1]: the exactly solvable test instance.
class DoublingMap {
 public:
  double operator()(double x) const noexcept { return x < 0.5 ? 2.0 * x : 2.0 * x - 1.0; }
  Interval domain() const noexcept { return {0.0, 1.0}; }
  static constexpr std::size_t branch_count() noexcept { return 2; }
  Interval branch_domain(std::size_t k) const noexcept {
    return k == 0 ? Interval{0.0, 0.5} : Interval{0.5, 1.0};
  }
  double branch_value(std::size_t k, double x) const noexcept {
    return k == 0 ? 2.0 * x : 2.0 * x - 1.0;
  }
  double branch_inverse(std::size_t k, double y) const noexcept {
    return k == 0 ? 0.5 * y : 0.5 * (y + 1.0);
  }
};

/// Minimum of T' over the midpoints of a uniform grid.
inline double expansion_certificate(const MapFamily& family, std::size_t points = 100000) {
  double best = std::numeric_limits<double>::infinity();
  const double h = 1.0 / static_cast<double>(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double x = -0.5 + (static_cast<double>(i) + 0.5) * h;
    if (x != 0.0) best = std::min(best, family.derivative(x));
  }
  return best;
}

/// n equal cells tiling an interval.
class Partition {
 public:
  Partition(Interval domain, std::size_t n) : domain_(domain), n_(n) {
    if (n == 0) throw DomainError("Partition: cell count must be positive");
    if (!(domain.hi > domain.lo)) throw DomainError("Partition: empty domain");
  }

  std::size_t size() const noexcept { return n_; }
  Interval domain() const noexcept { return domain_; }
  double width() const noexcept { return domain_.length() / static_cast<double>(n_); }

  Interval cell(std::size_t i) const noexcept {
    const double lo = domain_.lo + domain_.length() * static_cast<double>(i) / static_cast<double>(n_);
    const double hi = i + 1 == n_
                          ? domain_.hi
                          : domain_.lo + domain_.length() * static_cast<double>(i + 1) / static_cast<double>(n_);
    return {lo, hi};
  }

  double midpoint(std::size_t i) const noexcept {
    const auto c = cell(i);
    return 0.5 * (c.lo + c.hi);
  }

  /// Cell containing x, clamped to the partition.
  std::size_t index_of(double x) const noexcept {
    const double t = (x - domain_.lo) / width();
    if (!(t > 0.0)) return 0;
    const auto i = static_cast<std::size_t>(t);
    return std::min(i, n_ - 1);
  }

  bool operator==(const Partition&) const = default;

 private:
  Interval domain_;
  std::size_t n_;
};

/// Ulam matrix in compressed-row form: entry (i, j) is
/// Leb(cell_i ∩ T^-1 cell_j) / Leb(cell_i).
class UlamOperator {
 public:
  UlamOperator(Partition partition, std::vector<std::size_t> row_ptr, std::vector<std::size_t> cols,
               std::vector<double> vals)
      : partition_(partition), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)), vals_(std::move(vals)) {}

  const Partition& partition() const noexcept { return partition_; }
  std::size_t size() const noexcept { return partition_.size(); }
  std::size_t nonzeros() const noexcept { return vals_.size(); }

  double entry(std::size_t i, std::size_t j) const {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      if (cols_[k] == j) return vals_[k];
    }
    return 0.0;
  }

  double row_sum(std::size_t i) const {
    CompensatedSum s;
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s.add(vals_[k]);
    return s.value();
  }

  /// Discrete transfer operator acting on cell densities (left multiplication).
  std::vector<double> push_forward(std::span<const double> density) const {
    if (density.size() != size()) throw DomainError("push_forward: size mismatch");
    std::vector<double> out(size(), 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
      const double di = density[i];
      if (di == 0.0) continue;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) out[cols_[k]] += di * vals_[k];
    }
    return out;
  }

  /// Koopman side: (U g)_i = sum_j P_ij g_j, the cell average of g o T.
  std::vector<double> pull_back(std::span<const double> g) const {
    if (g.size() != size()) throw DomainError("pull_back: size mismatch");
    std::vector<double> out(size(), 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += vals_[k] * g[cols_[k]];
      out[i] = s;
    }
    return out;
  }

 private:
  Partition partition_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> cols_;
  std::vector<double> vals_;
};

namespace detail {

template <BranchMap M>
std::vector<std::pair<std::size_t, double>> ulam_row(const M& map, const Partition& partition, std::size_t i) {
  const Interval cell = partition.cell(i);
  std::vector<std::pair<std::size_t, double>> entries;
  for (std::size_t k = 0; k < map.branch_count(); ++k) {
    const Interval bd = map.branch_domain(k);
    const double a = std::max(cell.lo, bd.lo);
    const double b = std::min(cell.hi, bd.hi);
    if (!(b > a)) continue;
    const std::size_t ja = partition.index_of(map.branch_value(k, a));
    const std::size_t jb = partition.index_of(map.branch_value(k, b));
    // Preimage breakpoints telescope from a to b, so the row sums to
    // (b - a) / width up to rounding in the individual differences.
    double prev = a;
    for (std::size_t j = ja; j <= jb; ++j) {
      double next = j == jb ? b : map.branch_inverse(k, partition.cell(j).hi);
      next = std::clamp(next, prev, b);
      if (next > prev) entries.emplace_back(j, next - prev);
      prev = next;
    }
  }
  std::sort(entries.begin(), entries.end());
  std::vector<std::pair<std::size_t, double>> merged;
  for (const auto& e : entries) {
    if (!merged.empty() && merged.back().first == e.first) {
      merged.back().second += e.second;
    } else {
      merged.push_back(e);
    }
  }
  const double inv_len = 1.0 / cell.length();
  for (auto& e : merged) e.second *= inv_len;
  return merged;
}

}  // namespace detail

/// Builds the Ulam matrix by exact interval intersection through the branch
/// inverses.  Rows are computed independently.
template <BranchMap M>
UlamOperator build_ulam(const M& map, const Partition& partition) {
  if (partition.size() < 2) throw DomainError("build_ulam: partition needs at least 2 cells");
  if (!(partition.domain() == map.domain())) throw DomainError("build_ulam: partition must tile the map domain");
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(partition.size());
  parallel_for(partition.size(), [&](std::size_t i) { rows[i] = detail::ulam_row(map, partition, i); });
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  for (const auto& r : rows) {
    for (const auto& [j, v] : r) {
      cols.push_back(j);
      vals.push_back(v);
    }
    row_ptr.push_back(cols.size());
  }
  return UlamOperator(partition, std::move(row_ptr), std::move(cols), std::move(vals));
}

/// Piecewise-constant probability density on a partition.
struct Density {
  Partition partition;
  std::vector<double> weights;

  double integral() const {
    CompensatedSum s;
    for (double w : weights) s.add(w);
    return s.value() * partition.width();
  }
  double sup() const { return *std::max_element(weights.begin(), weights.end()); }
  double at(double x) const { return weights[partition.index_of(x)]; }
};

inline double l1_distance(std::span<const double> a, std::span<const double> b, double width) {
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(std::abs(a[i] - b[i]));
  return s.value() * width;
}

/// Left fixed vector of the Ulam matrix by power iteration from the uniform
/// density; stops when successive iterates differ by less than tol in L1.
inline Density invariant_density(const UlamOperator& op, double tol = 1e-10, std::size_t max_iter = 100000) {
  const Partition& part = op.partition();
  const double w = part.width();
  std::vector<double> cur(op.size(), 1.0 / part.domain().length());
  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < max_iter; ++it) {
    auto next = op.push_forward(cur);
    CompensatedSum mass;
    for (double v : next) mass.add(v);
    const double scale = 1.0 / (mass.value() * w);
    for (double& v : next) v *= scale;
    residual = l1_distance(next, cur, w);
    cur = std::move(next);
    if (residual < tol) return {part, std::move(cur)};
  }
  throw ConvergenceError("invariant_density: power iteration did not converge", residual);
}

struct DecayResult {
  std::vector<double> norms;  // ||P^n f - h ∫f||_1 for n = 1..n_max
  double lambda_hat = std::numeric_limits<double>::quiet_NaN();
  std::size_t fit_points = 0;
  bool flagged = false;  // fewer than 3 points above the noise floor
};

/// L1 decay of P^n f towards h ∫f and a geometric rate fitted on log scale
/// over the leading run of points above the noise floor.
inline DecayResult decay_rate(const UlamOperator& op, const Density& h, std::span<const double> f,
                              std::size_t n_max) {
  if (f.size() != op.size()) throw DomainError("decay_rate: f must be sampled on the partition");
  const double w = op.partition().width();
  CompensatedSum fint, fabs;
  for (double v : f) {
    fint.add(v);
    fabs.add(std::abs(v));
  }
  const double mass = fint.value() * w;
  // The density is only accurate to its power-iteration tolerance, so the
  // distance to h ∫f cannot be resolved below about that level.
  const double floor = 1e-10 * std::max(fabs.value() * w, 1e-300) + 1e-14;
  DecayResult out;
  std::vector<double> g(f.begin(), f.end());
  std::vector<double> target(op.size());
  for (std::size_t i = 0; i < op.size(); ++i) target[i] = h.weights[i] * mass;
  for (std::size_t n = 1; n <= n_max; ++n) {
    g = op.push_forward(g);
    out.norms.push_back(l1_distance(g, target, w));
  }
  std::vector<double> xs, ys;
  for (std::size_t n = 0; n < out.norms.size() && out.norms[n] > floor; ++n) {
    xs.push_back(static_cast<double>(n + 1));
    ys.push_back(std::log(out.norms[n]));
  }
  out.fit_points = xs.size();
  if (xs.size() < 3) {
    out.flagged = true;
    return out;
  }
  out.lambda_hat = std::exp(linear_fit(xs, ys).slope);
  return out;
}

// ---------------------------------------------------------------------------
// Seminorms on sampled functions.

/// sup over subpartitions of (sum |f(x_i) - f(x_{i-1})|^p)^(1/p) for a
/// function known on a finite increasing grid.  Exact for p = 1 (all points);
/// for p > 1 an O(m^2) longest-path recursion over subsequences.  Adding the
/// first or last grid point to a chain never lowers the sum, so chains may be
/// taken to start and end at the grid ends.
inline double vp_norm(std::span<const double> values, double p) {
  if (values.empty()) throw DomainError("vp_norm: empty grid");
  if (!(p >= 1.0)) throw DomainError("vp_norm: p must be >= 1");
  const std::size_t m = values.size();
  if (p == 1.0) {
    CompensatedSum s;
    for (std::size_t i = 1; i < m; ++i) s.add(std::abs(values[i] - values[i - 1]));
    return s.value();
  }
  std::vector<double> best(m, 0.0);
  for (std::size_t k = 1; k < m; ++k) {
    double b = 0.0;
    for (std::size_t j = 0; j < k; ++j) b = std::max(b, best[j] + std::pow(std::abs(values[k] - values[j]), p));
    best[k] = b;
  }
  return std::pow(best[m - 1], 1.0 / p);
}

namespace detail {

/// Sparse table answering range max/min queries in O(1).
class RangeExtrema {
 public:
  explicit RangeExtrema(std::span<const double> v) {
    const std::size_t n = v.size();
    levels_ = static_cast<std::size_t>(std::bit_width(n));
    max_.assign(levels_, std::vector<double>(n));
    min_.assign(levels_, std::vector<double>(n));
    std::copy(v.begin(), v.end(), max_[0].begin());
    std::copy(v.begin(), v.end(), min_[0].begin());
    for (std::size_t l = 1; l < levels_; ++l) {
      const std::size_t half = std::size_t{1} << (l - 1);
      for (std::size_t i = 0; i + (std::size_t{1} << l) <= n; ++i) {
        max_[l][i] = std::max(max_[l - 1][i], max_[l - 1][i + half]);
        min_[l][i] = std::min(min_[l - 1][i], min_[l - 1][i + half]);
      }
    }
  }
  /// max - min over the inclusive index range [a, b].
  double spread(std::size_t a, std::size_t b) const {
    const std::size_t l = static_cast<std::size_t>(std::bit_width(b - a + 1)) - 1;
    const std::size_t off = b + 1 - (std::size_t{1} << l);
    return std::max(max_[l][a], max_[l][off]) - std::min(min_[l][a], min_[l][off]);
  }

 private:
  std::size_t levels_ = 0;
  std::vector<std::vector<double>> max_;
  std::vector<std::vector<double>> min_;
};

inline void check_sampled(std::span<const double> values) {
  if (values.empty()) throw DomainError("empty grid");
}

inline double osc1_exact(const RangeExtrema& rx, std::size_t m, Interval domain, double rho) {
  const double w = domain.length() / static_cast<double>(m);
  std::vector<double> breaks{domain.lo, domain.hi};
  breaks.reserve(2 * m + 4);
  for (std::size_t k = 0; k <= m; ++k) {
    const double b = domain.lo + w * static_cast<double>(k);
    for (double t : {b - rho, b + rho}) {
      if (t > domain.lo && t < domain.hi) breaks.push_back(t);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  CompensatedSum total;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double len = breaks[i + 1] - breaks[i];
    if (!(len > 0.0)) continue;
    const double x = 0.5 * (breaks[i] + breaks[i + 1]);
    const double left = std::floor((x - rho - domain.lo) / w);
    const double right = std::floor((x + rho - domain.lo) / w);
    const auto a = static_cast<std::size_t>(std::clamp(left, 0.0, static_cast<double>(m - 1)));
    const auto b = static_cast<std::size_t>(std::clamp(right, 0.0, static_cast<double>(m - 1)));
    total.add(len * rx.spread(a, b));
  }
  return total.value();
}

}  // namespace detail

/// osc_1(f, rho) = ∫_I ess-osc of f over S_rho(x) ∩ I dx, computed exactly for
/// the piecewise-constant function taking values[k] on the k-th of m equal
/// cells of the domain.
inline double osc1(std::span<const double> values, Interval domain, double rho) {
  detail::check_sampled(values);
  if (!(rho > 0.0)) throw DomainError("osc1: rho must be positive");
  const detail::RangeExtrema rx(values);
  return detail::osc1_exact(rx, values.size(), domain, rho);
}

/// V_{1,1/p}(f) ≈ max over a geometric grid of rho in [1/m, rho0] of
/// osc_1(f, rho) / rho^(1/p).
inline double bv_seminorm(std::span<const double> values, Interval domain, double p, double rho0 = 0.1,
                          std::size_t n_rho = 40) {
  detail::check_sampled(values);
  if (!(p >= 1.0)) throw DomainError("bv_seminorm: p must be >= 1");
  if (!(rho0 > 0.0) || n_rho < 1) throw DomainError("bv_seminorm: bad rho grid");
  const detail::RangeExtrema rx(values);
  const double rho_min = std::min(rho0, domain.length() / static_cast<double>(values.size()));
  double best = 0.0;
  for (std::size_t k = 0; k < n_rho; ++k) {
    const double t = n_rho == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(n_rho - 1);
    const double rho = rho_min * std::pow(rho0 / rho_min, t);
    best = std::max(best, detail::osc1_exact(rx, values.size(), domain, rho) / std::pow(rho, 1.0 / p));
  }
  return best;
}

struct OscNorm {
  double osc1 = 0.0;
  double v_1_1p = 0.0;
};

inline OscNorm osc_norm(std::span<const double> values, Interval domain, double rho, double rho0, double p) {
  if (!(rho > 0.0) || rho > rho0) throw DomainError("osc_norm: need 0 < rho <= rho0");
  return {osc1(values, domain, rho), bv_seminorm(values, domain, p, rho0)};
}

/// ||f||_{1,1/p} = V_{1,1/p}(f) + ||f||_1.
inline double bv_norm(std::span<const double> values, Interval domain, double p, double rho0 = 0.1) {
  CompensatedSum l1;
  for (double v : values) l1.add(std::abs(v));
  return bv_seminorm(values, domain, p, rho0) + l1.value() * domain.length() / static_cast<double>(values.size());
}

/// Cell averages of a function, by 8-point Gauss-Legendre per cell.
template <class F>
std::vector<double> cell_averages(const Partition& part, F&& f) {
  static constexpr std::array<double, 4> nodes{0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                               0.9602898564975363};
  static constexpr std::array<double, 4> weights{0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                                 0.1012285362903763};
  std::vector<double> out(part.size());
  for (std::size_t i = 0; i < part.size(); ++i) {
    const auto c = part.cell(i);
    const double mid = 0.5 * (c.lo + c.hi), half = 0.5 * c.length();
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += weights[k] * (f(mid - half * nodes[k]) + f(mid + half * nodes[k]));
    out[i] = 0.5 * s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export.

inline io::Table density_table(const Density& d) {
  io::Table t({"cell_index", "left_endpoint", "weight"});
  for (std::size_t i = 0; i < d.weights.size(); ++i) {
    t.add_row({static_cast<std::uint64_t>(i), d.partition.cell(i).lo, d.weights[i]});
  }
  return t;
}

inline io::Table decay_table(const DecayResult& r) {
  io::Table t({"n", "l1_norm"});
  for (std::size_t i = 0; i < r.norms.size(); ++i) t.add_row({static_cast<std::uint64_t>(i + 1), r.norms[i]});
  return t;
}

}  // namespace lorvar::onedmap

#endif  // LORVAR_ONEDMAP_HPP
