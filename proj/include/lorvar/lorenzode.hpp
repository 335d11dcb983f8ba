#ifndef LORVAR_LORENZODE_HPP
#define LORVAR_LORENZODE_HPP

// Classical Lorenz equations: DOPRI5 integration with dense output, returns
// to the plane z = rho - 1, and the empirical one-dimensional quotient map.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "lorvar/core/error.hpp"
#include "lorvar/core/io.hpp"
#include "lorvar/core/rng.hpp"
#include "lorvar/core/stats.hpp"
#include "lorvar/suspension.hpp"

namespace lorvar::lorenzode {

using State = std::array<double, 3>;

struct OdeParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  double eps = 0.0;

  /// sigma = 10, beta = 8/3, rho = 28 + eps.
  static OdeParams from_eps(double eps) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw ModelViolation("OdeParams: eps must lie in [0, 1]");
    return {10.0, 28.0 + eps, 8.0 / 3.0, eps};
  }

  /// Plane through the two nonzero equilibria.
  double z_section() const noexcept { return rho - 1.0; }

  State rhs(const State& s) const noexcept {
    return {sigma * (s[1] - s[0]), s[0] * (rho - s[2]) - s[1], s[0] * s[1] - beta * s[2]};
  }
};

namespace detail {

inline State axpy(const State& y, double h, std::initializer_list<std::pair<double, const State*>> terms) {
  State out = y;
  for (const auto& [c, k] : terms) {
    for (std::size_t i = 0; i < 3; ++i) out[i] += h * c * (*k)[i];
  }
  return out;
}

}  // namespace detail

/// One accepted DOPRI5 step with Hairer's fourth-order continuous extension.
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  std::array<State, 5> rcont{};

  double t1() const noexcept { return t0 + h; }
  const State& y0() const noexcept { return rcont[0]; }

  State at(double t) const noexcept { return at_theta((t - t0) / h); }

  /// State at t0 + theta h; resolves the step independently of |t0|.
  State at_theta(double th) const noexcept {
    const double th1 = 1.0 - th;
    State out{};
    for (std::size_t i = 0; i < 3; ++i) {
      out[i] = rcont[0][i] +
               th * (rcont[1][i] + th1 * (rcont[2][i] + th * (rcont[3][i] + th1 * rcont[4][i])));
    }
    return out;
  }
};

/// Adaptive Dormand-Prince 5(4) stepper; the mixed error norm
/// |e_i| / (tol (1 + max(|y0_i|, |y1_i|))) is kept <= 1 per step.
class Dopri5 {
 public:
  Dopri5(const OdeParams& p, const State& y0, double t0, double tol, double h0 = 1e-3)
      : p_(p), y_(y0), t_(t0), h_(h0), tol_(tol) {
    if (!(tol >= 1e-14 && tol <= 1e-3)) throw DomainError("Dopri5: tolerance out of range");
    k1_ = p_.rhs(y_);
  }

  double t() const noexcept { return t_; }
  const State& y() const noexcept { return y_; }
  std::size_t rejected() const noexcept { return rejected_; }

  /// Advances by one accepted step, never past t_stop.
  DenseStep step(double t_stop = std::numeric_limits<double>::infinity()) {
    while (true) {
      double h = std::min(h_, t_stop - t_);
      if (!(h > 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t_)))) {
        throw StepSizeUnderflow("Dopri5: step size underflow at t = " + io::format_double(t_));
      }
      State y1, k7, err;
      std::array<State, 7> k;
      attempt(h, y1, k, err);
      k7 = k[6];
      double norm = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        const double sc = tol_ * (1.0 + std::max(std::abs(y_[i]), std::abs(y1[i])));
        norm += (err[i] / sc) * (err[i] / sc);
      }
      norm = std::sqrt(norm / 3.0);
      const double fac = std::clamp(0.9 * std::pow(std::max(norm, 1e-10), -0.2), 0.2, 5.0);
      if (norm <= 1.0) {
        DenseStep d;
        d.t0 = t_;
        d.h = h;
        dense(d, y1, k, h);
        t_ += h;
        y_ = y1;
        k1_ = k7;
        if (h == h_ || fac < 1.0) h_ = h * fac;
        return d;
      }
      ++rejected_;
      h_ = h * std::min(1.0, fac);
    }
  }

  /// One step of size h without error control, from (t, y).
  static State fixed_step(const OdeParams& p, const State& y, double h) {
    Dopri5 s(p, y, 0.0, 1e-6);
    State y1, err;
    std::array<State, 7> k;
    s.attempt(h, y1, k, err);
    return y1;
  }

 private:
  void attempt(double h, State& y1, std::array<State, 7>& k, State& err) const {
    k[0] = k1_;
    k[1] = p_.rhs(detail::axpy(y_, h, {{1.0 / 5.0, &k[0]}}));
    k[2] = p_.rhs(detail::axpy(y_, h, {{3.0 / 40.0, &k[0]}, {9.0 / 40.0, &k[1]}}));
    k[3] = p_.rhs(detail::axpy(y_, h, {{44.0 / 45.0, &k[0]}, {-56.0 / 15.0, &k[1]}, {32.0 / 9.0, &k[2]}}));
    k[4] = p_.rhs(detail::axpy(y_, h,
                               {{19372.0 / 6561.0, &k[0]},
                                {-25360.0 / 2187.0, &k[1]},
                                {64448.0 / 6561.0, &k[2]},
                                {-212.0 / 729.0, &k[3]}}));
    k[5] = p_.rhs(detail::axpy(y_, h,
                               {{9017.0 / 3168.0, &k[0]},
                                {-355.0 / 33.0, &k[1]},
                                {46732.0 / 5247.0, &k[2]},
                                {49.0 / 176.0, &k[3]},
                                {-5103.0 / 18656.0, &k[4]}}));
    y1 = detail::axpy(y_, h,
                      {{35.0 / 384.0, &k[0]},
                       {500.0 / 1113.0, &k[2]},
                       {125.0 / 192.0, &k[3]},
                       {-2187.0 / 6784.0, &k[4]},
                       {11.0 / 84.0, &k[5]}});
    k[6] = p_.rhs(y1);
    constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                     e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
    for (std::size_t i = 0; i < 3; ++i) {
      err[i] = h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i]);
    }
  }

  void dense(DenseStep& d, const State& y1, const std::array<State, 7>& k, double h) const {
    constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                     d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                     d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double ydiff = y1[i] - y_[i];
      const double bspl = h * k[0][i] - ydiff;
      d.rcont[0][i] = y_[i];
      d.rcont[1][i] = ydiff;
      d.rcont[2][i] = bspl;
      d.rcont[3][i] = ydiff - h * k[6][i] - bspl;
      d.rcont[4][i] =
          h * (d1 * k[0][i] + d3 * k[2][i] + d4 * k[3][i] + d5 * k[4][i] + d6 * k[5][i] + d7 * k[6][i]);
    }
  }

  OdeParams p_;
  State y_;
  double t_;
  double h_;
  double tol_;
  State k1_{};
  std::size_t rejected_ = 0;
};

struct Trajectory {
  std::vector<DenseStep> steps;
  State final_state{};

  double t_end() const noexcept { return steps.empty() ? 0.0 : steps.back().t1(); }

  /// Dense-output state at any t inside the integrated range.
  State at(double t) const {
    if (steps.empty()) return final_state;
    auto it = std::upper_bound(steps.begin(), steps.end(), t, [](double v, const DenseStep& s) { return v < s.t0; });
    if (it != steps.begin()) --it;
    return it->at(t);
  }
};

inline Trajectory integrate(const OdeParams& p, const State& state0, double t_end, double tol) {
  if (!(tol >= 1e-12 && tol <= 1e-6)) throw DomainError("integrate: tol must lie in [1e-12, 1e-6]");
  if (!(t_end >= 0.0)) throw DomainError("integrate: t_end must be >= 0");
  Trajectory tr;
  Dopri5 s(p, state0, 0.0, tol);
  while (s.t() < t_end) tr.steps.push_back(s.step(t_end));
  tr.final_state = s.y();
  return tr;
}

/// Fixed-step DOPRI5 (fifth order) for convergence checks.
inline State integrate_fixed(const OdeParams& p, const State& state0, double t_end, std::size_t n_steps) {
  State y = state0;
  const double h = t_end / static_cast<double>(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) y = Dopri5::fixed_step(p, y, h);
  return y;
}

/// Eigenvalues of the Jacobian at the origin, sorted l2 < l3 < 0 < l1.
inline suspension::LinearizedLocalFlow singularity_eigenvalues(const OdeParams& p) {
  Eigen::Matrix3d J;
  J << -p.sigma, p.sigma, 0.0, p.rho, -1.0, 0.0, 0.0, 0.0, -p.beta;
  const Eigen::EigenSolver<Eigen::Matrix3d> es(J, false);
  std::array<double, 3> ev{};
  for (int i = 0; i < 3; ++i) {
    if (std::abs(es.eigenvalues()[i].imag()) > 1e-12) throw ModelViolation("complex eigenvalue at the singularity");
    ev[static_cast<std::size_t>(i)] = es.eigenvalues()[i].real();
  }
  std::sort(ev.begin(), ev.end());
  // Sorted ascending: l2 < l3 < 0 < l1 in the model's naming.
  return suspension::LinearizedLocalFlow(ev[2], ev[0], ev[1]);
}

// ---------------------------------------------------------------------------
// Poincare section.

struct SectionCrossing {
  double t = 0.0;
  State state{};
  double time_since_prev = 0.0;
  double zdot = 0.0;
  bool downward = true;
};

struct SectionOptions {
  double tol = 1e-10;
  double transient = 50.0;
  std::optional<double> z_section;  // defaults to rho - 1
  double time_budget_per_return = 10.0;
};

namespace detail {

/// Root of z = zs inside a dense step, as a step fraction theta, by
/// bisection followed by one Newton step on the interpolant.
inline double refine_crossing(const DenseStep& d, double zs, const OdeParams& p) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && std::abs(d.at_theta(0.5 * (lo + hi))[2] - zs) > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (d.at_theta(mid)[2] > zs) lo = mid;
    else hi = mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon()) break;
  }
  double th = 0.5 * (lo + hi);
  const State s = d.at_theta(th);
  const double zdot = p.rhs(s)[2] * d.h;
  const double tn = th - (s[2] - zs) / zdot;
  if (tn >= 0.0 && tn <= 1.0 && std::abs(d.at_theta(tn)[2] - zs) <= std::abs(s[2] - zs)) th = tn;
  return th;
}

}  // namespace detail

/// Downward crossings of z = z_section after a transient.  The initial state
/// is drawn from (seed, stream 0); every crossing after the first is
/// returned, so all carry a return time.
inline std::vector<SectionCrossing> section_returns(const OdeParams& p, std::size_t n_returns, std::uint64_t seed,
                                                    const SectionOptions& opt = {}) {
  const double zs = opt.z_section.value_or(p.z_section());
  RandomStream rng(seed, 0);
  const State y0{rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(15.0, 35.0)};
  Dopri5 s(p, y0, 0.0, opt.tol);
  while (s.t() < opt.transient) s.step(opt.transient);
  const double budget = opt.transient + opt.time_budget_per_return * static_cast<double>(n_returns + 1) + 100.0;
  std::vector<SectionCrossing> out;
  out.reserve(n_returns);
  std::optional<double> prev;
  while (out.size() < n_returns) {
    if (s.t() > budget) {
      throw PartialResult("section_returns: only " + std::to_string(out.size()) + " crossings within the time budget",
                          out.size());
    }
    const DenseStep d = s.step();
    const double za = d.y0()[2], zb = s.y()[2];
    if (!(za > zs && zb <= zs)) continue;
    const double th = detail::refine_crossing(d, zs, p);
    const double tc = d.t0 + th * d.h;
    const State st = d.at_theta(th);
    if (prev) out.push_back({tc, st, tc - *prev, p.rhs(st)[2], true});
    prev = tc;
  }
  return out;
}

inline io::Table crossings_table(std::span<const SectionCrossing> c) {
  io::Table t({"t", "x", "y", "z", "tau"});
  for (const auto& k : c) t.add_row({k.t, k.state[0], k.state[1], k.state[2], k.time_since_prev});
  return t;
}

// ---------------------------------------------------------------------------
// Empirical quotient map.

struct EmpiricalQuotient {
  std::array<double, 2> gamma_direction{};  // stable line through the z-axis
  std::array<double, 2> axis{};             // unit normal to it, x-component >= 0
  double principal_angle = 0.0;  // angle between axis and the folded cloud's first principal component
  double scale = 1.0;            // extent of the projected cloud
  double origin_offset = 0.0;    // u of the z-axis point (0, 0), which lies on the stable set
  double resolution = 0.0;       // largest gap between the crossings straddling the stable line, in u units
  std::vector<double> u;         // signed distance to the stable line / scale
  std::vector<double> bin_center;
  std::vector<double> image;  // mean of u_{i+1} over crossings i in the bin; NaN if empty
  std::vector<std::size_t> count;
  std::vector<double> density;  // normalized histogram of u
  double bin_width = 0.0;
  double violation_fraction = 0.0;   // decreasing neighbour pairs within branches
  double image_right_of_zero = 0.0;  // T(0+)
  double image_left_of_zero = 0.0;   // T(0-)
  std::size_t left_bins = 0;
  std::size_t right_bins = 0;

  bool two_branches() const noexcept {
    return left_bins >= 2 && right_bins >= 2 && violation_fraction <= 0.05;
  }

  io::Table table() const {
    io::Table t({"bin_center", "image_estimate", "count"});
    for (std::size_t b = 0; b < bin_center.size(); ++b) {
      t.add_row({bin_center[b], image[b], static_cast<std::uint64_t>(count[b])});
    }
    return t;
  }
};

/// Quotient along the stable set.  The section meets the attractor in two
/// parallel segments, one per wing, and the stable manifold of the origin in
/// a curve through the z-axis that crosses both.  That curve is fitted as a
/// line through (0, 0) to the 32 crossings with the longest following return;
/// the coordinate is the signed distance to it, which identifies points of the
/// two segments lying on a common stable leaf.  Successive pairs are binned.
inline EmpiricalQuotient empirical_quotient(std::span<const SectionCrossing> c, std::size_t n_bins,
                                            std::size_t min_crossings = 100000, double max_violation = 0.05,
                                            std::size_t min_bin_count = 10) {
  if (c.size() < min_crossings) throw DomainError("empirical_quotient: too few crossings");
  if (n_bins < 8) throw DomainError("empirical_quotient: need at least 8 bins");
  EmpiricalQuotient q;
  const std::size_t n = c.size();

  std::vector<std::size_t> idx(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) idx[i] = i;
  const std::size_t top = std::min<std::size_t>(32, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(),
                    [&](std::size_t i, std::size_t j) { return c[i + 1].time_since_prev > c[j + 1].time_since_prev; });
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  for (std::size_t k = 0; k < top; ++k) {
    const Eigen::Vector2d p(c[idx[k]].state[0], c[idx[k]].state[1]);
    m += p * p.transpose();
  }
  const Eigen::Vector2d g = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(m).eigenvectors().col(1);
  Eigen::Vector2d a(-g[1], g[0]);
  if (a[0] < 0.0) a = -a;
  q.gamma_direction = {g[0], g[1]};
  q.axis = {a[0], a[1]};

  // Folding by the symmetry (x, y) -> (-x, -y) overlays the two segments.
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& k : c) mean += (k.state[0] >= 0.0 ? 1.0 : -1.0) * Eigen::Vector2d(k.state[0], k.state[1]);
  mean /= static_cast<double>(n);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& k : c) {
    const Eigen::Vector2d d = (k.state[0] >= 0.0 ? 1.0 : -1.0) * Eigen::Vector2d(k.state[0], k.state[1]) - mean;
    cov += d * d.transpose();
  }
  const Eigen::Vector2d pc = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvectors().col(1);

  // Refinement: near the line the image changes sign across the stable set.
  // On each segment the boundary is the midpoint of the adjacent pair that
  // best separates positive from negative images; the line is then taken
  // through the two boundary points.
  auto offset = [&](const SectionCrossing& k) { return k.state[0] * a[0] + k.state[1] * a[1]; };
  const double crude_scale = [&] {
    double lo = offset(c[0]), hi = lo;
    for (const auto& k : c) {
      lo = std::min(lo, offset(k));
      hi = std::max(hi, offset(k));
    }
    return hi - lo;
  }();
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
  std::array<Eigen::Vector2d, 2> boundary;
  bool refined = true;
  for (int side = 0; side < 2; ++side) {
    std::vector<std::size_t> near;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const bool right = c[i].state[0] * g[0] + c[i].state[1] * g[1] > 0.0;
      if (right == (side == 0) && std::abs(offset(c[i])) < 0.01 * crude_scale) near.push_back(i);
    }
    std::sort(near.begin(), near.end(), [&](std::size_t i, std::size_t j) { return offset(c[i]) < offset(c[j]); });
    if (near.size() < 2) {
      refined = false;
      break;
    }
    // agree[k]: images of near[0..k) positive and of near[k..) negative.
    std::size_t pos_before = 0, neg_after = 0;
    for (std::size_t i : near) neg_after += offset(c[i + 1]) < 0.0;
    std::size_t best_k = 1, best = 0;
    for (std::size_t k = 0; k <= near.size(); ++k) {
      const std::size_t agree = std::max(pos_before + neg_after, k - pos_before + (near.size() - k - neg_after));
      if (k >= 1 && k < near.size() && agree > best) {
        best = agree;
        best_k = k;
      }
      if (k < near.size()) {
        const bool positive = offset(c[near[k] + 1]) > 0.0;
        pos_before += positive;
        neg_after -= !positive;
      }
    }
    const auto& p0 = c[near[best_k - 1]].state;
    const auto& p1 = c[near[best_k]].state;
    q.resolution = std::max(q.resolution, (offset(c[near[best_k]]) - offset(c[near[best_k - 1]])) / crude_scale);
    boundary[static_cast<std::size_t>(side)] = Eigen::Vector2d(0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1]));
  }
  if (refined) {
    Eigen::Vector2d dir = (boundary[0] - boundary[1]).normalized();
    anchor = boundary[0];
    a = Eigen::Vector2d(-dir[1], dir[0]);
    if (a[0] < 0.0) a = -a;
    q.gamma_direction = {dir[0], dir[1]};
    q.axis = {a[0], a[1]};
  }
  q.principal_angle = std::acos(std::min(1.0, std::abs(pc.dot(a))));

  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = (c[i].state[0] - anchor[0]) * a[0] + (c[i].state[1] - anchor[1]) * a[1];
  const auto [lo_it, hi_it] = std::minmax_element(s.begin(), s.end());
  q.scale = *hi_it - *lo_it;
  q.origin_offset = -(anchor[0] * a[0] + anchor[1] * a[1]) / q.scale;

  q.u.resize(n);
  for (std::size_t i = 0; i < n; ++i) q.u[i] = s[i] / q.scale;
  const double umin = *lo_it / q.scale, umax = *hi_it / q.scale;
  q.bin_width = (umax - umin) / static_cast<double>(n_bins);
  auto bin_of = [&](double v) {
    return std::min(n_bins - 1, static_cast<std::size_t>(std::max(0.0, (v - umin) / q.bin_width)));
  };
  std::vector<CompensatedSum> sums(n_bins);
  q.count.assign(n_bins, 0);
  std::vector<std::size_t> hist(n_bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = bin_of(q.u[i]);
    ++hist[b];
    if (i + 1 < n) {
      sums[b].add(q.u[i + 1]);
      ++q.count[b];
    }
  }
  q.bin_center.resize(n_bins);
  q.image.resize(n_bins);
  q.density.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    q.bin_center[b] = umin + (static_cast<double>(b) + 0.5) * q.bin_width;
    q.image[b] = q.count[b] ? sums[b].value() / static_cast<double>(q.count[b]) : std::nan("");
    q.density[b] = static_cast<double>(hist[b]) / (static_cast<double>(n) * q.bin_width);
  }

  // Branches exclude the bin holding the discontinuity and bins with fewer
  // than min_bin_count crossings.
  const std::size_t b0 = bin_of(0.0);
  std::size_t pairs = 0, bad = 0;
  auto scan = [&](std::size_t from, std::size_t to, std::size_t& nonempty) {
    double last = std::nan("");
    for (std::size_t b = from; b < to; ++b) {
      if (q.count[b] < min_bin_count) continue;
      ++nonempty;
      if (!std::isnan(last)) {
        ++pairs;
        if (q.image[b] < last) ++bad;
      }
      last = q.image[b];
    }
  };
  scan(0, b0, q.left_bins);
  scan(b0 + 1, n_bins, q.right_bins);
  q.violation_fraction = pairs ? static_cast<double>(bad) / static_cast<double>(pairs) : 1.0;

  // Branch ends: median image over 1e-4 < |u| <= 1e-3, widened tenfold
  // while fewer than 10 crossings qualify.  The guard keeps the window clear
  // of the error in the fitted stable line.
  auto branch_end = [&](double sign) {
    for (double g = 1e-4; g < 0.1; g *= 10.0) {
      std::vector<double> img;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double v = sign * q.u[i];
        if (v > g && v <= 10.0 * g) img.push_back(q.u[i + 1]);
      }
      if (img.size() >= 10) {
        std::nth_element(img.begin(), img.begin() + static_cast<std::ptrdiff_t>(img.size() / 2), img.end());
        return img[img.size() / 2];
      }
    }
    throw ProjectionQualityError("empirical_quotient: no crossings near the discontinuity");
  };
  q.image_right_of_zero = branch_end(1.0);
  q.image_left_of_zero = branch_end(-1.0);
  if (q.violation_fraction > max_violation) {
    throw ProjectionQualityError("empirical_quotient: monotonicity violated in " +
                                 io::format_double(100.0 * q.violation_fraction) + "% of bin pairs");
  }
  return q;
}

/// Least-squares slope of the following return time against -log|u| over
/// the n_fit crossings nearest the stable line, excluding those within
/// guard * resolution of it.  The window tightens as the sample grows.
inline LinearFit return_time_regression(const EmpiricalQuotient& q, std::span<const SectionCrossing> c,
                                        std::size_t n_fit = 1000, double guard = 4.0) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    if (std::abs(q.u[i]) > guard * q.resolution && q.u[i] != 0.0) idx.push_back(i);
  }
  const std::size_t keep = n_fit;
  if (keep < 3 || keep > idx.size()) throw DomainError("return_time_regression: too few crossings near the stable line");
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                   [&](std::size_t i, std::size_t j) { return std::abs(q.u[i]) < std::abs(q.u[j]); });
  std::vector<double> xs(keep), ys(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    xs[k] = -std::log(std::abs(q.u[idx[k]]));
    ys[k] = c[idx[k] + 1].time_since_prev;
  }
  return linear_fit(xs, ys);
}

/// Fit of log P(tau > N) against N over thresholds with at least min_count
/// exceedances.
inline LinearFit return_time_tail(std::span<const SectionCrossing> c, std::size_t min_count = 20, double step = 0.05) {
  std::vector<double> taus;
  for (const auto& k : c) taus.push_back(k.time_since_prev);
  std::sort(taus.begin(), taus.end());
  const double med = taus[taus.size() / 2];
  std::vector<double> xs, ys;
  for (double N = med;; N += step) {
    const auto above = static_cast<std::size_t>(taus.end() - std::upper_bound(taus.begin(), taus.end(), N));
    if (above < min_count) break;
    xs.push_back(N);
    ys.push_back(std::log(static_cast<double>(above) / static_cast<double>(taus.size())));
  }
  if (xs.size() < 3) throw DomainError("return_time_tail: too few thresholds");
  return linear_fit(xs, ys);
}

}  // namespace lorvar::lorenzode

#endif  // LORVAR_LORENZODE_HPP
