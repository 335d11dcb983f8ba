#ifndef LORVAR_SUSPENSION_HPP
#define LORVAR_SUSPENSION_HPP

// Suspension flow over the skew product with a log-singular roof: induced
// observables, truncation, and the flow variance obtained from the map level.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lorvar/core/error.hpp"
#include "lorvar/core/io.hpp"
#include "lorvar/core/normality.hpp"
#include "lorvar/core/parallel.hpp"
#include "lorvar/core/quadrature.hpp"
#include "lorvar/core/rng.hpp"
#include "lorvar/core/stats.hpp"
#include "lorvar/onedmap.hpp"
#include "lorvar/skewmap.hpp"

namespace lorvar::suspension {

using skewmap::OrbitEnsemble;
using skewmap::Point;
using skewmap::SkewProduct;
using Vec3 = std::array<double, 3>;

/// Eigenvalues of the linearization at the singularity, l2 < l3 < 0 < l1
/// with l1 + l3 > 0.
struct LinearizedLocalFlow {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;

  LinearizedLocalFlow(double l1, double l2, double l3) : lambda1(l1), lambda2(l2), lambda3(l3) {
    if (!(lambda2 < lambda3 && lambda3 < 0.0 && 0.0 < lambda1)) {
      throw ModelViolation("eigenvalues must satisfy lambda2 < lambda3 < 0 < lambda1");
    }
    if (!(lambda1 + lambda3 > 0.0)) throw ModelViolation("eigenvalues must satisfy lambda1 + lambda3 > 0");
  }

  /// Closed-form eigenvalues of the Lorenz equations at the origin for
  /// sigma = 10, rho = 28 + eps, beta = 8/3: the roots of
  /// l^2 + 11 l - 270 - 10 eps = 0 and -8/3.
  static LinearizedLocalFlow lorenz(double eps = 0.0) {
    const double disc = std::sqrt(1201.0 + 40.0 * eps);
    return {(-11.0 + disc) / 2.0, (-11.0 - disc) / 2.0, -8.0 / 3.0};
  }

  /// Upper bound -l3 beta / (l1 - l3) for the Holder exponent of the induced
  /// observable of a C^beta observable.
  double holder_bound(double beta) const noexcept { return -lambda3 * beta / (lambda1 - lambda3); }
};

/// tau(x, y) = -log|x| / lambda1 + tau2 with constant tau2, optionally capped
/// at N; or a constant roof in test mode.
struct RoofFunction {
  double lambda1 = 0.0;
  double tau2 = 1.0;
  std::optional<double> n_cap;
  std::optional<double> constant;

  double operator()(double x) const {
    if (constant) return n_cap ? std::min(*constant, *n_cap) : *constant;
    if (x == 0.0) throw SingularityError("infinite roof at x = 0");
    const double t = -std::log(std::abs(x)) / lambda1 + tau2;
    return n_cap ? std::min(t, *n_cap) : t;
  }

  /// Lebesgue measure of {tau > N} on I x I (uniform in y).
  double exceedance_measure(double N) const {
    if (constant) return *constant > N ? 1.0 : 0.0;
    return std::min(1.0, 2.0 * std::exp(-lambda1 * (N - tau2)));
  }
};

/// A continuous observable on R^3 with its Holder data.  Integrals along the
/// flow use the centered form psi(p) - psi(0).
struct FlowObservable {
  std::string name;
  std::function<double(double, double, double)> psi;
  double beta = 1.0;
  double holder_constant = 1.0;

  double centered(const Vec3& p) const { return psi(p[0], p[1], p[2]) - psi(0.0, 0.0, 0.0); }
};

/// The built-in observables x, z, cos z and x + delta cos z.  Their Holder
/// constants (beta = 1) are sup |grad psi|.
inline FlowObservable observable_x() { return {"x", [](double x, double, double) { return x; }, 1.0, 1.0}; }
inline FlowObservable observable_z() { return {"z", [](double, double, double z) { return z; }, 1.0, 1.0}; }
inline FlowObservable observable_cos_z() {
  return {"cos_z", [](double, double, double z) { return std::cos(z); }, 1.0, 1.0};
}
inline FlowObservable observable_x_plus_cos_z(double delta) {
  return {"x+" + io::format_double(delta) + "cos_z",
          [delta](double x, double, double z) { return x + delta * std::cos(z); }, 1.0, std::hypot(1.0, delta)};
}
inline FlowObservable observable_constant(double c) {
  return {"const", [c](double, double, double) { return c; }, 1.0, 0.0};
}

inline FlowObservable observable_by_name(const std::string& name) {
  if (name == "x") return observable_x();
  if (name == "z") return observable_z();
  if (name == "cos_z") return observable_cos_z();
  throw DomainError("unknown flow observable '" + name + "' (expected x, z or cos_z)");
}

/// The suspension flow over F.  A return from xi = (x, y, 1) first follows
/// the linearized flow (x e^{l1 t}, y e^{l2 t}, e^{l3 t}) until |x| e^{l1 t} = 1,
/// reaching xi' = (sign x, y |x|^{-l2/l1}, |x|^{-l3/l1}), and then a cubic
/// Bezier arc of duration tau2 from xi' back to (T x, g(x, y), 1).  In
/// constant-roof mode the whole return is the arc from (x, y, 1) to
/// (T x, g(x, y), 1) lifted to height 2, of duration equal to the roof.
class SuspensionFlow {
 public:
  SuspensionFlow(SkewProduct F, LinearizedLocalFlow flow, double tau2 = 1.0, std::optional<double> constant_roof = {},
                 double tol = 1e-9)
      : F_(std::move(F)), flow_(flow), roof_{flow.lambda1, tau2, {}, constant_roof}, tol_(tol) {
    if (!(tau2 > 0.0)) throw ModelViolation("tau2 must be positive");
    if (constant_roof && !(*constant_roof > 0.0)) throw ModelViolation("constant roof must be positive");
  }

  const SkewProduct& map() const noexcept { return F_; }
  const LinearizedLocalFlow& local_flow() const noexcept { return flow_; }
  const RoofFunction& roof() const noexcept { return roof_; }
  bool constant_roof() const noexcept { return roof_.constant.has_value(); }
  double tolerance() const noexcept { return tol_; }

  double tau(double x) const { return roof_(x); }

  /// Length of the linearized part of the return from x.
  double linear_time(double x) const {
    if (constant_roof()) return 0.0;
    if (x == 0.0) throw SingularityError("infinite roof at x = 0");
    return -std::log(std::abs(x)) / flow_.lambda1;
  }

  /// X(xi, t) for 0 <= t <= tau(xi).
  Vec3 position(Point xi, double t) const {
    const double t1 = linear_time(xi.x);
    if (t <= t1) return linear_position(xi, t);
    const auto arc = arc_controls(xi);
    return bezier(arc, (t - t1) / arc_duration(xi));
  }

  /// ∫_a^b psi~(X(xi, t)) dt over a window of one return, 0 <= a <= b <= tau.
  double integrate(const FlowObservable& obs, Point xi, double a, double b) const {
    if (xi.x == 0.0 && !constant_roof()) throw SingularityError("induced observable undefined at x = 0");
    const double tau_xi = tau(xi.x);
    b = std::min(b, tau_xi);
    if (!(b > a)) return 0.0;
    const double t1 = linear_time(xi.x);
    double total = 0.0;
    if (a < t1) total += integrate_linear(obs, xi, a, std::min(b, t1));
    if (b > t1) {
      const auto arc = arc_controls(xi);
      const double dur = arc_duration(xi);
      const double s0 = std::max(0.0, (a - t1) / dur);
      const double s1 = std::min(1.0, (b - t1) / dur);
      if (s1 > s0) {
        auto f = [&](double s) { return obs.centered(bezier(arc, s)); };
        total += dur * integrate_adaptive(f, s0, s1, 0.5 * tol_ / dur).value;
      }
    }
    return total;
  }

  /// Psi(xi) = ∫_0^tau psi~(X(xi, t)) dt.
  double induce(const FlowObservable& obs, Point xi) const { return integrate(obs, xi, 0.0, tau(xi.x)); }

  /// Psi_N(xi) = ∫_0^{min(tau, N)} psi~(X(xi, t)) dt.
  double induce_truncated(const FlowObservable& obs, Point xi, double N) const {
    return integrate(obs, xi, 0.0, std::min(tau(xi.x), N));
  }

  /// Psi as an observable on the section.
  skewmap::Observable induced(const FlowObservable& obs) const {
    return [this, obs](double x, double y) { return induce(obs, {x, y}); };
  }

 private:
  using Controls = std::array<Vec3, 4>;

  Vec3 linear_position(Point xi, double t) const {
    return {xi.x * std::exp(flow_.lambda1 * t), xi.y * std::exp(flow_.lambda2 * t), std::exp(flow_.lambda3 * t)};
  }

  double arc_duration(Point xi) const { return constant_roof() ? tau(xi.x) : roof_.tau2; }

  Controls arc_controls(Point xi) const {
    const Point next = F_(xi);
    const Vec3 p3{next.x, next.y, 1.0};
    const Vec3 p2{next.x, next.y, 2.0};
    if (constant_roof()) {
      const Vec3 p0{xi.x, xi.y, 1.0};
      return {p0, Vec3{xi.x, xi.y, 2.0}, p2, p3};
    }
    const double ax = std::abs(xi.x);
    const double s = xi.x > 0.0 ? 1.0 : -1.0;
    const Vec3 p0{s, xi.y * std::pow(ax, -flow_.lambda2 / flow_.lambda1), std::pow(ax, -flow_.lambda3 / flow_.lambda1)};
    return {p0, Vec3{2.0 * s, p0[1], p0[2] + 1.0}, p2, p3};
  }

  static Vec3 bezier(const Controls& c, double s) {
    const double r = 1.0 - s;
    const double b0 = r * r * r, b1 = 3.0 * r * r * s, b2 = 3.0 * r * s * s, b3 = s * s * s;
    Vec3 out{};
    for (std::size_t k = 0; k < 3; ++k) out[k] = b0 * c[0][k] + b1 * c[1][k] + b2 * c[2][k] + b3 * c[3][k];
    return out;
  }

  /// Linear segment on panels of duration log 2 / l1, i.e. u = |x| e^{l1 t}
  /// runs over [u, 2u]: the integrand changes by a bounded factor per panel.
  double integrate_linear(const FlowObservable& obs, Point xi, double a, double b) const {
    const double panel = std::log(2.0) / flow_.lambda1;
    const auto panels = static_cast<std::size_t>(std::ceil((b - a) / panel));
    const double tol = 0.5 * tol_ / static_cast<double>(std::max<std::size_t>(panels, 1));
    auto f = [&](double t) { return obs.centered(linear_position(xi, t)); };
    double total = 0.0;
    for (std::size_t k = 0; k < panels; ++k) {
      const double lo = a + panel * static_cast<double>(k);
      const double hi = std::min(b, lo + panel);
      if (hi > lo) total += integrate_adaptive(f, lo, hi, tol).value;
    }
    return total;
  }

  SkewProduct F_;
  LinearizedLocalFlow flow_;
  RoofFunction roof_;
  double tol_;
};

// ---------------------------------------------------------------------------
// Flow variance through the map level.

struct FlowVarianceResult {
  double eps = 0.0;
  VarianceEstimate flow;  // sigma^2 of the flow observable
  VarianceEstimate map;   // sigma^2_F of the flow-centered induced observable
  double mean_roof = 0.0;
  double mean_roof_stderr = 0.0;
  double flow_mean = 0.0;  // ∫ psi~ dmu_flow = ∫ Psi dmu_F / ∫ tau dmu_F
  bool roof_unstable = false;
  std::uint64_t seed = 0;

  io::JsonObject to_json() const {
    io::JsonObject o;
    o.add("eps", eps)
        .add("sigma2_flow", flow.value)
        .add("stderr", flow.stderr_)
        .add("sigma2_map", map.value)
        .add("mean_roof", mean_roof)
        .add("n_trunc", static_cast<std::uint64_t>(map.n_trunc))
        .add("seed", seed);
    return o;
  }
};

/// Induced values and roofs along an ensemble, evaluated in parallel.
struct InducedSeries {
  std::vector<double> psi;
  std::vector<double> tau;
};

inline InducedSeries induce_series(const SuspensionFlow& flow, const FlowObservable& obs, const OrbitEnsemble& e) {
  InducedSeries s{std::vector<double>(e.size()), std::vector<double>(e.size())};
  constexpr std::size_t kChunk = 2048;
  const std::size_t chunks = (e.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(e.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      s.psi[i] = flow.induce(obs, e.at(i));
      s.tau[i] = flow.tau(e.x[i]);
    }
  });
  return s;
}

/// sigma^2_flow = sigma^2_F(Psi - m tau) / mean(tau), m = mean(Psi) / mean(tau).
///
/// Subtracting m tau makes the induced observable that of the flow-centered
/// psi~ - ∫ psi~ dmu_flow; without it the ratio formula only holds for
/// observables of flow mean zero.  Relative errors of the two factors are
/// combined in quadrature.
inline FlowVarianceResult flow_variance_from_series(const InducedSeries& s, double eps, std::uint64_t seed,
                                                    const skewmap::GreenKuboOptions& opt = {}) {
  FlowVarianceResult r;
  r.eps = eps;
  r.seed = seed;
  const auto tau_mean = batch_mean(s.tau);
  r.mean_roof = tau_mean.value;
  r.mean_roof_stderr = tau_mean.stderr_;
  r.roof_unstable = !(tau_mean.stderr_ <= 0.05 * tau_mean.value);
  r.flow_mean = mean(s.psi) / r.mean_roof;
  std::vector<double> centered(s.psi.size());
  for (std::size_t i = 0; i < centered.size(); ++i) centered[i] = s.psi[i] - r.flow_mean * s.tau[i];
  r.map = skewmap::green_kubo(centered, seed, opt);
  r.flow = r.map;
  r.flow.value = r.map.value / r.mean_roof;
  const double rel_map = r.map.value != 0.0 ? r.map.stderr_ / std::abs(r.map.value) : 0.0;
  const double rel_tau = tau_mean.stderr_ / r.mean_roof;
  r.flow.stderr_ = r.map.value != 0.0 ? std::abs(r.flow.value) * std::hypot(rel_map, rel_tau)
                                      : r.map.stderr_ / r.mean_roof;
  for (double& v : r.flow.replicates) v /= r.mean_roof;
  return r;
}

inline FlowVarianceResult flow_variance(const SuspensionFlow& flow, const FlowObservable& obs, const OrbitEnsemble& e,
                                        const skewmap::GreenKuboOptions& opt = {}) {
  return flow_variance_from_series(induce_series(flow, obs, e), flow.map().base().eps(), e.seed, opt);
}

// ---------------------------------------------------------------------------
// Direct Monte-Carlo on the suspension flow.

struct FlowCltResult {
  VarianceEstimate estimate;
  double flow_mean = 0.0;
  NormalityDiagnostic normality;
  std::vector<double> block_values;
};

/// Variance of (∫_0^L psi~(X_s) ds - L m) / sqrt(L) over n_blocks independent
/// flow trajectories started on the section after a map burn-in; the last
/// return of each block contributes its partial window.
inline FlowCltResult flow_clt_oracle(const SuspensionFlow& flow, const FlowObservable& obs, double block_time,
                                     std::size_t n_blocks, std::uint64_t seed, std::size_t burn_in = 1000) {
  if (!(block_time > 0.0) || n_blocks < 8) throw DomainError("flow_clt_oracle: need block_time > 0 and >= 8 blocks");
  std::vector<double> integrals(n_blocks);
  constexpr std::uint64_t kStreamBase = std::uint64_t{1} << 40;
  parallel_for(n_blocks, [&](std::size_t b) {
    skewmap::Orbit orbit(flow.map(), seed, kStreamBase + b);
    for (std::size_t i = 0; i < burn_in; ++i) orbit.step();
    double elapsed = 0.0;
    CompensatedSum total;
    while (true) {
      const Point xi{orbit.x(), orbit.y()};
      const double t = flow.tau(xi.x);
      if (elapsed + t >= block_time) {
        total.add(flow.integrate(obs, xi, 0.0, block_time - elapsed));
        break;
      }
      total.add(flow.induce(obs, xi));
      elapsed += t;
      orbit.step();
    }
    integrals[b] = total.value();
  });
  FlowCltResult out;
  out.flow_mean = mean(integrals) / block_time;
  out.block_values.resize(n_blocks);
  const double root = std::sqrt(block_time);
  for (std::size_t b = 0; b < n_blocks; ++b) out.block_values[b] = (integrals[b] - block_time * out.flow_mean) / root;
  const auto v = sample_variance(out.block_values);
  out.estimate.value = v.variance;
  out.estimate.stderr_ = v.stderr_;
  out.estimate.method = VarianceMethod::BatchMeans;
  out.estimate.seed = seed;
  out.normality = clt_normality(out.block_values);
  return out;
}

// ---------------------------------------------------------------------------
// Truncation.

/// Ensemble average of |Psi - Psi_N|.  Zero whenever no sample has tau > N.
inline double empirical_truncation_error(const SuspensionFlow& flow, const FlowObservable& obs, const OrbitEnsemble& e,
                                         double N) {
  if (!(N > flow.roof().tau2)) throw DomainError("truncation level must exceed tau2");
  CompensatedSum s;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const Point xi = e.at(i);
    if (flow.tau(xi.x) > N) s.add(std::abs(flow.integrate(obs, xi, N, flow.tau(xi.x))));
  }
  return s.value() / static_cast<double>(e.size());
}

/// ∫ |Psi - Psi_N| dmu_F evaluated on the region {tau > N} = {|x| < r_N},
/// r_N = e^{-l1 (N - tau2)}, which ensembles of practical size never reach.
///
/// On that region the SRB measure factors as h(0+-) dx times the conditional
/// law of y near x = 0+-.  With |x| = r_N e^{-w} the integral becomes
///   sum_{+-} h(0+-) r_N E_y ∫_0^inf |Psi - Psi_N|(+-r_N e^{-w}, y) e^{-w} dw,
/// where h(0+-) comes from the Ulam density and the y-law from ensemble
/// points with 0 < +-x < y_window.
struct TruncationModel {
  double h_left = 0.0;
  double h_right = 0.0;
  std::vector<double> y_left;
  std::vector<double> y_right;
};

inline TruncationModel truncation_model(const SuspensionFlow& flow, const OrbitEnsemble& e, std::size_t cells = 4096,
                                        double y_window = 0.02, std::size_t max_y = 256) {
  TruncationModel m;
  const onedmap::Partition part(onedmap::MapFamily::kDomain, cells);
  const auto h = onedmap::invariant_density(onedmap::build_ulam(flow.map().base(), part));
  m.h_left = h.weights[cells / 2 - 1];
  m.h_right = h.weights[cells / 2];
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double x = e.x[i];
    if (x < 0.0 && x > -y_window && m.y_left.size() < max_y) m.y_left.push_back(e.y[i]);
    if (x > 0.0 && x < y_window && m.y_right.size() < max_y) m.y_right.push_back(e.y[i]);
  }
  if (m.y_left.empty() || m.y_right.empty()) throw DomainError("truncation_model: no ensemble points near x = 0");
  return m;
}

inline double truncation_error(const SuspensionFlow& flow, const FlowObservable& obs, const TruncationModel& m,
                               double N) {
  if (flow.constant_roof()) return 0.0;
  if (!(N > flow.roof().tau2)) throw DomainError("truncation level must exceed tau2");
  const double r = std::exp(-flow.local_flow().lambda1 * (N - flow.roof().tau2));
  if (!(r > 0.0)) return 0.0;
  auto side = [&](double sign, const std::vector<double>& ys) {
    std::vector<double> vals(ys.size());
    parallel_for(ys.size(), [&](std::size_t k) {
      auto f = [&](double w) {
        const Point xi{sign * r * std::exp(-w), ys[k]};
        return std::abs(flow.integrate(obs, xi, N, flow.tau(xi.x))) * std::exp(-w);
      };
      vals[k] = integrate_adaptive(f, 0.0, 40.0, 1e-9, 2000).value;
    });
    return mean(vals);
  };
  return r * (m.h_left * side(-1.0, m.y_left) + m.h_right * side(1.0, m.y_right));
}

struct TruncationCurve {
  std::vector<double> N;
  std::vector<double> error;      // model integral
  std::vector<double> empirical;  // ensemble average
  LinearFit fit;                  // log error against N
  bool exact_zero_regime = false;  // every empirical value below 1e-14

  io::Table table() const {
    io::Table t({"N", "error"});
    for (std::size_t i = 0; i < N.size(); ++i) t.add_row({N[i], error[i]});
    return t;
  }
};

inline TruncationCurve truncation_curve(const SuspensionFlow& flow, const FlowObservable& obs, const OrbitEnsemble& e,
                                        const std::vector<double>& levels) {
  TruncationCurve c;
  const auto model = truncation_model(flow, e);
  c.exact_zero_regime = true;
  std::vector<double> xs, ys;
  for (double N : levels) {
    c.N.push_back(N);
    c.error.push_back(truncation_error(flow, obs, model, N));
    c.empirical.push_back(empirical_truncation_error(flow, obs, e, N));
    if (c.empirical.back() >= 1e-14) c.exact_zero_regime = false;
    if (c.error.back() > 0.0) {
      xs.push_back(N);
      ys.push_back(std::log(c.error.back()));
    }
  }
  if (xs.size() >= 2) c.fit = linear_fit(xs, ys);
  return c;
}

// ---------------------------------------------------------------------------
// Regularity of the induced observable near the singular line.

struct HolderEstimate {
  double exponent = 0.0;  // log-log slope of the max quotient
  double bound = 0.0;     // -l3 beta / (l1 - l3)
  double r2 = 0.0;
};

/// Slope of log max_y |Psi(2^-k, y) - Psi(2^-k-1, y)| against log 2^-k for
/// k = 4..12 over n_y random fiber coordinates.
inline HolderEstimate holder_exponent(const SuspensionFlow& flow, const FlowObservable& obs, std::uint64_t seed,
                                      std::size_t n_y = 64) {
  RandomStream rng(seed, 0);
  std::vector<double> ys(n_y);
  for (double& y : ys) y = rng.uniform(-0.5, 0.5);
  std::vector<double> xs, ls;
  for (int k = 4; k <= 12; ++k) {
    const double a = std::ldexp(1.0, -k), b = std::ldexp(1.0, -k - 1);
    double q = 0.0;
    for (double y : ys) q = std::max(q, std::abs(flow.induce(obs, {a, y}) - flow.induce(obs, {b, y})));
    if (q > 0.0) {
      xs.push_back(std::log(a));
      ls.push_back(std::log(q));
    }
  }
  HolderEstimate h;
  h.bound = flow.local_flow().holder_bound(obs.beta);
  if (xs.size() >= 2) {
    const auto f = linear_fit(xs, ls);
    h.exponent = f.slope;
    h.r2 = f.r2;
  } else {
    h.exponent = std::numeric_limits<double>::infinity();
    h.r2 = 1.0;
  }
  return h;
}

}  // namespace lorvar::suspension

#endif  // LORVAR_SUSPENSION_HPP
