#ifndef LORVAR_EXPERIMENTS_HPP
#define LORVAR_EXPERIMENTS_HPP

// Continuity sweeps in eps, the log-Lipschitz modulus in the observable, the
// map-to-flow variance relation and the oracle comparisons behind them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lorvar/core/error.hpp"
#include "lorvar/core/io.hpp"
#include "lorvar/core/normality.hpp"
#include "lorvar/core/rng.hpp"
#include "lorvar/core/stats.hpp"
#include "lorvar/lorenzode.hpp"
#include "lorvar/onedmap.hpp"
#include "lorvar/skewmap.hpp"
#include "lorvar/suspension.hpp"

namespace lorvar::experiments {

using skewmap::OrbitEnsemble;
using skewmap::SkewProduct;
using suspension::FlowObservable;
using suspension::SuspensionFlow;

enum class Verdict { Pass, Inconclusive, Fail };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Inconclusive: return "inconclusive";
    case Verdict::Fail: return "fail";
  }
  return "fail";
}

inline int exit_code(Verdict v) {
  switch (v) {
    case Verdict::Pass: return 0;
    case Verdict::Inconclusive: return 2;
    case Verdict::Fail: return 1;
  }
  return 1;
}

inline Verdict worst(Verdict a, Verdict b) {
  if (a == Verdict::Fail || b == Verdict::Fail) return Verdict::Fail;
  if (a == Verdict::Inconclusive || b == Verdict::Inconclusive) return Verdict::Inconclusive;
  return Verdict::Pass;
}

/// |a - b| in units of the combined standard error: pass up to pass_z,
/// inconclusive up to fail_z, fail beyond.
struct Comparison {
  double a = 0.0;
  double se_a = 0.0;
  double b = 0.0;
  double se_b = 0.0;
  double z = 0.0;
  Verdict verdict = Verdict::Pass;

  io::JsonObject to_json() const {
    io::JsonObject o;
    o.add("a", a).add("se_a", se_a).add("b", b).add("se_b", se_b).add("z", z).add("verdict", to_string(verdict));
    return o;
  }
};

inline Comparison compare(double a, double se_a, double b, double se_b, double pass_z = 3.0, double fail_z = 5.0) {
  Comparison c{a, se_a, b, se_b, 0.0, Verdict::Pass};
  const double se = combined_stderr(se_a, se_b);
  const double d = std::abs(a - b);
  if (se > 0.0) {
    c.z = d / se;
  } else {
    c.z = d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  c.verdict = c.z <= pass_z ? Verdict::Pass : (c.z <= fail_z ? Verdict::Inconclusive : Verdict::Fail);
  return c;
}

// ---------------------------------------------------------------------------
// Model and budgets.

struct ModelParams {
  double gamma0 = 0.6;
  double rho = 0.4;
  double offset = 0.25;
  double tau2 = 1.0;
  std::optional<double> constant_roof;

  bool operator==(const ModelParams&) const = default;
};

/// Geometric tier at eps: T_eps with gamma0 + eps, the skew product, and the
/// roof with the Lorenz eigenvalues at rho = 28 + eps.
inline SuspensionFlow make_flow(const ModelParams& m, double eps) {
  return SuspensionFlow(SkewProduct(onedmap::MapFamily::geometric(eps, m.gamma0), m.rho, m.offset),
                        suspension::LinearizedLocalFlow::lorenz(eps), m.tau2, m.constant_roof);
}

struct Budget {
  std::size_t samples = 1000000;
  std::size_t burn_in = 1000;
  double block_time = 200.0;  // flow Monte-Carlo block length
  std::size_t blocks = 10000;
  std::size_t map_block = 1000;  // map Monte-Carlo block length
  std::size_t map_reps = 1000;
  double ode_block_time = 20.0;
  std::size_t ode_blocks = 2000;
  double ode_tol = 1e-9;

  bool operator==(const Budget&) const = default;
};

// ---------------------------------------------------------------------------
// Map-level observables by name.

/// Induced observables of the flow observables x, z, cos_z, or the section
/// observables cos2pix = cos(2 pi x), mixed = cos(2 pi x) + y / 2 and
/// coboundary = v - v o F.
inline skewmap::Observable map_observable_by_name(const std::string& name, const SuspensionFlow& flow) {
  if (name == "x" || name == "z" || name == "cos_z") return flow.induced(suspension::observable_by_name(name));
  if (name == "cos2pix") return [](double x, double) { return std::cos(2.0 * std::numbers::pi * x); };
  if (name == "mixed") return [](double x, double y) { return std::cos(2.0 * std::numbers::pi * x) + 0.5 * y; };
  if (name == "coboundary") {
    const SkewProduct F = flow.map();
    return [F](double x, double y) {
      auto v = [](double a, double b) { return a * a + std::sin(3.0 * b) + (a > 0.0 ? 0.3 : 0.0); };
      const skewmap::Point q = F({x, y});
      return v(x, y) - v(q.x, q.y);
    };
  }
  throw DomainError("unknown map observable '" + name + "' (expected x, z, cos_z, cos2pix, mixed or coboundary)");
}

// ---------------------------------------------------------------------------
// Green-Kubo against the independent Monte-Carlo oracle on the map.

struct OracleCheck {
  std::string observable;
  VarianceEstimate green_kubo;
  VarianceEstimate monte_carlo;
  NormalityDiagnostic normality;
  Comparison agreement;
  std::optional<Comparison> expected;  // against a known value, when given
  Verdict verdict = Verdict::Pass;

  io::JsonObject to_json() const {
    io::JsonObject o;
    o.add("observable", observable)
        .add("sigma2_gk", green_kubo.value)
        .add("stderr_gk", green_kubo.stderr_)
        .add("n_trunc", static_cast<std::uint64_t>(green_kubo.n_trunc))
        .add("tail_unbounded", green_kubo.tail_unbounded)
        .add("sigma2_mc", monte_carlo.value)
        .add("stderr_mc", monte_carlo.stderr_)
        .add("z", agreement.z)
        .add("normality_max_deviation", normality.max_pp_deviation)
        .add("normality_degenerate", normality.degenerate);
    if (expected) o.add("expected", expected->b).add("z_expected", expected->z);
    o.add("seed", green_kubo.seed).add("verdict", to_string(verdict));
    return o;
  }
};

inline OracleCheck map_variance_check(const SkewProduct& F, const skewmap::Observable& psi, const std::string& name,
                                      const Budget& b, std::uint64_t seed,
                                      std::optional<double> expected = std::nullopt) {
  OracleCheck out;
  out.observable = name;
  out.green_kubo = skewmap::green_kubo_map(psi, skewmap::sample_srb(F, b.samples, b.burn_in, seed));
  const auto mc = skewmap::clt_oracle_map(F, psi, b.map_block, b.map_reps, seed, b.burn_in);
  out.monte_carlo = mc.estimate;
  out.normality = mc.normality;
  out.agreement = compare(out.green_kubo.value, out.green_kubo.stderr_, out.monte_carlo.value, out.monte_carlo.stderr_);
  out.verdict = out.agreement.verdict;
  if (expected) {
    out.expected = compare(out.green_kubo.value, out.green_kubo.stderr_, *expected, 0.0);
    out.verdict = worst(out.verdict, out.expected->verdict);
  }
  if (out.green_kubo.tail_unbounded) out.verdict = worst(out.verdict, Verdict::Inconclusive);
  return out;
}

/// Block-sum normality.  Requires at least 10^3 blocks.
inline NormalityDiagnostic clt_diagnostic(std::span<const double> block_sums, double threshold = 0.05) {
  if (block_sums.size() < 1000) throw DomainError("clt_diagnostic: need at least 1000 block sums");
  return clt_normality(block_sums, threshold);
}

// ---------------------------------------------------------------------------
// Flow relation.

struct RelationResult {
  std::string observable;
  suspension::FlowVarianceResult map_side;
  suspension::FlowCltResult flow_side;
  Comparison agreement;
  bool constant_roof = false;
  /// Constant roof only: sigma^2_flow equals sigma^2_map / c to rounding.
  bool ratio_exact = false;
  double block_time = 0.0;
  std::size_t blocks = 0;
  Verdict verdict = Verdict::Pass;

  io::JsonObject to_json() const {
    io::JsonObject o;
    o.add("observable", observable)
        .add("eps", map_side.eps)
        .add("sigma2_flow_map", map_side.flow.value)
        .add("stderr_map", map_side.flow.stderr_)
        .add("sigma2_map", map_side.map.value)
        .add("mean_roof", map_side.mean_roof)
        .add("sigma2_flow_mc", flow_side.estimate.value)
        .add("stderr_mc", flow_side.estimate.stderr_)
        .add("block_time", block_time)
        .add("blocks", static_cast<std::uint64_t>(blocks))
        .add("z", agreement.z)
        .add("constant_roof", constant_roof)
        .add("ratio_exact", ratio_exact)
        .add("normality_max_deviation", flow_side.normality.max_pp_deviation)
        .add("seed", map_side.seed)
        .add("verdict", to_string(verdict));
    return o;
  }
};

/// Flow Monte-Carlo against sigma^2_F(Psi) / mean roof: pass within 3
/// combined se, inconclusive to 5, fail beyond.
inline RelationResult relation_check(const SuspensionFlow& flow, const FlowObservable& obs, const Budget& b,
                                     std::uint64_t seed) {
  RelationResult r;
  r.observable = obs.name;
  r.block_time = b.block_time;
  r.blocks = b.blocks;
  r.constant_roof = flow.constant_roof();
  const auto e = skewmap::sample_srb(flow.map(), b.samples, b.burn_in, seed);
  r.map_side = suspension::flow_variance(flow, obs, e);
  r.flow_side = suspension::flow_clt_oracle(flow, obs, b.block_time, b.blocks, seed, b.burn_in);
  r.agreement = compare(r.map_side.flow.value, r.map_side.flow.stderr_, r.flow_side.estimate.value,
                        r.flow_side.estimate.stderr_);
  r.verdict = r.agreement.verdict;
  if (r.constant_roof) {
    const double c = *flow.roof().constant;
    r.ratio_exact = std::abs(r.map_side.flow.value - r.map_side.map.value / c) <=
                    1e-14 * std::max(std::abs(r.map_side.map.value), 1e-300);
    if (!r.ratio_exact) r.verdict = Verdict::Fail;
  }
  if (r.map_side.roof_unstable || r.map_side.map.tail_unbounded) r.verdict = worst(r.verdict, Verdict::Inconclusive);
  return r;
}

// ---------------------------------------------------------------------------
// Truncation.

struct TruncationCheck {
  suspension::TruncationCurve curve;
  Verdict verdict = Verdict::Pass;
};

/// Exponential decay certificate: slope <= max_slope and R^2 >= min_r2.
inline TruncationCheck truncation_check(const SuspensionFlow& flow, const FlowObservable& obs, const OrbitEnsemble& e,
                                        const std::vector<double>& levels = {3, 4, 5, 6, 7, 8, 9, 10},
                                        double max_slope = -0.1, double min_r2 = 0.9) {
  TruncationCheck t;
  t.curve = suspension::truncation_curve(flow, obs, e, levels);
  const bool ok = t.curve.fit.points >= 2 && t.curve.fit.slope <= max_slope && t.curve.fit.r2 >= min_r2;
  t.verdict = ok ? Verdict::Pass : Verdict::Fail;
  return t;
}

// ---------------------------------------------------------------------------
// ODE tier.

struct OdeCheck {
  double eps = 0.0;
  std::size_t crossings = 0;
  double eigenvalue_error = 0.0;  // max deviation from the closed form
  double max_section_error = 0.0;
  lorenzode::EmpiricalQuotient quotient;
  LinearFit regression;
  double slope_ratio = 0.0;  // slope * lambda1
  bool eigen_ok = false;
  bool section_ok = false;
  bool branches_ok = false;
  bool slope_ok = false;
  Verdict verdict = Verdict::Pass;

  io::JsonObject to_json() const {
    io::JsonObject o;
    o.add("eps", eps)
        .add("crossings", static_cast<std::uint64_t>(crossings))
        .add("eigenvalue_error", eigenvalue_error)
        .add("max_section_error", max_section_error)
        .add("violation_fraction", quotient.violation_fraction)
        .add("image_right_of_zero", quotient.image_right_of_zero)
        .add("image_left_of_zero", quotient.image_left_of_zero)
        .add("regression_slope", regression.slope)
        .add("regression_r2", regression.r2)
        .add("slope_ratio", slope_ratio)
        .add("verdict", to_string(verdict));
    return o;
  }
};

/// Eigenvalues against (-11 +- sqrt(1201 + 40 eps)) / 2 and -8/3 to 1e-9,
/// crossings within 1e-10 of the section, two increasing quotient branches
/// with T(0+) < 0 < T(0-), and the return-time slope within 10% of 1/lambda1.
inline OdeCheck ode_check(const std::vector<lorenzode::SectionCrossing>& c, const lorenzode::OdeParams& p,
                          std::size_t bins = 512, std::size_t min_crossings = 100000) {
  OdeCheck out;
  out.eps = p.eps;
  out.crossings = c.size();
  const auto ev = lorenzode::singularity_eigenvalues(p);
  const auto closed = suspension::LinearizedLocalFlow::lorenz(p.eps);
  out.eigenvalue_error = std::max({std::abs(ev.lambda1 - closed.lambda1), std::abs(ev.lambda2 - closed.lambda2),
                                   std::abs(ev.lambda3 - closed.lambda3)});
  out.eigen_ok = out.eigenvalue_error < 1e-9;
  for (const auto& k : c) out.max_section_error = std::max(out.max_section_error, std::abs(k.state[2] - p.z_section()));
  out.section_ok = out.max_section_error < 1e-10;
  out.verdict = (out.eigen_ok && out.section_ok) ? Verdict::Pass : Verdict::Fail;
  try {
    out.quotient = lorenzode::empirical_quotient(c, bins, min_crossings);
  } catch (const ProjectionQualityError&) {
    out.verdict = Verdict::Fail;
    return out;
  }
  out.branches_ok = out.quotient.two_branches() && out.quotient.image_right_of_zero < 0.0 &&
                    out.quotient.image_left_of_zero > 0.0;
  out.regression = lorenzode::return_time_regression(out.quotient, c);
  out.slope_ratio = out.regression.slope * ev.lambda1;
  out.slope_ok = std::abs(out.slope_ratio - 1.0) <= 0.1;
  if (!out.branches_ok || !out.slope_ok) out.verdict = Verdict::Fail;
  return out;
}

/// sigma^2 of psi along one Lorenz trajectory by batch means over n_blocks
/// consecutive windows of length L after a transient of 50.
inline VarianceEstimate ode_flow_variance(const lorenzode::OdeParams& p, const FlowObservable& obs, double L,
                                          std::size_t n_blocks, double tol, std::uint64_t seed) {
  if (!(L > 0.0) || n_blocks < 8) throw DomainError("ode_flow_variance: need L > 0 and >= 8 blocks");
  RandomStream rng(seed, 0);
  const lorenzode::State y0{rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(15.0, 35.0)};
  lorenzode::Dopri5 s(p, y0, 0.0, tol);
  constexpr double kTransient = 50.0;
  while (s.t() < kTransient) s.step(kTransient);
  // 3-point Gauss-Legendre on each dense step.
  const double r = std::sqrt(15.0) / 10.0;
  const std::array<double, 3> nodes{0.5 - r, 0.5, 0.5 + r};
  const std::array<double, 3> weights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  std::vector<double> integrals(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const double end = kTransient + L * static_cast<double>(b + 1);
    CompensatedSum acc;
    while (s.t() < end) {
      const auto d = s.step(end);
      double q = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        const auto y = d.at_theta(nodes[i]);
        q += weights[i] * obs.psi(y[0], y[1], y[2]);
      }
      acc.add(q * d.h);
    }
    integrals[b] = acc.value();
  }
  const double m = mean(integrals);
  std::vector<double> z(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) z[b] = (integrals[b] - m) / std::sqrt(L);
  const auto v = sample_variance(z);
  VarianceEstimate est;
  est.value = v.variance;
  est.stderr_ = v.stderr_;
  est.method = VarianceMethod::BatchMeans;
  est.seed = seed;
  return est;
}

// ---------------------------------------------------------------------------
// Continuity sweep.

enum class Tier { Geometric, Ode };

inline std::string to_string(Tier t) { return t == Tier::Geometric ? "geometric" : "ode"; }

inline Tier parse_tier(const std::string& s) {
  if (s == "geometric") return Tier::Geometric;
  if (s == "ode") return Tier::Ode;
  throw DomainError("unknown tier '" + s + "' (expected geometric or ode)");
}

struct SweepConfig {
  std::vector<double> eps_grid{0.04, 0.02, 0.01, 0.005, 0.0};
  std::vector<std::string> observables{"x"};
  std::uint64_t seed = 0;
  Budget budget;
  ModelParams model;
  bool mc_oracle = true;
  bool repeat_zero = true;

  bool operator==(const SweepConfig&) const = default;

  void validate() const {
    if (eps_grid.size() < 2) throw DomainError("sweep: eps_grid needs at least two values");
    for (std::size_t i = 1; i < eps_grid.size(); ++i) {
      if (!(eps_grid[i] < eps_grid[i - 1])) throw DomainError("sweep: eps_grid must be strictly descending");
    }
    if (eps_grid.back() != 0.0) throw DomainError("sweep: eps_grid must end at 0");
    if (observables.empty()) throw DomainError("sweep: no observables");
  }

  /// Cell k uses seed + k; the repeated eps = 0 cell uses seed + grid size.
  std::uint64_t cell_seed(std::size_t k) const noexcept { return seed + k; }
};

struct SweepCell {
  std::size_t index = 0;
  std::string observable;
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  bool repeat = false;
  VarianceEstimate estimate;
  double sigma2_map = std::numeric_limits<double>::quiet_NaN();
  double mean_roof = std::numeric_limits<double>::quiet_NaN();
  double induced_l1 = std::numeric_limits<double>::quiet_NaN();  // ∫|Psi_eps - Psi_0| dmu_{F_eps}
  std::optional<Comparison> oracle;
  double gap_to_zero = std::numeric_limits<double>::quiet_NaN();
  double gap_stderr = std::numeric_limits<double>::quiet_NaN();
  bool flagged = false;

  io::JsonObject to_json() const {
    io::JsonObject o;
    o.add("index", static_cast<std::uint64_t>(index))
        .add("observable", observable)
        .add("eps", eps)
        .add("seed", seed)
        .add("samples", static_cast<std::uint64_t>(samples))
        .add("repeat", repeat)
        .add("sigma2", estimate.value)
        .add("stderr", estimate.stderr_)
        .add("method", lorvar::to_string(estimate.method))
        .add("n_trunc", static_cast<std::uint64_t>(estimate.n_trunc))
        .add("sigma2_map", sigma2_map)
        .add("mean_roof", mean_roof)
        .add("induced_l1", induced_l1)
        .add("gap_to_zero", gap_to_zero)
        .add("gap_stderr", gap_stderr)
        .add("flagged", flagged);
    if (oracle) o.add("oracle", oracle->to_json());
    return o;
  }
};

struct ContinuityCheck {
  std::string observable;
  bool gaps_non_increasing = true;
  bool final_gap_within_noise = true;
  bool induced_l1_decreasing = true;
  bool oracle_coherent = true;
  std::optional<Comparison> seed_repeat;
  std::vector<std::string> notes;
  Verdict verdict = Verdict::Pass;
};

struct SweepResult {
  Tier tier = Tier::Geometric;
  SweepConfig config;
  std::vector<SweepCell> cells;
  std::vector<ContinuityCheck> checks;
  bool aborted = false;
  Verdict verdict = Verdict::Pass;

  /// eps,sigma2,stderr,method,gap_to_zero,observable; repeat cells excluded.
  io::Table summary() const {
    io::Table t({"eps", "sigma2", "stderr", "method", "gap_to_zero", "observable"});
    for (const auto& c : cells) {
      if (c.repeat) continue;
      t.add_row({c.eps, c.estimate.value, c.estimate.stderr_, lorvar::to_string(c.estimate.method), c.gap_to_zero,
                 c.observable});
    }
    return t;
  }

  std::string report() const {
    std::ostringstream os;
    os << "continuity sweep (" << to_string(tier) << " tier)\n";
    for (const auto& k : checks) {
      os << "observable " << k.observable << "\n";
      auto line = [&os](const char* name, bool ok) { os << "  " << name << ": " << (ok ? "pass" : "fail") << "\n"; };
      line("gaps non-increasing within 2 se", k.gaps_non_increasing);
      line("final gap within 3 se", k.final_gap_within_noise);
      if (tier == Tier::Geometric) line("induced L1 distance decreasing", k.induced_l1_decreasing);
      line("oracle coherence", k.oracle_coherent);
      if (k.seed_repeat) os << "  eps = 0 seed repeat: " << to_string(k.seed_repeat->verdict) << "\n";
      for (const auto& n : k.notes) os << "  note: " << n << "\n";
      os << "  verdict: " << to_string(k.verdict) << "\n";
    }
    if (aborted) os << "sweep aborted\n";
    os << "verdict: " << to_string(verdict) << "\n";
    return os.str();
  }

  /// cell_<index>.json per cell, summary.{csv,json}, report.txt and sweep.json.
  void write(const std::filesystem::path& dir, bool json_tables = false) const {
    for (const auto& c : cells) {
      io::write_atomic(dir / ("cell_" + std::to_string(c.index) + ".json"), c.to_json().str());
    }
    const auto t = summary();
    if (json_tables) {
      io::write_atomic(dir / "summary.json", t.to_json());
    } else {
      io::write_atomic(dir / "summary.csv", t.to_csv());
    }
    io::write_atomic(dir / "report.txt", report());
    io::JsonObject o;
    o.add("tier", to_string(tier)).add("cells", static_cast<std::uint64_t>(cells.size())).add("aborted", aborted);
    o.add("verdict", to_string(verdict));
    io::write_atomic(dir / "sweep.json", o.str());
  }
};

namespace detail {

inline SweepCell geometric_cell(const SweepConfig& cfg, const FlowObservable& obs, const SuspensionFlow& flow0,
                                double eps, std::uint64_t seed) {
  const auto flow = make_flow(cfg.model, eps);
  const auto& b = cfg.budget;
  const auto e = skewmap::sample_srb(flow.map(), b.samples, b.burn_in, seed);
  const auto s = suspension::induce_series(flow, obs, e);
  const auto r = suspension::flow_variance_from_series(s, eps, seed);
  SweepCell c;
  c.observable = obs.name;
  c.eps = eps;
  c.seed = seed;
  c.samples = b.samples;
  c.estimate = r.flow;
  c.sigma2_map = r.map.value;
  c.mean_roof = r.mean_roof;
  c.flagged = r.flow.tail_unbounded || r.roof_unstable;
  CompensatedSum d;
  for (std::size_t i = 0; i < e.size(); ++i) d.add(std::abs(s.psi[i] - flow0.induce(obs, e.at(i))));
  c.induced_l1 = d.value() / static_cast<double>(e.size());
  if (cfg.mc_oracle) {
    const auto mc = suspension::flow_clt_oracle(flow, obs, b.block_time, b.blocks, seed, b.burn_in);
    c.oracle = compare(c.estimate.value, c.estimate.stderr_, mc.estimate.value, mc.estimate.stderr_);
  }
  return c;
}

inline SweepCell ode_cell(const SweepConfig& cfg, const FlowObservable& obs, double eps, std::uint64_t seed) {
  const auto& b = cfg.budget;
  SweepCell c;
  c.observable = obs.name;
  c.eps = eps;
  c.seed = seed;
  c.samples = b.ode_blocks;
  c.estimate = ode_flow_variance(lorenzode::OdeParams::from_eps(eps), obs, b.ode_block_time, b.ode_blocks, b.ode_tol,
                                 seed);
  return c;
}

/// Gap statistics and verdict for the cells of one observable, in grid order
/// with the repeat (if any) last.
inline ContinuityCheck evaluate_continuity(std::vector<SweepCell*> cells, Tier tier) {
  ContinuityCheck k;
  k.observable = cells.front()->observable;
  for (const auto* c : cells) {
    if (c->samples != cells.front()->samples) throw Error("sweep: cells consumed different budgets");
  }
  std::vector<SweepCell*> grid;
  SweepCell* repeat = nullptr;
  for (auto* c : cells) {
    if (c->repeat) {
      repeat = c;
    } else {
      grid.push_back(c);
    }
  }
  SweepCell* zero = grid.back();

  bool flagged = false;
  for (auto* c : cells) {
    if (c->flagged) {
      flagged = true;
      k.notes.push_back("eps = " + io::format_double(c->eps) + " flagged tail-unbounded");
    }
    if (c->oracle && c->oracle->verdict != Verdict::Pass) {
      k.oracle_coherent = false;
      k.notes.push_back("eps = " + io::format_double(c->eps) + " oracle disagreement z = " +
                        io::format_double(c->oracle->z));
    }
  }

  std::vector<SweepCell*> usable;
  for (auto* c : grid) {
    if (!c->flagged) usable.push_back(c);
  }
  if (!zero->flagged) {
    for (auto* c : grid) {
      c->gap_to_zero = std::abs(c->estimate.value - zero->estimate.value);
      c->gap_stderr = c == zero ? 0.0 : combined_stderr(c->estimate.stderr_, zero->estimate.stderr_);
    }
    std::vector<SweepCell*> nonzero;
    for (auto* c : usable) {
      if (c != zero) nonzero.push_back(c);
    }
    for (std::size_t i = 1; i < nonzero.size(); ++i) {
      const double slack = 2.0 * combined_stderr(nonzero[i - 1]->estimate.stderr_, nonzero[i]->estimate.stderr_);
      if (nonzero[i]->gap_to_zero > nonzero[i - 1]->gap_to_zero + slack) k.gaps_non_increasing = false;
    }
    if (!nonzero.empty()) k.final_gap_within_noise = nonzero.back()->gap_to_zero <= 3.0 * nonzero.back()->gap_stderr;
  }
  if (tier == Tier::Geometric) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (!(grid[i]->induced_l1 < grid[i - 1]->induced_l1)) k.induced_l1_decreasing = false;
    }
  }
  if (repeat) {
    k.seed_repeat = compare(zero->estimate.value, zero->estimate.stderr_, repeat->estimate.value,
                            repeat->estimate.stderr_);
  }

  k.verdict = (k.gaps_non_increasing && k.final_gap_within_noise && k.induced_l1_decreasing && k.oracle_coherent)
                  ? Verdict::Pass
                  : Verdict::Fail;
  if (k.seed_repeat) k.verdict = worst(k.verdict, k.seed_repeat->verdict);
  if (flagged && k.oracle_coherent) k.verdict = Verdict::Inconclusive;
  return k;
}

}  // namespace detail

/// sigma^2(eps) per cell for every observable.  Cells are computed in grid
/// order and written by index.  An oracle disagreement beyond 3 se aborts the
/// sweep; a flagged cell makes the observable inconclusive instead of failed.
inline SweepResult continuity_sweep(const SweepConfig& cfg, Tier tier = Tier::Geometric) {
  cfg.validate();
  if (tier == Tier::Ode && cfg.eps_grid.front() > 1.0) throw ModelViolation("sweep: ODE tier needs eps in [0, 1]");
  SweepResult out;
  out.tier = tier;
  out.config = cfg;
  const auto flow0 = make_flow(cfg.model, 0.0);
  std::size_t index = 0;
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& name : cfg.observables) {
    const auto obs = suspension::observable_by_name(name);
    auto& g = groups.emplace_back();
    auto run = [&](double eps, std::uint64_t seed) {
      auto c = tier == Tier::Geometric ? detail::geometric_cell(cfg, obs, flow0, eps, seed)
                                       : detail::ode_cell(cfg, obs, eps, seed);
      c.index = index++;
      g.push_back(out.cells.size());
      out.cells.push_back(std::move(c));
      return out.cells.back().oracle && out.cells.back().oracle->verdict != Verdict::Pass;
    };
    for (std::size_t k = 0; k < cfg.eps_grid.size() && !out.aborted; ++k) {
      out.aborted = run(cfg.eps_grid[k], cfg.cell_seed(k));
    }
    if (!out.aborted && cfg.repeat_zero) {
      out.aborted = run(0.0, cfg.cell_seed(cfg.eps_grid.size()));
      out.cells.back().repeat = true;
    }
    if (out.aborted) break;
  }
  if (out.aborted) {
    out.verdict = Verdict::Fail;
    ContinuityCheck k;
    k.observable = out.cells.back().observable;
    k.oracle_coherent = false;
    k.notes.push_back("oracle disagreement at eps = " + io::format_double(out.cells.back().eps) + ", z = " +
                      io::format_double(out.cells.back().oracle->z));
    k.verdict = Verdict::Fail;
    out.checks.push_back(std::move(k));
    return out;
  }
  for (const auto& g : groups) {
    std::vector<SweepCell*> cells;
    for (std::size_t i : g) cells.push_back(&out.cells[i]);
    out.checks.push_back(detail::evaluate_continuity(cells, tier));
    out.verdict = worst(out.verdict, out.checks.back().verdict);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Modulus in the observable.

struct ModulusScale {
  double scale = 0.0;  // the family parameter, e.g. delta0
  double delta = 0.0;  // ∫|psi - psi'| dmu + |psi - psi'|(0)
  double sigma2 = 0.0;
  double sigma2_stderr = 0.0;
  double diff = 0.0;  // |sigma^2(psi) - sigma^2(psi')|
  double diff_stderr = 0.0;
  double ratio = 0.0;  // diff / (delta (1 + |log delta|))
  bool above_noise = false;
};

struct ModulusResult {
  std::string base;
  double eps = 0.0;
  std::uint64_t seed = 0;
  double base_sigma2 = 0.0;
  double base_stderr = 0.0;
  std::optional<Comparison> crosscheck;  // base sigma^2 against the flow Monte-Carlo
  std::vector<ModulusScale> scales;
  bool widened = false;
  double C = 0.0;  // max ratio
  bool growth_trend = false;
  Verdict verdict = Verdict::Pass;

  io::Table table() const {
    io::Table t({"scale", "delta", "sigma2", "diff", "diff_stderr", "ratio"});
    for (const auto& s : scales) t.add_row({s.scale, s.delta, s.sigma2, s.diff, s.diff_stderr, s.ratio});
    return t;
  }

  io::JsonObject to_json() const {
    io::JsonObject o;
    std::vector<double> sc, dl, rt;
    for (const auto& s : scales) {
      sc.push_back(s.scale);
      dl.push_back(s.delta);
      rt.push_back(s.ratio);
    }
    o.add("base", base)
        .add("eps", eps)
        .add("seed", seed)
        .add("base_sigma2", base_sigma2)
        .add("base_stderr", base_stderr)
        .add("scales", sc)
        .add("delta", dl)
        .add("ratio", rt)
        .add("C", C)
        .add("widened", widened)
        .add("growth_trend", growth_trend);
    if (crosscheck) o.add("crosscheck", crosscheck->to_json());
    o.add("verdict", to_string(verdict));
    return o;
  }
};

/// delta = ∫|psi - psi'| dmu_flow + |psi - psi'|(0), with the flow integral
/// taken from the induced series of |psi - psi'| on the ensemble.
inline double observable_distance(const SuspensionFlow& flow, const FlowObservable& a, const FlowObservable& b,
                                  const OrbitEnsemble& e, double mean_roof) {
  const FlowObservable d{"|d|", [&a, &b](double x, double y, double z) { return std::abs(a.psi(x, y, z) - b.psi(x, y, z)); },
                         1.0, 1.0};
  const double at_zero = d.psi(0.0, 0.0, 0.0);
  const auto s = suspension::induce_series(flow, d, e);
  // Induced values integrate |d| - |d|(0).
  const double flow_integral = at_zero + mean(s.psi) / mean_roof;
  return flow_integral + at_zero;
}

/// Ratios diff / (delta (1 + |log delta|)) over the perturbation scales, all
/// on one ensemble so differences are paired.  When no scale lifts diff
/// above twice its paired standard error the scales are multiplied by 8 once;
/// if still below noise the result is inconclusive.  A blow-up trend is a
/// ratio sequence strictly increasing toward small delta that ends above
/// twice its first value.
inline ModulusResult modulus_experiment(const SuspensionFlow& flow, const FlowObservable& base,
                                        const std::function<FlowObservable(double)>& family,
                                        const std::vector<double>& scales, const Budget& b, std::uint64_t seed,
                                        bool crosscheck = true) {
  if (scales.size() < 4) throw DomainError("modulus_experiment: need at least 4 scales");
  ModulusResult r;
  r.base = base.name;
  r.eps = flow.map().base().eps();
  r.seed = seed;
  const auto e = skewmap::sample_srb(flow.map(), b.samples, b.burn_in, seed);
  const auto base_series = suspension::induce_series(flow, base, e);
  const auto base_var = suspension::flow_variance_from_series(base_series, r.eps, seed);
  r.base_sigma2 = base_var.flow.value;
  r.base_stderr = base_var.flow.stderr_;
  if (crosscheck) {
    const auto mc = suspension::flow_clt_oracle(flow, base, b.block_time, b.blocks, seed, b.burn_in);
    r.crosscheck = compare(r.base_sigma2, r.base_stderr, mc.estimate.value, mc.estimate.stderr_);
  }

  auto measure = [&](const std::vector<double>& sc) {
    std::vector<ModulusScale> out;
    for (double s : sc) {
      const auto pert = family(s);
      ModulusScale m;
      m.scale = s;
      m.delta = observable_distance(flow, base, pert, e, base_var.mean_roof);
      const auto v = suspension::flow_variance_from_series(suspension::induce_series(flow, pert, e), r.eps, seed);
      m.sigma2 = v.flow.value;
      m.sigma2_stderr = v.flow.stderr_;
      m.diff = std::abs(m.sigma2 - r.base_sigma2);
      m.diff_stderr = paired_jackknife_stderr(v.flow, base_var.flow);
      m.above_noise = m.diff > 2.0 * m.diff_stderr;
      m.ratio = m.delta > 0.0 ? m.diff / (m.delta * (1.0 + std::abs(std::log(m.delta)))) : 0.0;
      out.push_back(m);
    }
    return out;
  };
  auto any_signal = [](const std::vector<ModulusScale>& v) {
    return std::any_of(v.begin(), v.end(), [](const ModulusScale& m) { return m.above_noise; });
  };

  r.scales = measure(scales);
  if (!any_signal(r.scales)) {
    std::vector<double> wide;
    for (double s : scales) wide.push_back(8.0 * s);
    r.scales = measure(wide);
    r.widened = true;
  }
  for (const auto& m : r.scales) r.C = std::max(r.C, m.ratio);

  // Scales sorted by decreasing delta for the trend.
  auto ordered = r.scales;
  std::sort(ordered.begin(), ordered.end(), [](const ModulusScale& a, const ModulusScale& c) { return a.delta > c.delta; });
  bool increasing = true;
  for (std::size_t i = 1; i < ordered.size(); ++i) increasing = increasing && ordered[i].ratio > ordered[i - 1].ratio;
  r.growth_trend = increasing && ordered.back().ratio > 2.0 * ordered.front().ratio;

  const bool finite = std::all_of(r.scales.begin(), r.scales.end(), [](const ModulusScale& m) { return std::isfinite(m.ratio); });
  r.verdict = (finite && !r.growth_trend) ? Verdict::Pass : Verdict::Fail;
  if (!any_signal(r.scales)) r.verdict = worst(r.verdict, Verdict::Inconclusive);
  if (r.crosscheck) r.verdict = worst(r.verdict, r.crosscheck->verdict);
  return r;
}

/// The default pair family: psi = x, psi' = x + delta0 cos z.
inline ModulusResult modulus_experiment(const SuspensionFlow& flow, const std::vector<double>& delta0, const Budget& b,
                                        std::uint64_t seed, bool crosscheck = true) {
  return modulus_experiment(flow, suspension::observable_x(), suspension::observable_x_plus_cos_z, delta0, b, seed,
                            crosscheck);
}

}  // namespace lorvar::experiments

#endif  // LORVAR_EXPERIMENTS_HPP
