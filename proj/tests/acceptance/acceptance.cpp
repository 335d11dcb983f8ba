// Acceptance run: one PASS/FAIL line per criterion at full budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lorvar/cli.hpp"
#include "lorvar/core/quadrature.hpp"
#include "lorvar/core/rng.hpp"
#include "lorvar/experiments.hpp"
#include "lorvar/lorenzode.hpp"
#include "lorvar/onedmap.hpp"
#include "lorvar/skewmap.hpp"
#include "lorvar/suspension.hpp"

using namespace lorvar;
namespace ex = lorvar::experiments;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs <= limit_seconds;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s %-22s %7.1fs/%.0fs  %s%s\n", pass ? "PASS" : "FAIL", name.c_str(), secs, limit_seconds,
              o.detail.c_str(), in_time ? "" : " [over time limit]");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double brute_force_vp(const std::vector<double>& v, double p) {
  const std::size_t m = v.size();
  double best = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    double s = 0.0;
    int prev = -1;
    for (std::size_t i = 0; i < m; ++i) {
      if (!(mask & (1u << i))) continue;
      if (prev >= 0) s += std::pow(std::abs(v[i] - v[static_cast<std::size_t>(prev)]), p);
      prev = static_cast<int>(i);
    }
    best = std::max(best, s);
  }
  return std::pow(best, 1.0 / p);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    m[e.path().filename().string()] = ss.str();
  }
  return m;
}

Outcome transfer_operator() {
  using namespace onedmap;
  double row_err = 0.0, mass_err = 0.0, min_w = 1.0;
  for (std::size_t n : {256, 1024, 4096}) {
    for (const auto& T : {MapFamily::geometric(0.0), MapFamily::geometric(0.04), MapFamily::doubling()}) {
      const auto op = build_ulam(T, Partition(MapFamily::kDomain, n));
      for (std::size_t i = 0; i < n; ++i) row_err = std::max(row_err, std::abs(op.row_sum(i) - 1.0));
      const auto h = invariant_density(op);
      mass_err = std::max(mass_err, std::abs(h.integral() - 1.0));
      for (double w : h.weights) min_w = std::min(min_w, w);
    }
  }
  const auto hd = invariant_density(build_ulam(MapFamily::doubling(), Partition(MapFamily::kDomain, 1024)));
  double uniform_err = 0.0;
  for (double w : hd.weights) uniform_err = std::max(uniform_err, std::abs(w - 1.0));

  const auto T = MapFamily::geometric();
  auto f = [](double x) { return 1.0 + 0.5 * std::sin(3.0 * x) + x * x; };
  auto g = [](double x) { return std::cos(2.0 * x) + x; };
  const auto fgT = [&](double x) { return f(x) * g(T(x)); };
  const double exact = integrate_adaptive(fgT, -0.5, 0.0, 1e-14, 5000).value +
                       integrate_adaptive(fgT, 0.0, 0.5, 1e-14, 5000).value;
  std::vector<double> dual;
  for (std::size_t n : {256, 1024, 4096}) {
    const Partition p(MapFamily::kDomain, n);
    const auto pf = build_ulam(T, p).push_forward(cell_averages(p, f));
    const auto gc = cell_averages(p, g);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += pf[j] * gc[j];
    dual.push_back(std::abs(s * p.width() - exact));
  }
  const bool ok = row_err <= 1e-12 && mass_err <= 1e-10 && min_w >= 0.0 && uniform_err < 1e-6 && dual[1] < dual[0] &&
                  dual[2] < dual[1];
  return {ok, fmt("row %.1e", row_err) + fmt(" mass %.1e", mass_err) + fmt(" min_h %.3g", min_w) +
                  fmt(" doubling %.1e", uniform_err) + fmt(" duality %.2e", dual[0]) + fmt(" > %.2e", dual[1]) +
                  fmt(" > %.2e", dual[2])};
}

Outcome norms() {
  using namespace onedmap;
  RandomStream r(21, 0);
  double worst_vv = -1e300;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 16 + static_cast<std::size_t>(r.uniform() * 240.0);
    const double p = 1.0 + 3.0 * r.uniform();
    std::vector<double> v(m);
    double level = 0.0;
    for (double& x : v) {
      if (r.uniform() < 0.2) level = r.uniform(-2.0, 2.0);
      x = level;
    }
    worst_vv = std::max(worst_vv, bv_seminorm(v, MapFamily::kDomain, p) - std::pow(2.0, 1.0 / p) * vp_norm(v, p));
  }
  RandomStream q(5, 0);
  double vp_err = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> v(12);
    for (double& x : v) x = q.uniform(-1.0, 1.0);
    for (double p : {1.0, 1.3, 2.0, 3.0}) vp_err = std::max(vp_err, std::abs(vp_norm(v, p) - brute_force_vp(v, p)));
  }
  const skewmap::SkewProduct F(MapFamily::geometric());
  const std::vector<skewmap::Observable> observables{
      [](double x, double y) { return std::cos(2.0 * kPi * x) * y; },
      [](double x, double) { return x > 0.0 ? 1.0 : -1.0; },
      [](double x, double y) { return std::cos(2.0 * kPi * x) + 0.5 * y; },
  };
  int ineq_checks = 0, ineq_held = 0;
  for (const auto& psi : observables) {
    const auto rec = skewmap::measure_seminorms(F, psi, skewmap::SeminormGrid{1024, 32, 1.0, 2.0, 0.1}, 3);
    ++ineq_checks;
    ineq_held += rec.projection_bound.holds;
    for (const auto& c : rec.iterate_bounds) {
      ++ineq_checks;
      ineq_held += c.holds;
    }
  }
  const bool ok = worst_vv <= 1e-9 && vp_err <= 1e-12 && ineq_checks == 12 && ineq_held == ineq_checks;
  return {ok, fmt("variation bound max(lhs-rhs) %.2e", worst_vv) + fmt(" Vp brute-force err %.1e", vp_err) + " inequalities " +
                  std::to_string(ineq_held) + "/" + std::to_string(ineq_checks)};
}

Outcome variance_oracle() {
  const ex::Budget b;
  const auto flow = ex::make_flow(ex::ModelParams{}, 0.0);
  bool ok = true;
  std::string d;
  for (const char* name : {"x", "z", "cos_z"}) {
    const auto r = ex::map_variance_check(flow.map(), ex::map_observable_by_name(name, flow), name, b, 0);
    ok = ok && r.agreement.verdict == ex::Verdict::Pass;
    d += std::string(name) + fmt(" z=%.2f ", r.agreement.z);
  }
  const skewmap::SkewProduct D(onedmap::MapFamily::doubling());
  const auto dbl = skewmap::green_kubo_map(ex::map_observable_by_name("cos2pix", flow),
                                           skewmap::sample_srb(D, b.samples, b.burn_in, 0));
  const auto dz = ex::compare(dbl.value, dbl.stderr_, 0.5, 0.0);
  const auto cob = skewmap::green_kubo_map(ex::map_observable_by_name("coboundary", flow),
                                           skewmap::sample_srb(flow.map(), b.samples, b.burn_in, 0));
  const auto cz = ex::compare(cob.value, cob.stderr_, 0.0, 0.0);
  ok = ok && dz.verdict == ex::Verdict::Pass && cz.verdict == ex::Verdict::Pass;
  d += fmt("doubling %.4f", dbl.value) + fmt(" (z=%.2f)", dz.z) + fmt(" coboundary %.2e", cob.value) +
       fmt(" (z=%.2f)", cz.z);
  return {ok, d};
}

Outcome flow_relation() {
  const ex::Budget b;
  ex::ModelParams m;
  const auto flow = ex::make_flow(m, 0.0);
  bool ok = true;
  std::string d;
  for (const char* name : {"x", "z", "cos_z"}) {
    const auto r = ex::relation_check(flow, suspension::observable_by_name(name), b, 0);
    ok = ok && r.verdict == ex::Verdict::Pass;
    d += std::string(name) + fmt(" z=%.2f ", r.agreement.z);
  }
  m.constant_roof = 1.0;
  const auto r = ex::relation_check(ex::make_flow(m, 0.0), suspension::observable_x(), b, 0);
  ok = ok && r.ratio_exact && r.verdict == ex::Verdict::Pass;
  d += std::string("constant-roof exact=") + (r.ratio_exact ? "yes" : "no") + fmt(" z=%.2f", r.agreement.z);
  return {ok, d};
}

Outcome continuity() {
  const auto r = ex::continuity_sweep(ex::SweepConfig{});
  std::string d = "gaps/se:";
  for (const auto& c : r.cells) {
    if (!c.repeat && c.eps > 0.0) d += fmt(" %.2f", c.gap_to_zero / c.gap_stderr);
  }
  for (const auto& k : r.checks) {
    d += std::string(" non-incr=") + (k.gaps_non_increasing ? "y" : "n") +
         " final<=3se=" + (k.final_gap_within_noise ? "y" : "n") + " l1-decr=" + (k.induced_l1_decreasing ? "y" : "n") +
         " oracle=" + (k.oracle_coherent ? "y" : "n");
  }
  d += " verdict " + ex::to_string(r.verdict);
  return {r.verdict == ex::Verdict::Pass, d};
}

Outcome modulus() {
  const auto flow = ex::make_flow(ex::ModelParams{}, 0.0);
  const auto r = ex::modulus_experiment(flow, {0.1, 0.05, 0.025, 0.0125}, ex::Budget{}, 0);
  std::string d = "ratios";
  for (const auto& s : r.scales) d += fmt(" %.2e", s.ratio) + (s.above_noise ? "" : "*");
  d += std::string(" widened=") + (r.widened ? "yes" : "no") + " growth=" + (r.growth_trend ? "yes" : "no") +
       " verdict " + ex::to_string(r.verdict);
  return {r.verdict == ex::Verdict::Pass, d};
}

Outcome truncation() {
  const ex::Budget b;
  const auto flow = ex::make_flow(ex::ModelParams{}, 0.0);
  const auto e = skewmap::sample_srb(flow.map(), b.samples, b.burn_in, 0);
  bool ok = true;
  std::string d;
  for (const char* name : {"x", "z", "cos_z"}) {
    const auto t = ex::truncation_check(flow, suspension::observable_by_name(name), e);
    ok = ok && t.verdict == ex::Verdict::Pass;
    d += std::string(name) + fmt(" slope %.2f", t.curve.fit.slope) + fmt(" R2 %.4f ", t.curve.fit.r2);
  }
  return {ok, d};
}

Outcome ode() {
  const auto p = lorenzode::OdeParams::from_eps(0.0);
  const auto c = lorenzode::section_returns(p, 1000000, 0);
  const auto r = ex::ode_check(c, p);
  return {r.verdict == ex::Verdict::Pass,
          fmt("eig err %.1e", r.eigenvalue_error) + fmt(" section err %.1e", r.max_section_error) +
              fmt(" T(0+) %.3f", r.quotient.image_right_of_zero) + fmt(" T(0-) %.3f", r.quotient.image_left_of_zero) +
              " branches=" + (r.branches_ok ? "y" : "n") + fmt(" slope*lambda1 %.4f", r.slope_ratio)};
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "lorvar_acceptance_determinism";
  fs::remove_all(root);
  auto base = cli::parse_config(R"(
budget.samples = 20000
budget.burn_in = 200
budget.block_time = 40
budget.blocks = 200
budget.map_block = 100
budget.map_reps = 100
budget.ode_block_time = 5
budget.ode_blocks = 20
ode.n_returns = 2000
ode.bins = 32
ulam.cells = 512
)");
  std::size_t compared = 0;
  std::string diff;
  for (const auto& cmd : cli::commands()) {
    auto c = base;
    c.command = cmd;
    c.out = (root / cmd).string();
    if (cmd == "report") c.out = (root / "map-variance").string();
    std::ostringstream err;
    const int first = cli::run(c, err);
    const auto a = snapshot(c.out);
    const int second = cli::run(c, err);
    const auto b = snapshot(c.out);
    compared += a.size();
    if (first != second || a != b) diff += " " + cmd;
  }
  fs::remove_all(root);
  return {diff.empty(), std::to_string(cli::commands().size()) + " commands, " + std::to_string(compared) +
                            " files compared" + (diff.empty() ? "" : "; differing:" + diff)};
}

}  // namespace

int main() {
  criterion("transfer-operator", 30, transfer_operator);
  criterion("norms", 60, norms);
  criterion("variance-oracle", 300, variance_oracle);
  criterion("flow-relation", 600, flow_relation);
  criterion("truncation", 300, truncation);
  criterion("ode", 900, ode);
  criterion("continuity", 1200, continuity);
  criterion("modulus", 1200, modulus);
  criterion("determinism", 600, determinism);
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
