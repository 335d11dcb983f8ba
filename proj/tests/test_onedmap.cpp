#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "lorvar/core/quadrature.hpp"
#include "lorvar/core/rng.hpp"
#include "lorvar/onedmap.hpp"

using namespace lorvar;
using namespace lorvar::onedmap;

namespace {

std::vector<double> sample(const Partition& p, double (*f)(double)) {
  std::vector<double> v(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) v[i] = f(p.midpoint(i));
  return v;
}

/// Exhaustive sup over all subsequences containing at least two points.
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

/// osc_1 by direct Riemann sum over a fine x grid, scanning the cells hit by
/// each window.
double riemann_osc1(const std::vector<double>& v, Interval d, double rho, std::size_t samples) {
  const double w = d.length() / static_cast<double>(v.size());
  double total = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double x = d.lo + (static_cast<double>(s) + 0.5) * d.length() / static_cast<double>(samples);
    const double lo = std::max(d.lo, x - rho), hi = std::min(d.hi, x + rho);
    double mn = 1e300, mx = -1e300;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double a = d.lo + w * static_cast<double>(k), b = a + w;
      if (b > lo && a < hi) {
        mn = std::min(mn, v[k]);
        mx = std::max(mx, v[k]);
      }
    }
    total += mx - mn;
  }
  return total * d.length() / static_cast<double>(samples);
}

}  // namespace

TEST(MapFamily, BoundaryAndLimits) {
  const auto T = MapFamily::geometric();
  EXPECT_NEAR(T(0.5), 0.5, 1e-15);
  EXPECT_NEAR(T(-0.5), -0.5, 1e-15);
  EXPECT_NEAR(T(1e-300), -0.5, 1e-15);
  EXPECT_NEAR(T(-1e-300), 0.5, 1e-15);
  EXPECT_NEAR(T(-0.25), -(std::pow(0.5, 0.6) - 0.5), 1e-15);
  EXPECT_NEAR(T(-0.25), -0.1598, 1e-4);
  EXPECT_THROW(T(0.0), SingularityError);
  EXPECT_THROW(T.derivative(0.0), SingularityError);
}

TEST(MapFamily, RejectsNonExpandingParameters) {
  EXPECT_THROW(MapFamily(1.5, std::exp2(1.5)), ModelViolation);
  EXPECT_THROW(MapFamily::geometric(0.0, 0.5), ModelViolation);
  EXPECT_THROW(MapFamily(0.6, 2.0), ModelViolation);
  EXPECT_NO_THROW(MapFamily::geometric(0.0, 0.56));
  EXPECT_TRUE(MapFamily::doubling().is_doubling());
}

TEST(MapFamily, ExpansionCertificate) {
  for (double eps : {0.0, 0.005, 0.01, 0.02, 0.04}) {
    const auto T = MapFamily::geometric(eps);
    EXPECT_GT(T.min_slope(), 1.0);
    EXPECT_GE(expansion_certificate(T), T.min_slope() - 1e-9);
  }
}

TEST(MapFamily, MonotoneBranchesAndInverses) {
  const auto T = MapFamily::geometric(0.02);
  RandomStream r(3, 0);
  for (int i = 0; i < 1000; ++i) {
    const double a = r.uniform(-0.5, 0.5), b = r.uniform(-0.5, 0.5);
    if (a == 0.0 || b == 0.0) continue;
    if ((a < 0) == (b < 0) && a < b) {
      EXPECT_LT(T(a), T(b));
    }
    const double y = T(a);
    EXPECT_GE(y, -0.5);
    EXPECT_LE(y, 0.5);
    const std::size_t k = a > 0 ? 1 : 0;
    EXPECT_NEAR(T.branch_inverse(k, y), a, 1e-12);
  }
}

TEST(Partition, TilesDomain) {
  const Partition p(MapFamily::kDomain, 7);
  EXPECT_EQ(p.cell(0).lo, -0.5);
  EXPECT_EQ(p.cell(6).hi, 0.5);
  for (std::size_t i = 0; i + 1 < 7; ++i) EXPECT_EQ(p.cell(i).hi, p.cell(i + 1).lo);
  EXPECT_EQ(p.index_of(0.5), 6u);
  EXPECT_EQ(p.index_of(-0.5), 0u);
  EXPECT_THROW(Partition(MapFamily::kDomain, 0), DomainError);
}

TEST(Ulam, DoublingHasTwoHalfEntriesPerRow) {
  const DoublingMap t;
  const auto op = build_ulam(t, Partition(t.domain(), 4));
  const double expected[4][4] = {{0.5, 0.5, 0, 0}, {0, 0, 0.5, 0.5}, {0.5, 0.5, 0, 0}, {0, 0, 0.5, 0.5}};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(op.entry(i, j), expected[i][j]);
  }
  EXPECT_THROW(build_ulam(t, Partition(t.domain(), 1)), DomainError);
}

TEST(Ulam, RowsAreStochastic) {
  for (std::size_t n : {17, 256, 4096}) {
    for (double eps : {0.0, 0.04}) {
      const auto op = build_ulam(MapFamily::geometric(eps), Partition(MapFamily::kDomain, n));
      for (std::size_t i = 0; i < n; ++i) {
        ASSERT_NEAR(op.row_sum(i), 1.0, 1e-12);
      }
    }
    const auto op = build_ulam(MapFamily::doubling(), Partition(MapFamily::kDomain, n));
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(op.row_sum(i), 1.0, 1e-12);
  }
}

TEST(Ulam, DualityErrorDecreasesUnderRefinement) {
  const auto T = MapFamily::geometric();
  auto f = [](double x) { return 1.0 + 0.5 * std::sin(3.0 * x) + x * x; };
  auto g = [](double x) { return std::cos(2.0 * x) + x; };
  const auto gT = [&](double x) { return f(x) * g(T(x)); };
  // <f, g o T> by adaptive quadrature on each branch.
  const double exact = integrate_adaptive(gT, -0.5, 0.0, 1e-14, 5000).value +
                       integrate_adaptive(gT, 0.0, 0.5, 1e-14, 5000).value;
  std::vector<double> errors;
  for (std::size_t n : {256, 1024, 4096}) {
    const Partition p(MapFamily::kDomain, n);
    const auto op = build_ulam(T, p);
    const auto fc = cell_averages(p, f);
    const auto gc = cell_averages(p, g);
    const auto pf = op.push_forward(fc);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += pf[j] * gc[j];
    errors.push_back(std::abs(s * p.width() - exact));
  }
  EXPECT_LT(errors[1], errors[0]);
  EXPECT_LT(errors[2], errors[1]);
  EXPECT_LT(errors[2], 1e-3);
}

TEST(InvariantDensity, DoublingIsUniform) {
  const DoublingMap t;
  const auto h = invariant_density(build_ulam(t, Partition(t.domain(), 1024)));
  for (double w : h.weights) EXPECT_NEAR(w, 1.0, 1e-6);
  EXPECT_NEAR(h.integral(), 1.0, 1e-10);
}

TEST(InvariantDensity, GeometricFamilyIsStableUnderRefinement) {
  const auto T = MapFamily::geometric();
  const auto op2 = build_ulam(T, Partition(MapFamily::kDomain, 2048));
  const auto op4 = build_ulam(T, Partition(MapFamily::kDomain, 4096));
  const auto h2 = invariant_density(op2);
  const auto h4 = invariant_density(op4);
  for (const auto* h : {&h2, &h4}) {
    EXPECT_NEAR(h->integral(), 1.0, 1e-10);
    for (double w : h->weights) EXPECT_GE(w, 0.0);
  }
  EXPECT_NEAR(h4.sup() / h2.sup(), 1.0, 0.02);
  const auto ph = op4.push_forward(h4.weights);
  EXPECT_LT(l1_distance(ph, h4.weights, h4.partition.width()), 1e-10);
}

TEST(InvariantDensity, SupBoundedAcrossSweep) {
  std::vector<double> sups;
  for (double eps : {0.04, 0.02, 0.01, 0.005, 0.0}) {
    sups.push_back(invariant_density(build_ulam(MapFamily::geometric(eps), Partition(MapFamily::kDomain, 4096))).sup());
  }
  const auto [lo, hi] = std::minmax_element(sups.begin(), sups.end());
  EXPECT_LT(*hi, 2.0);
  EXPECT_LT(*hi / *lo, 1.05);
}

TEST(InvariantDensity, ConvergenceFailureCarriesResidual) {
  const auto op = build_ulam(MapFamily::geometric(), Partition(MapFamily::kDomain, 256));
  try {
    invariant_density(op, 1e-10, 2);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 1e-10);
  }
}

TEST(Decay, FixedPointGivesZeroNorms) {
  const auto op = build_ulam(MapFamily::geometric(), Partition(MapFamily::kDomain, 1024));
  const auto h = invariant_density(op);
  const auto r = decay_rate(op, h, h.weights, 10);
  for (double v : r.norms) EXPECT_LT(v, 1e-9);
  EXPECT_TRUE(r.flagged);
}

TEST(Decay, DoublingHalvesTheLinearMode) {
  // The transfer operator of u -> 2u mod 1 maps u - 1/2 to (u - 1/2) / 2, so
  // ||P^n f||_1 = 2^-n ||f||_1 with ||f||_1 = 1/4.
  const Partition p(MapFamily::kDomain, 1024);
  const auto op = build_ulam(MapFamily::doubling(), p);
  const auto h = invariant_density(op);
  const auto f = sample(p, [](double x) { return x; });
  const auto r = decay_rate(op, h, f, 8);
  for (std::size_t n = 1; n <= 8; ++n) EXPECT_NEAR(r.norms[n - 1], std::ldexp(0.25, -static_cast<int>(n)), 1e-12);
  EXPECT_NEAR(r.lambda_hat, 0.5, 1e-9);
  EXPECT_FALSE(r.flagged);
}

TEST(Decay, DoublingAnnihilatesTheFirstFourierMode) {
  // (cos(pi u) + cos(pi (u + 1))) / 2 = 0: the transfer operator kills
  // cos(2 pi u) in one step, up to the discretization of the cell averages.
  const Partition p(MapFamily::kDomain, 1024);
  const auto op = build_ulam(MapFamily::doubling(), p);
  const auto h = invariant_density(op);
  const auto f = cell_averages(p, [](double x) { return std::cos(2.0 * std::numbers::pi * x); });
  const auto r = decay_rate(op, h, f, 5);
  for (double v : r.norms) EXPECT_LT(v, 1e-12);
}

TEST(Decay, GeometricRateBelowOneAndStableInEps) {
  std::vector<double> rates;
  for (double eps : {0.0, 0.01, 0.02}) {
    const Partition p(MapFamily::kDomain, 4096);
    const auto op = build_ulam(MapFamily::geometric(eps), p);
    const auto h = invariant_density(op);
    const auto f = sample(p, [](double x) { return std::cos(2.0 * std::numbers::pi * x); });
    const auto r = decay_rate(op, h, f, 40);
    ASSERT_FALSE(r.flagged);
    EXPECT_LT(r.lambda_hat, 1.0);
    rates.push_back(r.lambda_hat);
  }
  EXPECT_LT(std::abs(rates[1] - rates[0]), 0.05);
  EXPECT_LT(std::abs(rates[2] - rates[0]), 0.05);
}

TEST(VpNorm, SimpleCases) {
  const Partition p(MapFamily::kDomain, 100);
  const auto ind = sample(p, [](double x) { return x >= 0.0 && x <= 0.5 ? 1.0 : 0.0; });
  for (double q : {1.0, 1.5, 2.0, 4.0}) EXPECT_NEAR(vp_norm(ind, q), 1.0, 1e-15);
  const std::vector<double> c(50, 2.0);
  EXPECT_EQ(vp_norm(c, 2.0), 0.0);
  EXPECT_THROW(vp_norm(std::vector<double>{}, 2.0), DomainError);
  EXPECT_THROW(vp_norm(c, 0.5), DomainError);
}

TEST(VpNorm, DynamicProgramMatchesExhaustiveSearch) {
  RandomStream r(5, 0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> v(12);
    for (double& x : v) x = r.uniform(-1.0, 1.0);
    for (double q : {1.0, 1.3, 2.0, 3.0}) EXPECT_NEAR(vp_norm(v, q), brute_force_vp(v, q), 1e-12);
  }
  std::vector<double> lin(12);
  for (std::size_t i = 0; i < 12; ++i) lin[i] = static_cast<double>(i) / 11.0;
  EXPECT_NEAR(vp_norm(lin, 2.0), brute_force_vp(lin, 2.0), 1e-12);
  EXPECT_NEAR(vp_norm(lin, 2.0), 1.0, 1e-12);
}

TEST(Oscillation, IndicatorBandAndConstant) {
  const Partition p(MapFamily::kDomain, 1000);
  const auto ind = sample(p, [](double x) { return x >= 0.0 ? 1.0 : 0.0; });
  EXPECT_NEAR(osc1(ind, MapFamily::kDomain, 0.01), 0.02, 1e-12);
  const std::vector<double> c(64, -1.0);
  EXPECT_EQ(osc1(c, MapFamily::kDomain, 0.05), 0.0);
  const auto n = osc_norm(c, MapFamily::kDomain, 0.05, 0.1, 2.0);
  EXPECT_EQ(n.osc1, 0.0);
  EXPECT_EQ(n.v_1_1p, 0.0);
  EXPECT_THROW(osc1(c, MapFamily::kDomain, 0.0), DomainError);
  EXPECT_THROW(osc_norm(c, MapFamily::kDomain, -1.0, 0.1, 2.0), DomainError);
}

TEST(Oscillation, ExactSweepMatchesRiemannSum) {
  RandomStream r(9, 0);
  std::vector<double> v(37);
  for (double& x : v) x = r.uniform(-1.0, 1.0);
  for (double rho : {0.003, 0.02, 0.11}) {
    EXPECT_NEAR(osc1(v, MapFamily::kDomain, rho), riemann_osc1(v, MapFamily::kDomain, rho, 200000), 2e-4);
  }
}

TEST(Oscillation, VariationInequalityOnRandomStepFunctions) {
  RandomStream r(21, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 16 + static_cast<std::size_t>(r.uniform() * 240.0);
    const double p = 1.0 + 3.0 * r.uniform();
    std::vector<double> v(m);
    double level = 0.0;
    for (double& x : v) {
      if (r.uniform() < 0.2) level = r.uniform(-2.0, 2.0);
      x = level;
    }
    const double lhs = bv_seminorm(v, MapFamily::kDomain, p);
    const double rhs = std::pow(2.0, 1.0 / p) * vp_norm(v, p);
    EXPECT_LE(lhs, rhs + 1e-9) << "trial " << trial;
  }
}

TEST(Export, CsvColumns) {
  const auto op = build_ulam(MapFamily::doubling(), Partition(MapFamily::kDomain, 4));
  const auto h = invariant_density(op);
  const auto csv = density_table(h).to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "cell_index,left_endpoint,weight");
  EXPECT_NE(csv.find("\n1,-0.25,1\n"), std::string::npos);
  DecayResult d;
  d.norms = {0.125};
  EXPECT_EQ(decay_table(d).to_csv(), "n,l1_norm\n1,0.125\n");
}
