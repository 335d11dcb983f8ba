#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "lorvar/core/io.hpp"
#include "lorvar/core/normality.hpp"
#include "lorvar/core/parallel.hpp"
#include "lorvar/core/quadrature.hpp"
#include "lorvar/core/rng.hpp"
#include "lorvar/core/stats.hpp"

using namespace lorvar;

// Known-answer vectors for Philox4x32-10 (Random123 kat_vectors).
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(Philox4x32::block({0, 0, 0, 0}, {0, 0}),
            (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RandomStream, ReproducibleAndStreamSeparated) {
  RandomStream a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  for (int i = 0; i < 100; ++i) {
    const auto va = a();
    EXPECT_EQ(va, b());
    EXPECT_NE(va, c());
    EXPECT_NE(va, d());
  }
  EXPECT_EQ(a.draws(), 100u);
}

TEST(RandomStream, UniformMoments) {
  RandomStream r(7, 0);
  const int n = 200000;
  double s = 0.0, s2 = 0.0, g2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
    const double z = r.normal();
    g2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(s2 / n, 1.0 / 3.0, 0.005);
  EXPECT_NEAR(g2 / n, 1.0, 0.02);
}

TEST(Quadrature, PolynomialAndSingular) {
  auto poly = integrate_adaptive([](double x) { return x * x * x - 2.0 * x; }, 0.0, 2.0, 1e-12);
  EXPECT_NEAR(poly.value, 0.0, 1e-12);
  auto sq = integrate_adaptive([](double x) { return std::sqrt(x); }, 0.0, 1.0, 1e-10, 2000);
  EXPECT_NEAR(sq.value, 2.0 / 3.0, 1e-9);
  EXPECT_THROW(integrate_adaptive([](double x) { return 1.0 / x; }, 0.0, 1.0, 1e-12, 20), QuadratureError);
}

TEST(Stats, LinearFitRecoversLine) {
  std::vector<double> x{0, 1, 2, 3, 4}, y;
  for (double v : x) y.push_back(1.5 - 0.25 * v);
  const auto f = linear_fit(x, y);
  EXPECT_NEAR(f.slope, -0.25, 1e-14);
  EXPECT_NEAR(f.intercept, 1.5, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
}

TEST(Stats, SampleVarianceOfNormal) {
  RandomStream r(1, 1);
  std::vector<double> v(100000);
  for (double& x : v) x = 2.0 * r.normal();
  const auto s = sample_variance(v);
  EXPECT_NEAR(s.variance, 4.0, 3.0 * s.stderr_);
  // Var of the sample variance of N(0, s^2) is 2 s^4 / n.
  EXPECT_NEAR(s.stderr_, std::sqrt(2.0 * 16.0 / v.size()), 0.05 * s.stderr_);
}

TEST(Stats, PairedJackknifeOfIdenticalReplicatesIsZero) {
  VarianceEstimate a, b;
  a.replicates = {1.0, 2.0, 3.0, 4.0};
  b.replicates = {2.0, 3.0, 4.0, 5.0};
  EXPECT_DOUBLE_EQ(paired_jackknife_stderr(a, b), 0.0);
}

TEST(Normality, NormalSamplePasses) {
  RandomStream r(11, 0);
  std::vector<double> v(1000);
  for (double& x : v) x = r.normal();
  const auto d = clt_normality(v);
  EXPECT_TRUE(d.passes);
  EXPECT_FALSE(d.degenerate);
  EXPECT_LT(d.max_pp_deviation, 0.05);
  EXPECT_LT(d.anderson_darling, 1.5);
}

TEST(Normality, ExponentialSampleFailsAndConstantIsDegenerate) {
  RandomStream r(12, 0);
  std::vector<double> v(1000);
  for (double& x : v) x = -std::log(r.uniform_open());
  EXPECT_FALSE(clt_normality(v).passes);
  std::vector<double> c(1000, 3.25);
  const auto d = clt_normality(c);
  EXPECT_TRUE(d.degenerate);
}

TEST(Parallel, ScheduleIndependentAndPropagatesErrors) {
  std::vector<double> out(1000);
  parallel_for(out.size(), [&](std::size_t i) { out[i] = std::sin(static_cast<double>(i)); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], std::sin(static_cast<double>(i)));
  EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                 if (i == 57) throw DomainError("boom");
               }),
               DomainError);
}

TEST(Io, DoublesRoundTripAndJsonOrder) {
  for (double v : {0.1, 1.0 / 3.0, std::numbers::pi, -2.5e-300, 1e300}) {
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
  io::JsonObject o;
  o.add("b", 1.5).add("a", std::string("x")).add("n", std::uint64_t{3}).add("bad", std::nan(""));
  EXPECT_EQ(o.str(false), "{\"b\":1.5,\"a\":\"x\",\"n\":3,\"bad\":null}");
  io::Table t({"n", "v"});
  t.add_row({std::uint64_t{1}, 0.5});
  EXPECT_EQ(t.to_csv(), "n,v\n1,0.5\n");
  EXPECT_THROW(t.add_row({1.0}), DomainError);
}

TEST(Io, AtomicWriteLeavesNoTemporaries) {
  const auto dir = std::filesystem::temp_directory_path() / "lorvar_io_test";
  std::filesystem::remove_all(dir);
  io::write_atomic(dir / "out.csv", "a,b\n1,2\n");
  io::write_atomic(dir / "out.csv", "a,b\n3,4\n");
  std::ifstream in(dir / "out.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "a,b\n3,4\n");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);
  std::filesystem::remove_all(dir);
}
