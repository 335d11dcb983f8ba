// Poincare returns of the classical Lorenz system to z = 27: the empirical
// quotient map near the stable line and the logarithmic return time.

#include <cstdio>

#include "lorvar/lorenzode.hpp"

int main() {
  using namespace lorvar::lorenzode;
  const auto p = OdeParams::from_eps(0.0);
  const auto ev = singularity_eigenvalues(p);
  std::printf("eigenvalues at the origin: %.12f %.12f %.12f\n", ev.lambda1, ev.lambda2, ev.lambda3);

  const std::size_t n = 20000;
  const auto c = section_returns(p, n, 1);
  double worst = 0.0;
  for (const auto& k : c) worst = std::max(worst, std::abs(k.state[2] - p.z_section()));
  std::printf("%zu crossings, max |z - 27| = %.2e\n", c.size(), worst);

  const auto q = empirical_quotient(c, 64, 1000);
  std::printf("T(0+) = %.3f, T(0-) = %.3f, two branches: %s\n", q.image_right_of_zero, q.image_left_of_zero,
              q.two_branches() ? "yes" : "no");
  const auto fit = return_time_regression(q, c, 200);
  std::printf("return time vs -log|u|: slope %.4f (1/lambda1 = %.4f), R^2 %.4f\n", fit.slope, 1.0 / ev.lambda1, fit.r2);

  std::printf("\n%12s %12s %6s\n", "u", "T(u)", "count");
  for (std::size_t b = 0; b < q.bin_center.size(); b += 4) {
    if (q.count[b] == 0) continue;
    std::printf("%12.4f %12.4f %6zu\n", q.bin_center[b], q.image[b], q.count[b]);
  }
  return 0;
}
