#ifndef LORVAR_CORE_QUADRATURE_HPP
#define LORVAR_CORE_QUADRATURE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lorvar/core/error.hpp"

namespace lorvar {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

// Kronrod 15-point abscissae and weights with the embedded 7-point Gauss rule
// (QUADPACK qk15).
inline constexpr std::array<double, 8> kKronrodNodes{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
};

template <class F>
Panel gauss_kronrod15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[j] * sum;
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * sum;
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (7/15) integration to an absolute
/// tolerance.  Throws QuadratureError when max_panels is exhausted.
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double abs_tol,
                                    std::size_t max_panels = 400) {
  if (!(b >= a)) throw DomainError("integrate_adaptive: reversed interval");
  if (a == b) return {};
  const detail::Panel first = detail::gauss_kronrod15(f, a, b);
  if (first.error <= abs_tol) return {first.value, first.error, 15};
  std::vector<detail::Panel> panels{first};
  double total = first.value;
  double error = first.error;
  while (error > abs_tol) {
    if (panels.size() >= max_panels) {
      throw QuadratureError("adaptive quadrature did not converge", error);
    }
    auto worst = std::max_element(panels.begin(), panels.end(),
                                  [](const auto& l, const auto& r) { return l.error < r.error; });
    const detail::Panel p = *worst;
    const double mid = 0.5 * (p.a + p.b);
    if (!(mid > p.a && mid < p.b)) {
      throw QuadratureError("adaptive quadrature reached machine resolution", error);
    }
    *worst = detail::gauss_kronrod15(f, p.a, mid);
    panels.push_back(detail::gauss_kronrod15(f, mid, p.b));
    total = 0.0;
    error = 0.0;
    for (const auto& q : panels) {
      total += q.value;
      error += q.error;
    }
  }
  return {total, error, 15 * (2 * panels.size() - 1)};
}

}  // namespace lorvar

#endif  // LORVAR_CORE_QUADRATURE_HPP
