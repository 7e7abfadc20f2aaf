#pragma once

// Test-side reference integrators, independent of the library's
// quadrature path: expectations computed here go through recursive
// adaptive Simpson on the explicit mixture density.

#include <cmath>
#include <functional>
#include <numbers>

namespace testref {

inline double adaptive_simpson_rec(const std::function<double(double)>& f,
                                   double a, double b, double fa, double fm,
                                   double fb, double whole, double tol,
                                   int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol,
                              depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol,
                              depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f,
                               double a, double b, double tol = 1e-12,
                               int depth = 60) {
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth);
}

inline double gauss_density(double q, double variance) {
  return std::exp(-0.5 * q * q / variance) /
         std::sqrt(2.0 * std::numbers::pi * variance);
}

// E[phi(Q^2)] for the two-component zero-mean mixture, integrated over
// [-40 sqrt(v1), 40 sqrt(v1)].
inline double mixture_expect(const std::function<double(double)>& phi_of_q2,
                             double w0, double v0, double w1, double v1,
                             double tol = 1e-12) {
  double span = 40.0 * std::sqrt(v1);
  auto integrand = [&](double q) {
    double q2 = q * q;
    return phi_of_q2(q2) *
           (w0 * gauss_density(q, v0) + w1 * gauss_density(q, v1));
  };
  // seed with 64 segments per half-axis so localized features cannot be
  // skipped by the first coarse Simpson estimate; the integrand is even
  const int segments = 64;
  double acc = 0.0;
  for (int i = 0; i < segments; ++i) {
    double a = span * i / segments;
    double b = span * (i + 1) / segments;
    acc += adaptive_simpson(integrand, a, b, tol / (2.0 * segments));
  }
  return 2.0 * acc;
}

}  // namespace testref
