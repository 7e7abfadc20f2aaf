#pragma once

#include <cmath>
#include <stdexcept>

#include "csmmse/model.hpp"

namespace csmmse {

// Evaluation context for the auxiliary scalar functions. p_y is
// m_a*sigma2*R + R/beta for the asymptotic system; the empirical
// saddle-point solver substitutes |y|^2/n for it.
struct ScalarContext {
  ModelParams params;
  double m_a = 0.0;
  double p_y = 0.0;
  const SparsityPrior* prior = nullptr;

  static ScalarContext make(const ModelParams& params,
                            const SparsityPrior& prior) {
    params.validate();
    ScalarContext ctx;
    ctx.params = params;
    ctx.m_a = prior.m_a();
    ctx.p_y = prior.m_a() * params.sigma2 * params.R + params.R / params.beta;
    ctx.prior = &prior;
    return ctx;
  }

  static ScalarContext make_empirical(const ModelParams& params,
                                      const SparsityPrior& prior,
                                      double y_norm2_over_n) {
    ScalarContext ctx = make(params, prior);
    ctx.p_y = y_norm2_over_n;
    return ctx;
  }
};

// Positive root of beta*sigma2*x*b^2 + (1+beta*sigma2*(R-x))*b - 1 = 0.
// The conjugate form avoids cancellation when the linear coefficient is
// large and positive (big beta, x < R); the direct form is safe otherwise.
inline double b_func(double x, const ModelParams& p) {
  if (!(x > 0.0 && x <= 1.0))
    throw std::domain_error("b: x must lie in (0,1]");
  const double c = p.beta * p.sigma2;
  const double u = 1.0 + c * (p.R - x);
  const double disc = std::sqrt(u * u + 4.0 * c * x);
  if (u >= 0.0) return 2.0 / (u + disc);
  return (-u + disc) / (2.0 * c * x);
}

// Total x->0+ extension, 1/(1+beta*sigma2*R).
inline double b_zero_limit(const ModelParams& p) {
  return 1.0 / (1.0 + p.beta * p.sigma2 * p.R);
}

inline double g_func(double x, const ModelParams& p) {
  return 1.0 + p.beta * p.sigma2 * x * b_func(x, p);
}

inline double I_bar(double x, const ModelParams& p) {
  const double b = b_func(x, p);
  const double g = 1.0 + p.beta * p.sigma2 * x * b;
  return (p.R / x) * std::log(g) - std::log(b) -
         p.beta * p.sigma2 * p.R * b / g;
}

inline double V_func(double x, const ModelParams& p) {
  const double b = b_func(x, p);
  const double g = 1.0 + p.beta * p.sigma2 * x * b;
  const double bx = b * x;
  return p.beta * p.beta * p.beta * p.sigma2 * p.sigma2 * bx * bx /
         (2.0 * g * g);
}

inline double L_func(double x, const ModelParams& p) {
  const double b = b_func(x, p);
  const double g = 1.0 + p.beta * p.sigma2 * x * b;
  return p.beta * p.beta * p.sigma2 * b / (2.0 * g * g);
}

inline double t_func(double x, const ScalarContext& ctx) {
  return ctx.prior->f(x) - 0.5 * x * I_bar(x, ctx.params) +
         V_func(x, ctx.params) * ctx.p_y;
}

inline double nu1(double x, double y, const ModelParams& p) {
  const double b = b_func(x, p);
  const double g = 1.0 + p.beta * p.sigma2 * x * b;
  double v = p.beta * p.R / g -
             p.beta * p.beta * p.R * p.sigma2 * b * y / (g * g) +
             1.0 / p.sigma2;
  if (!(v > 0.0))
    throw std::runtime_error("nu1: non-positive value encountered");
  return v;
}

inline double nu2(double x, const ModelParams& p) {
  const double g = g_func(x, p);
  return p.beta * p.R / g + 1.0 / p.sigma2;
}

inline double alpha_func(double x, double y, const ModelParams& p) {
  return 1.0 / (nu1(x, y, p) * nu2(x, p));
}

inline double alpha_func(double x, const ModelParams& p) {
  return alpha_func(x, x, p);
}

// All auxiliary values and analytic derivatives at one point; the
// fixed-point solver calls this in its hot loop. b' comes from implicit
// differentiation of the defining quadratic.
struct ScalarBundle {
  double b, g, Ibar, V, L;
  double b_prime, g_prime, Ibar_prime, V_prime, L_prime;
};

inline ScalarBundle scalar_bundle(double x, const ModelParams& p) {
  ScalarBundle s{};
  const double c = p.beta * p.sigma2;
  s.b = b_func(x, p);
  s.g = 1.0 + c * x * s.b;
  s.Ibar = (p.R / x) * std::log(s.g) - std::log(s.b) - c * p.R * s.b / s.g;
  const double bx = s.b * x;
  s.V = p.beta * c * c * bx * bx / (2.0 * s.g * s.g);
  s.L = p.beta * c * s.b / (2.0 * s.g * s.g);
  const double denom = 2.0 * c * x * s.b + 1.0 + c * (p.R - x);
  s.b_prime = c * s.b * (1.0 - s.b) / denom;
  s.g_prime = c * (s.b + x * s.b_prime);
  s.Ibar_prime = p.R * (s.g_prime / (x * s.g) - std::log(s.g) / (x * x)) -
                 s.b_prime / s.b -
                 c * p.R * (s.b_prime * s.g - s.b * s.g_prime) / (s.g * s.g);
  s.V_prime = p.beta * c * c * (bx / s.g) *
              ((s.b_prime * x + s.b) * s.g - bx * s.g_prime) / (s.g * s.g);
  s.L_prime = 0.5 * p.beta * c * (s.b_prime * s.g - 2.0 * s.b * s.g_prime) /
              (s.g * s.g * s.g);
  return s;
}

inline double b_prime(double x, const ModelParams& p) {
  return scalar_bundle(x, p).b_prime;
}

inline double L_prime(double x, const ModelParams& p) {
  return scalar_bundle(x, p).L_prime;
}

inline double t_prime(double x, const ScalarContext& ctx) {
  const ScalarBundle s = scalar_bundle(x, ctx.params);
  return ctx.prior->f_prime(x) - 0.5 * s.Ibar - 0.5 * x * s.Ibar_prime +
         s.V_prime * ctx.p_y;
}

inline double t_prime(double x, const ScalarContext& ctx,
                      const ScalarBundle& s) {
  return ctx.prior->f_prime(x) - 0.5 * s.Ibar - 0.5 * x * s.Ibar_prime +
         s.V_prime * ctx.p_y;
}

}  // namespace csmmse
