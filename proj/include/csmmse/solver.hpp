#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csmmse/quadrature.hpp"
#include "csmmse/scalar_funcs.hpp"

namespace csmmse {

struct NoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverConfig {
  // Convergence is measured in the scaled max-norm
  // max(|r_m|, |r_gamma|/(1+|gamma|)); gamma grows like beta at high SNR,
  // where an absolute 1e-10 would sit below double roundoff of the
  // quadrature-fed right-hand side.
  double tolerance = 1e-10;
  int max_iterations = 10000;
  double damping = 0.5;
  double cluster_radius = 1e-6;
  double degenerate_gap = 1e-8;
  std::vector<double> multistart;  // empty -> 0.02, 0.05, ..., 0.98

  std::vector<double> starts() const {
    if (!multistart.empty()) return multistart;
    std::vector<double> s;
    for (double m0 = 0.02; m0 <= 0.98 + 1e-12; m0 += 0.03) s.push_back(m0);
    return s;
  }
};

struct FixedPointSolution {
  double m_star = 0.0;
  double gamma_star = 0.0;
  double rho1 = 0.0, rho2 = 0.0, rho3 = 0.0;
  double free_energy = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool degenerate_flag = false;
};

// Residuals of the two fixed-point equations:
//   r_gamma = gamma - (-E[K Q^2] L'(m) - t'(m)),   r_m = m - E[K].
template <class Engine>
std::pair<double, double> residuals(double m, double gamma,
                                    const ScalarContext& ctx,
                                    const Engine& engine) {
  ScalarBundle s = scalar_bundle(m, ctx.params);
  KMoments km = engine.k_moments(s.L, gamma);
  double rhs_gamma = -s.L_prime * km.kq2 - t_prime(m, ctx, s);
  return {gamma - rhs_gamma, m - km.k};
}

// Selection functional
//   t(m) + (m - 1/2) gamma + E[(1/2) L(m) Q^2 + log 2cosh((L(m)Q^2-gamma)/2)].
template <class Engine>
double free_energy(double m, double gamma, const ScalarContext& ctx,
                   const Engine& engine) {
  double L_value = L_func(m, ctx.params);
  return t_func(m, ctx) + (m - 0.5) * gamma +
         engine.free_energy_expect(L_value, gamma);
}

namespace detail {

template <class Engine>
std::optional<FixedPointSolution> iterate_from(double m0,
                                               const ScalarContext& ctx,
                                               const Engine& engine,
                                               const SolverConfig& cfg) {
  double m = std::clamp(m0, 1e-9, 1.0 - 1e-9);
  ScalarBundle s0 = scalar_bundle(m, ctx.params);
  double eq2 = engine.second_moment();
  double gamma = -s0.L_prime * m * eq2 - t_prime(m, ctx, s0);
  double eta = cfg.damping;
  double prev_res = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iterations; ++it) {
    ScalarBundle s = scalar_bundle(m, ctx.params);
    KMoments km = engine.k_moments(s.L, gamma);
    double rhs_m = km.k;
    double rhs_gamma = -s.L_prime * km.kq2 - t_prime(m, ctx, s);
    double res = std::max(std::abs(m - rhs_m),
                          std::abs(gamma - rhs_gamma) /
                              (1.0 + std::abs(gamma)));
    if (res < cfg.tolerance) {
      FixedPointSolution sol;
      sol.m_star = m;
      sol.gamma_star = gamma;
      sol.rho1 = km.kq2;
      sol.rho2 = km.k2;
      sol.rho3 = km.k2q2;
      sol.iterations = it;
      sol.residual = res;
      sol.free_energy = free_energy(m, gamma, ctx, engine);
      return sol;
    }
    if (res > prev_res) eta = std::max(0.5 * eta, 1.0 / 64.0);
    prev_res = res;
    m = std::clamp((1.0 - eta) * m + eta * rhs_m, 1e-9, 1.0 - 1e-9);
    gamma = (1.0 - eta) * gamma + eta * rhs_gamma;
  }
  return std::nullopt;
}

}  // namespace detail

// Damped fixed-point iteration from the multistart grid. Converged pairs
// are clustered, sorted by free energy descending (then by m), and the
// head is the selected solution. The result is independent of the start
// ordering by construction.
template <class Engine>
std::vector<FixedPointSolution> solve_system(const ScalarContext& ctx,
                                             const Engine& engine,
                                             const SolverConfig& cfg = {}) {
  std::vector<FixedPointSolution> found;
  for (double m0 : cfg.starts()) {
    auto sol = detail::iterate_from(m0, ctx, engine, cfg);
    if (!sol) continue;
    bool merged = false;
    for (auto& existing : found) {
      bool same = std::abs(existing.m_star - sol->m_star) <
                      cfg.cluster_radius &&
                  std::abs(existing.gamma_star - sol->gamma_star) /
                          (1.0 + std::abs(existing.gamma_star)) <
                      cfg.cluster_radius;
      if (same) {
        if (sol->residual < existing.residual) existing = *sol;
        merged = true;
        break;
      }
    }
    if (!merged) found.push_back(*sol);
  }
  if (found.empty())
    throw NoConvergence("no multistart point reached the fixed point");
  std::sort(found.begin(), found.end(),
            [](const FixedPointSolution& a, const FixedPointSolution& b) {
              if (a.free_energy != b.free_energy)
                return a.free_energy > b.free_energy;
              return a.m_star < b.m_star;
            });
  for (std::size_t i = 0; i < found.size(); ++i) {
    for (std::size_t j = 0; j < found.size(); ++j) {
      if (i != j && std::abs(found[i].free_energy - found[j].free_energy) <
                        cfg.degenerate_gap)
        found[i].degenerate_flag = true;
    }
  }
  return found;
}

inline std::vector<FixedPointSolution> solve(
    const ScalarContext& ctx, const SolverConfig& cfg = {},
    const QuadratureConfig& qcfg = {}) {
  MixtureExpectation engine(MixtureQ::from(ctx), qcfg);
  return solve_system(ctx, engine, cfg);
}

// Asymptotic MMSE at a converged solution. The second term's middle
// factor is (m P_y - rho1): without the leading m the assembly breaks
// the D <= m_a sigma2 bound.
inline double mmse(const ScalarContext& ctx, const FixedPointSolution& sol) {
  const ModelParams& p = ctx.params;
  double m = sol.m_star;
  double b = b_func(m, p);
  double g = 1.0 + p.beta * p.sigma2 * m * b;
  double a_mm = alpha_func(m, m, p);
  double a_mr = alpha_func(m, sol.rho2, p);
  double beta3 = p.beta * p.beta * p.beta;
  double term1 = p.sigma2 * m * b;
  double term2 = (2.0 * b / (g * g * g)) * beta3 * p.sigma2 *
                 (m * ctx.p_y - sol.rho1) * (m * a_mm - sol.rho2 * a_mr);
  double term3 = (p.beta * p.beta / (g * g)) *
                 (a_mm * sol.rho1 - a_mr * sol.rho3);
  return term1 + term2 + term3;
}

inline double noise_sensitivity(const ScalarContext& ctx,
                                const FixedPointSolution& sol) {
  return ctx.params.beta * mmse(ctx, sol);
}

// Empirical-limit report for the infinite-SNR conjecture: beta*D against
// the two candidate closed forms, whose sigma2 placement differs.
struct NoiseSensitivityReport {
  double beta = 0.0;
  double value = 0.0;            // beta * D at this beta
  double candidate_plain = 0.0;  // m_a / (R - m_a)
  double candidate_scaled = 0.0; // sigma2 * m_a / (R - m_a)
  std::string attained;          // "plain", "sigma2_scaled", or "unbounded"
};

inline NoiseSensitivityReport noise_sensitivity_limit(
    const SparsityPrior& prior, double R, double sigma2, double beta_large,
    const SolverConfig& cfg = {}, const QuadratureConfig& qcfg = {}) {
  ModelParams params{R, beta_large, sigma2};
  ScalarContext ctx = ScalarContext::make(params, prior);
  auto sols = solve(ctx, cfg, qcfg);
  NoiseSensitivityReport rep;
  rep.beta = beta_large;
  rep.value = noise_sensitivity(ctx, sols.front());
  double ma = prior.m_a();
  if (R <= ma) {
    rep.attained = "unbounded";
    rep.candidate_plain = rep.candidate_scaled =
        std::numeric_limits<double>::infinity();
    return rep;
  }
  rep.candidate_plain = ma / (R - ma);
  rep.candidate_scaled = sigma2 * ma / (R - ma);
  rep.attained = std::abs(rep.value - rep.candidate_plain) <=
                         std::abs(rep.value - rep.candidate_scaled)
                     ? "plain"
                     : "sigma2_scaled";
  return rep;
}

// Expectation engine over observed samples u_i = |y^T h_i|^2; plugs the
// empirical saddle-point system into the same solver.
class EmpiricalExpectation {
 public:
  explicit EmpiricalExpectation(std::vector<double> samples)
      : samples_(std::move(samples)) {
    if (samples_.empty())
      throw std::domain_error("EmpiricalExpectation: no samples");
    double acc = 0.0;
    for (double u : samples_) acc += u;
    second_moment_ = acc / static_cast<double>(samples_.size());
  }

  double second_moment() const { return second_moment_; }

  KMoments k_moments(double L_value, double gamma) const {
    KMoments acc;
    for (double u : samples_) {
      double k = K_of_q2(u, L_value, gamma);
      acc.k += k;
      acc.kq2 += k * u;
      acc.k2 += k * k;
      acc.k2q2 += k * k * u;
    }
    double inv = 1.0 / static_cast<double>(samples_.size());
    acc.k *= inv;
    acc.kq2 *= inv;
    acc.k2 *= inv;
    acc.k2q2 *= inv;
    return acc;
  }

  double free_energy_expect(double L_value, double gamma) const {
    double acc = 0.0;
    for (double u : samples_)
      acc += 0.5 * L_value * u + log_2cosh(0.5 * (L_value * u - gamma));
    return acc / static_cast<double>(samples_.size());
  }

  const std::vector<double>& samples() const { return samples_; }

 private:
  std::vector<double> samples_;
  double second_moment_ = 0.0;
};

}  // namespace csmmse
