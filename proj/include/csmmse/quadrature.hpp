#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "csmmse/scalar_funcs.hpp"

namespace csmmse {

// Two-component zero-mean Gaussian mixture of the Q variable:
// weight 1-m_a on variance P_y, weight m_a on variance P_y + R^2 sigma2.
struct MixtureQ {
  double w0 = 0.5, w1 = 0.5;
  double v0 = 1.0, v1 = 2.0;

  static MixtureQ from(const ScalarContext& ctx) {
    MixtureQ mix;
    mix.w0 = 1.0 - ctx.m_a;
    mix.w1 = ctx.m_a;
    const ModelParams& p = ctx.params;
    double p_y = ctx.m_a * p.sigma2 * p.R + p.R / p.beta;
    mix.v0 = p_y;
    mix.v1 = p_y + p.R * p.R * p.sigma2;
    if (!(mix.v0 > 0.0 && mix.v1 > mix.v0))
      throw std::domain_error("MixtureQ: need 0 < v0 < v1");
    return mix;
  }

  double second_moment() const { return w0 * v0 + w1 * v1; }
};

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// K(q, a1, a2) = (1/2)(1 + tanh((L(a1) q^2 - a2)/2)), evaluated through the
// logistic form. Saturates exactly to 0/1 once the argument passes +-40,
// which also guards the exponentials at large beta.
inline double K_of_q2(double q2, double L_value, double alpha2) {
  double z = L_value * q2 - alpha2;
  if (z > 40.0) return 1.0;
  if (z < -40.0) return 0.0;
  return logistic(z);
}

inline double K_func(double q, double alpha1, double alpha2,
                     const ModelParams& params) {
  return K_of_q2(q * q, L_func(alpha1, params), alpha2);
}

// log(2 cosh(u)) without overflow.
inline double log_2cosh(double u) {
  double a = std::abs(u);
  return a + std::log1p(std::exp(-2.0 * a));
}

// Gauss-Hermite rule for a standard normal weight. Nodes are the
// eigenvalues of the Jacobi matrix; weights come from the Christoffel
// function evaluated through the bounded Hermite functions, which avoids
// the overflow of raw orthonormal polynomials at large order.
class GaussHermiteRule {
 public:
  explicit GaussHermiteRule(int n) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("GaussHermiteRule: eigen solve failed");
    nodes_.resize(n);
    weights_.resize(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double x = es.eigenvalues()[i];
      nodes_[i] = x;
      // Hermite functions psi_k = p_k * (2pi)^{-1/4} exp(-x^2/4)
      double psi_prev = 0.0;
      double psi = std::pow(2.0 * std::numbers::pi, -0.25) *
                   std::exp(-0.25 * x * x);
      double sum = psi * psi;
      for (int k = 1; k < n; ++k) {
        double next = (x * psi - std::sqrt(static_cast<double>(k - 1)) *
                                     psi_prev) /
                      std::sqrt(static_cast<double>(k));
        psi_prev = psi;
        psi = next;
        sum += psi * psi;
      }
      double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      weights_[i] = sum > 0.0 ? phi / sum : 0.0;
      total += weights_[i];
    }
    for (auto& w : weights_) w /= total;  // exact normalization
  }

  static const GaussHermiteRule& get(int n) {
    static std::map<int, GaussHermiteRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, GaussHermiteRule(n)).first;
    return it->second;
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

struct QuadratureConfig {
  int initial_nodes = 200;
  int max_nodes = 6400;
  double rel_tol = 1e-10;
  // Above this value of L * max variance the logistic transition is too
  // sharp for Gauss-Hermite (the doubling contract stalls long before the
  // node cap) and the panel path takes over.
  double sharp_threshold = 5.0;
};

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Moments of the K weight against the mixture law of Q.
struct KMoments {
  double k = 0.0;     // E[K]
  double kq2 = 0.0;   // E[K Q^2]
  double k2 = 0.0;    // E[K^2]
  double k2q2 = 0.0;  // E[K^2 Q^2]
};

namespace detail {

// 24-point Gauss-Legendre on [-1,1].
inline const std::vector<std::pair<double, double>>& gl24() {
  static const std::vector<std::pair<double, double>> rule = [] {
    int n = 24;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 1; k < n; ++k) {
      double kk = k;
      sub[k - 1] = kk / std::sqrt(4.0 * kk * kk - 1.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k + 1 < n; ++k) {
      J(k, k + 1) = sub[k];
      J(k + 1, k) = sub[k];
    }
    es.compute(J);
    std::vector<std::pair<double, double>> out(n);
    for (int i = 0; i < n; ++i) {
      double w = 2.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
      out[i] = {es.eigenvalues()[i], w};
    }
    return out;
  }();
  return rule;
}

// Panel boundaries in q >= 0 for one Gaussian component: regular sigma-wide
// panels out to 12 sigma, refined across the logistic transition where
// |L q^2 - gamma| <= 40.
inline std::vector<double> panel_edges(double stddev, double L_value,
                                       double gamma) {
  const double qmax = 12.0 * stddev;
  std::vector<double> edges;
  edges.push_back(0.0);
  double q_lo = -1.0, q_hi = -1.0;
  if (L_value > 0.0) {
    double lo_arg = (gamma - 40.0) / L_value;
    double hi_arg = (gamma + 40.0) / L_value;
    if (hi_arg > 0.0) {
      q_lo = lo_arg > 0.0 ? std::sqrt(lo_arg) : 0.0;
      q_hi = std::sqrt(hi_arg);
    }
  }
  auto add_regular = [&edges](double a, double b, double width) {
    int count = std::max(1, static_cast<int>(std::ceil((b - a) / width)));
    count = std::min(count, 4096);
    for (int i = 1; i <= count; ++i)
      edges.push_back(a + (b - a) * i / count);
  };
  if (q_lo >= 0.0 && q_lo < qmax) {
    double hi = std::min(q_hi, qmax);
    if (q_lo > 0.0) add_regular(0.0, q_lo, stddev);
    // 16 panels across the transition itself
    add_regular(q_lo, hi, std::max((hi - q_lo) / 16.0, 1e-300));
    if (hi < qmax) add_regular(hi, qmax, stddev);
  } else {
    add_regular(0.0, qmax, stddev);
  }
  return edges;
}

}  // namespace detail

// Expectations over the asymptotic mixture variable Q. The generic
// expect() follows the Gauss-Hermite + doubling contract; the fused
// K-moment and free-energy evaluations switch to transition-aware
// Gauss-Legendre panels once the tanh kernel saturates, where no
// affordable Hermite order resolves the near-indicator integrand.
class MixtureExpectation {
 public:
  explicit MixtureExpectation(const MixtureQ& mix,
                              QuadratureConfig cfg = QuadratureConfig{})
      : mix_(mix), cfg_(cfg) {}

  const MixtureQ& mixture() const { return mix_; }
  double second_moment() const { return mix_.second_moment(); }

  // E[phi(Q^2)] by per-component Gauss-Hermite with node doubling.
  double expect(const std::function<double(double)>& phi_of_q2) const {
    double prev = gh_pass(phi_of_q2, cfg_.initial_nodes);
    for (int n = 2 * cfg_.initial_nodes; n <= cfg_.max_nodes; n *= 2) {
      double cur = gh_pass(phi_of_q2, n);
      if (std::abs(cur - prev) <=
          cfg_.rel_tol * std::max(1.0, std::abs(cur)))
        return cur;
      prev = cur;
    }
    throw QuadratureError(
        "mixture expectation did not converge under node doubling");
  }

  // Same integral evaluated without the even-symmetry folding; tests pin
  // the two against each other.
  double expect_unfolded(const std::function<double(double)>& phi_of_q2,
                         int nodes) const {
    const GaussHermiteRule& rule = GaussHermiteRule::get(nodes);
    double acc = 0.0;
    for (int i = 0; i < rule.size(); ++i) {
      double x = rule.nodes()[i], w = rule.weights()[i];
      acc += w * (mix_.w0 * phi_of_q2(mix_.v0 * x * x) +
                  mix_.w1 * phi_of_q2(mix_.v1 * x * x));
    }
    return acc;
  }

  double expect_folded(const std::function<double(double)>& phi_of_q2,
                       int nodes) const {
    return gh_pass(phi_of_q2, nodes);
  }

  KMoments k_moments(double L_value, double gamma) const {
    if (use_panels(L_value)) return k_moments_panels(L_value, gamma);
    KMoments prev = k_moments_gh(L_value, gamma, cfg_.initial_nodes);
    for (int n = 2 * cfg_.initial_nodes; n <= cfg_.max_nodes; n *= 2) {
      KMoments cur = k_moments_gh(L_value, gamma, n);
      if (close(cur.k, prev.k) && close(cur.kq2, prev.kq2) &&
          close(cur.k2, prev.k2) && close(cur.k2q2, prev.k2q2))
        return cur;
      prev = cur;
    }
    // doubling exhausted: the transition is sharper than the threshold
    // heuristic guessed, so take the panel route
    return k_moments_panels(L_value, gamma);
  }

  // E[(1/2) L Q^2 + log 2cosh((L Q^2 - gamma)/2)]
  double free_energy_expect(double L_value, double gamma) const {
    auto phi = [&](double q2) {
      return 0.5 * L_value * q2 + log_2cosh(0.5 * (L_value * q2 - gamma));
    };
    if (use_panels(L_value)) return panel_pass(phi, L_value, gamma);
    try {
      return expect(phi);
    } catch (const QuadratureError&) {
      return panel_pass(phi, L_value, gamma);
    }
  }

 private:
  bool use_panels(double L_value) const {
    return L_value * std::max(mix_.v0, mix_.v1) > cfg_.sharp_threshold;
  }

  static bool close(double a, double b) {
    return std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(a));
  }

  double gh_pass(const std::function<double(double)>& phi_of_q2,
                 int nodes) const {
    const GaussHermiteRule& rule = GaussHermiteRule::get(nodes);
    // fold: even integrand in q, so positive nodes carry doubled weight
    double acc = 0.0;
    for (int i = 0; i < rule.size(); ++i) {
      double x = rule.nodes()[i];
      if (x < 0.0) continue;
      double w = rule.weights()[i];
      double scale = (x == 0.0) ? 1.0 : 2.0;
      acc += scale * w *
             (mix_.w0 * phi_of_q2(mix_.v0 * x * x) +
              mix_.w1 * phi_of_q2(mix_.v1 * x * x));
    }
    return acc;
  }

  KMoments k_moments_gh(double L_value, double gamma, int nodes) const {
    const GaussHermiteRule& rule = GaussHermiteRule::get(nodes);
    KMoments acc;
    const double wgt[2] = {mix_.w0, mix_.w1};
    const double var[2] = {mix_.v0, mix_.v1};
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < rule.size(); ++i) {
        double x = rule.nodes()[i];
        if (x < 0.0) continue;
        double w = rule.weights()[i] * (x == 0.0 ? 1.0 : 2.0) * wgt[c];
        double q2 = var[c] * x * x;
        double k = K_of_q2(q2, L_value, gamma);
        acc.k += w * k;
        acc.kq2 += w * k * q2;
        acc.k2 += w * k * k;
        acc.k2q2 += w * k * k * q2;
      }
    }
    return acc;
  }

  KMoments k_moments_panels(double L_value, double gamma) const {
    KMoments acc;
    const double wgt[2] = {mix_.w0, mix_.w1};
    const double var[2] = {mix_.v0, mix_.v1};
    for (int c = 0; c < 2; ++c) {
      double s = std::sqrt(var[c]);
      auto edges = detail::panel_edges(s, L_value, gamma);
      const auto& gl = detail::gl24();
      double inv_norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
      for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        double a = edges[e], b = edges[e + 1];
        double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (const auto& [t, w] : gl) {
          double q = mid + half * t;
          double dens = 2.0 * inv_norm * std::exp(-0.5 * q * q / var[c]);
          double common = wgt[c] * w * half * dens;
          double q2 = q * q;
          double k = K_of_q2(q2, L_value, gamma);
          acc.k += common * k;
          acc.kq2 += common * k * q2;
          acc.k2 += common * k * k;
          acc.k2q2 += common * k * k * q2;
        }
      }
    }
    return acc;
  }

  double panel_pass(const std::function<double(double)>& phi_of_q2,
                    double L_value, double gamma) const {
    double acc = 0.0;
    const double wgt[2] = {mix_.w0, mix_.w1};
    const double var[2] = {mix_.v0, mix_.v1};
    for (int c = 0; c < 2; ++c) {
      double s = std::sqrt(var[c]);
      auto edges = detail::panel_edges(s, L_value, gamma);
      const auto& gl = detail::gl24();
      double inv_norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
      for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        double a = edges[e], b = edges[e + 1];
        double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (const auto& [t, w] : gl) {
          double q = mid + half * t;
          double dens = 2.0 * inv_norm * std::exp(-0.5 * q * q / var[c]);
          acc += wgt[c] * w * half * dens * phi_of_q2(q * q);
        }
      }
    }
    return acc;
  }

  MixtureQ mix_;
  QuadratureConfig cfg_;
};

// (rho1, rho2, rho3) = (E[K Q^2], E[K^2], E[K^2 Q^2]) at K = K(Q, m, gamma).
struct RhoMoments {
  double rho1 = 0.0, rho2 = 0.0, rho3 = 0.0;
};

inline RhoMoments rho_moments(double m, double gamma, const ScalarContext& ctx,
                              const MixtureExpectation& expectation) {
  double L_value = L_func(m, ctx.params);
  KMoments km = expectation.k_moments(L_value, gamma);
  return RhoMoments{km.kq2, km.k2, km.k2q2};
}

}  // namespace csmmse
