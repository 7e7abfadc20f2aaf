#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csmmse/finite_n.hpp"
#include "csmmse/solver.hpp"

namespace csmmse {

struct RmtReport {
  std::string check;
  int n = 0;
  int k = 0;
  double m_s = 0.0, m_r = 0.0, m_sr = 0.0;
  std::uint64_t seed = 0;
  double empirical = 0.0;
  double equivalent = 0.0;
  double abs_gap = 0.0;
};

namespace detail {

inline std::vector<int> random_pattern(int n, int count, Philox& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < count; ++i) {
    int j = i + static_cast<int>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct BigSupport {
  std::vector<int> cols;
  Eigen::MatrixXd Hs;
  Eigen::LLT<Eigen::MatrixXd> llt;  // of beta Hs'Hs + I/sigma2
  Eigen::VectorXd a;                // Hs' y
  Eigen::VectorXd z;                // resolvent solve of a

  BigSupport(const Eigen::MatrixXd& H, const std::vector<int>& support,
             const ModelParams& params, const Eigen::VectorXd* y) {
    cols = support;
    const int m = static_cast<int>(cols.size());
    Hs.resize(H.rows(), m);
    for (int j = 0; j < m; ++j) Hs.col(j) = H.col(cols[j]);
    Eigen::MatrixXd M = params.beta * (Hs.transpose() * Hs);
    M.diagonal().array() += 1.0 / params.sigma2;
    llt.compute(M);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("rmt: ridge factorization failed");
    if (y) {
      a = Hs.transpose() * (*y);
      z = llt.solve(a);
    }
  }

  double trace_inv() const {
    const int m = static_cast<int>(cols.size());
    return llt.solve(Eigen::MatrixXd::Identity(m, m)).trace();
  }

  double logdet_shannon(const ModelParams& params) const {
    const int m = static_cast<int>(cols.size());
    double logdet_M = 0.0;
    for (int j = 0; j < m; ++j) logdet_M += std::log(llt.matrixL()(j, j));
    return m * std::log(params.sigma2) + 2.0 * logdet_M;
  }
};

}  // namespace detail

// (1/n) tr(beta Hs'Hs + I/sigma2)^{-1} against sigma2 m_s b(m_s).
inline RmtReport check_stieltjes(int n, double m_s, const ModelParams& params,
                                 std::uint64_t seed,
                                 MatrixEnsemble ensemble =
                                     MatrixEnsemble::Gaussian) {
  params.validate();
  Philox rng(seed, 0);
  const int k = static_cast<int>(std::lround(params.R * n));
  Eigen::MatrixXd H = sample_sensing_matrix(k, n, rng, ensemble);
  const int count = static_cast<int>(std::floor(n * m_s + 0.5));
  RmtReport rep;
  rep.check = "stieltjes";
  rep.n = n;
  rep.k = k;
  rep.seed = seed;
  rep.m_s = static_cast<double>(count) / n;
  if (count == 0) {
    rep.empirical = rep.equivalent = rep.abs_gap = 0.0;
    return rep;
  }
  auto support = detail::random_pattern(n, count, rng);
  detail::BigSupport bs(H, support, params, nullptr);
  rep.empirical = bs.trace_inv() / n;
  rep.equivalent = params.sigma2 * rep.m_s * b_func(rep.m_s, params);
  rep.abs_gap = std::abs(rep.empirical - rep.equivalent);
  return rep;
}

// (1/n) log det(beta sigma2 Hs'Hs + I) against m_s I_bar(m_s).
inline RmtReport check_shannon(int n, double m_s, const ModelParams& params,
                               std::uint64_t seed,
                               MatrixEnsemble ensemble =
                                   MatrixEnsemble::Gaussian) {
  params.validate();
  Philox rng(seed, 0);
  const int k = static_cast<int>(std::lround(params.R * n));
  Eigen::MatrixXd H = sample_sensing_matrix(k, n, rng, ensemble);
  const int count = static_cast<int>(std::floor(n * m_s + 0.5));
  RmtReport rep;
  rep.check = "shannon";
  rep.n = n;
  rep.k = k;
  rep.seed = seed;
  rep.m_s = static_cast<double>(count) / n;
  if (count == 0) {
    rep.empirical = rep.equivalent = rep.abs_gap = 0.0;
    return rep;
  }
  auto support = detail::random_pattern(n, count, rng);
  detail::BigSupport bs(H, support, params, nullptr);
  rep.empirical = bs.logdet_shannon(params) / n;
  rep.equivalent = rep.m_s * I_bar(rep.m_s, params);
  rep.abs_gap = std::abs(rep.empirical - rep.equivalent);
  return rep;
}

// (1/n) y'Hs (resolvent) Hs'y against the f_n approximant built from
// |y|^2/n and |Hs'y|^2/n.
inline RmtReport check_fn(int n, double m_s, const SparsityPrior& prior,
                          const ModelParams& params, std::uint64_t seed,
                          MatrixEnsemble ensemble = MatrixEnsemble::Gaussian) {
  params.validate();
  Philox rng(seed, 0);
  Instance inst = make_instance(prior, params, n, rng, ensemble);
  const int count = static_cast<int>(std::floor(n * m_s + 0.5));
  RmtReport rep;
  rep.check = "fn";
  rep.n = n;
  rep.k = inst.k;
  rep.seed = seed;
  rep.m_s = static_cast<double>(count) / n;
  if (count == 0) {
    rep.empirical = rep.equivalent = rep.abs_gap = 0.0;
    return rep;
  }
  auto support = detail::random_pattern(n, count, rng);
  detail::BigSupport bs(inst.H, support, params, &inst.y);
  rep.empirical = inst.y.dot(bs.Hs * bs.z) / n;
  double b = b_func(rep.m_s, params);
  double g = 1.0 + params.beta * params.sigma2 * rep.m_s * b;
  double y2 = inst.y.squaredNorm() / n;
  double bs2 = bs.a.squaredNorm() / n;
  rep.equivalent = params.beta * params.sigma2 * params.sigma2 * b * b *
                       rep.m_s * rep.m_s / (g * g) * y2 +
                   params.sigma2 * b / (g * g) * bs2;
  rep.abs_gap = std::abs(rep.empirical - rep.equivalent);
  return rep;
}

// (1/n) y'Hs (res_s) Q_{s and r} (res_r) Hr'y against the q_n approximant.
inline RmtReport check_qn(int n, double m_s, double m_r, double m_sr,
                          const SparsityPrior& prior,
                          const ModelParams& params, std::uint64_t seed,
                          MatrixEnsemble ensemble = MatrixEnsemble::Gaussian) {
  params.validate();
  const int n_sr = static_cast<int>(std::floor(n * m_sr + 0.5));
  const int n_s = static_cast<int>(std::floor(n * m_s + 0.5));
  const int n_r = static_cast<int>(std::floor(n * m_r + 0.5));
  if (n_sr > std::min(n_s, n_r) || n_s + n_r - n_sr > n)
    throw std::domain_error("check_qn: infeasible magnetization triple");
  Philox rng(seed, 0);
  Instance inst = make_instance(prior, params, n, rng, ensemble);
  // common indices first, then disjoint extras for each pattern
  auto pool = detail::random_pattern(n, n_s + n_r - n_sr, rng);
  // re-shuffle pool order for assignment
  for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
    std::swap(pool[i], pool[static_cast<int>(rng.below(i + 1))]);
  std::vector<int> S(pool.begin(), pool.begin() + n_s);
  std::vector<int> Rp(pool.begin(), pool.begin() + n_sr);
  Rp.insert(Rp.end(), pool.begin() + n_s, pool.end());
  std::sort(S.begin(), S.end());
  std::sort(Rp.begin(), Rp.end());

  RmtReport rep;
  rep.check = "qn";
  rep.n = n;
  rep.k = inst.k;
  rep.seed = seed;
  rep.m_s = static_cast<double>(n_s) / n;
  rep.m_r = static_cast<double>(n_r) / n;
  rep.m_sr = static_cast<double>(n_sr) / n;

  detail::BigSupport as(inst.H, S, params, &inst.y);
  detail::BigSupport ar(inst.H, Rp, params, &inst.y);
  // embedded inner product z_s' Q_{s and r} z_r
  Eigen::VectorXd vs = Eigen::VectorXd::Zero(n), vr = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < S.size(); ++j) vs[S[j]] = as.z[j];
  for (std::size_t j = 0; j < Rp.size(); ++j) vr[Rp[j]] = ar.z[j];
  rep.empirical = vs.dot(vr) / n;

  const double sigma2 = params.sigma2, beta = params.beta, R = params.R;
  double bS = b_func(rep.m_s, params), bR = b_func(rep.m_r, params);
  double gS = 1.0 + beta * sigma2 * rep.m_s * bS;
  double gR = 1.0 + beta * sigma2 * rep.m_r * bR;
  double eta0 = beta * R / gR;
  double psi0 = beta * R / gR -
                beta * beta * sigma2 * R * bS * rep.m_sr / (gS * gR);
  double alpha = 1.0 / ((eta0 + 1.0 / sigma2) * (psi0 + 1.0 / sigma2));
  double y2 = inst.y.squaredNorm() / n;
  double Bs = as.a.squaredNorm() / n;
  double Br = ar.a.squaredNorm() / n;
  // A = (1/n) sum_{j in S and R} (h_j' y)^2
  double A = 0.0;
  {
    std::size_t is = 0, ir = 0;
    while (is < S.size() && ir < Rp.size()) {
      if (S[is] == Rp[ir]) {
        A += as.a[is] * ar.a[ir];
        ++is;
        ++ir;
      } else if (S[is] < Rp[ir]) {
        ++is;
      } else {
        ++ir;
      }
    }
    A /= n;
  }
  double pref = alpha / (gS * gR);
  rep.equivalent =
      pref * A -
      pref * beta * sigma2 * rep.m_sr * (bR / gR * Br + bS / gS * Bs) +
      pref * beta * sigma2 * rep.m_sr *
          (bR / gR * rep.m_r + bS / gS * rep.m_s) * y2;
  rep.abs_gap = std::abs(rep.empirical - rep.equivalent);
  return rep;
}

// Empirical saddle point of one instance: the fixed-point system with
// every mixture expectation replaced by (1/n) sum_i phi(|y' h_i|^2) and
// P_y replaced by |y|^2/n.
struct EmpiricalSaddleResult {
  std::vector<FixedPointSolution> solutions;  // sorted, head selected
  double y_norm2_over_n = 0.0;
};

inline EmpiricalSaddleResult empirical_saddle(const Instance& inst,
                                              const SparsityPrior& prior,
                                              const ModelParams& params,
                                              const SolverConfig& cfg = {}) {
  std::vector<double> u(inst.n);
  for (int i = 0; i < inst.n; ++i) {
    double d = inst.y.dot(inst.H.col(i));
    u[i] = d * d;
  }
  EmpiricalSaddleResult out;
  out.y_norm2_over_n = inst.y.squaredNorm() / inst.n;
  ScalarContext ctx =
      ScalarContext::make_empirical(params, prior, out.y_norm2_over_n);
  EmpiricalExpectation engine(std::move(u));
  out.solutions = solve_system(ctx, engine, cfg);
  return out;
}

}  // namespace csmmse
