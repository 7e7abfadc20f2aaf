#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "csmmse/csv.hpp"
#include "csmmse/model.hpp"
#include "csmmse/rng.hpp"

namespace csmmse {

// Zero is a degenerate hook used by tests: the posterior then
// collapses to the prior.
enum class MatrixEnsemble { Gaussian, Rademacher, Zero };

// One finite-n draw of the model y = H x + w.
struct Instance {
  int n = 0;
  int k = 0;
  Eigen::MatrixXd H;
  SupportPattern s_true;
  Eigen::VectorXd x;
  Eigen::VectorXd w;
  Eigen::VectorXd y;
};

inline Eigen::MatrixXd sample_sensing_matrix(int k, int n, Philox& rng,
                                             MatrixEnsemble ensemble) {
  Eigen::MatrixXd H(k, n);
  if (ensemble == MatrixEnsemble::Zero) return H.setZero();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < k; ++i)
      H(i, j) = ensemble == MatrixEnsemble::Gaussian
                    ? scale * rng.normal()
                    : (rng.uniform() < 0.5 ? -scale : scale);
  return H;
}

inline Instance make_instance(const SparsityPrior& prior,
                              const ModelParams& params, int n, Philox& rng,
                              MatrixEnsemble ensemble =
                                  MatrixEnsemble::Gaussian) {
  params.validate();
  Instance inst;
  inst.n = n;
  inst.k = static_cast<int>(std::lround(params.R * n));
  if (inst.k < 1)
    throw std::domain_error("make_instance: R*n rounds to zero measurements");
  inst.H = sample_sensing_matrix(inst.k, n, rng, ensemble);
  inst.s_true = sample_support(prior, static_cast<std::size_t>(n), rng);
  inst.x = Eigen::VectorXd::Zero(n);
  const double sd = std::sqrt(params.sigma2);
  for (int i = 0; i < n; ++i)
    if (inst.s_true.bits[i]) inst.x[i] = sd * rng.normal();
  inst.w = Eigen::VectorXd(inst.k);
  const double wd = 1.0 / std::sqrt(params.beta);
  for (int i = 0; i < inst.k; ++i) inst.w[i] = wd * rng.normal();
  inst.y = inst.H * inst.x + inst.w;
  return inst;
}

// Q_{s and r}: |S| x |R| matrix with a one at (rank of j in S, rank of j
// in R) for every j in the support intersection.
inline Eigen::MatrixXd overlap_matrix(const SupportPattern& s,
                                      const SupportPattern& r) {
  if (s.size() != r.size())
    throw std::invalid_argument("overlap_matrix: pattern length mismatch");
  const std::size_t ns = s.count(), nr = r.count();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(ns, nr);
  std::size_t rank_s = 0, rank_r = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s.bits[j] && r.bits[j]) Q(rank_s, rank_r) = 1.0;
    rank_s += s.bits[j];
    rank_r += r.bits[j];
  }
  return Q;
}

namespace detail {

inline std::vector<int> mask_columns(std::uint32_t mask, int n) {
  std::vector<int> cols;
  for (int i = 0; i < n; ++i)
    if (mask & (1u << i)) cols.push_back(i);
  return cols;
}

inline SupportPattern mask_pattern(std::uint32_t mask, int n) {
  SupportPattern pat;
  pat.bits.assign(n, 0);
  for (int i = 0; i < n; ++i)
    if (mask & (1u << i)) pat.bits[i] = 1;
  return pat;
}

}  // namespace detail

// Per-support ridge solve: all downstream quantities reduce to
//   z = (beta Hs' Hs + I/sigma2)^{-1} Hs' y,
// the trace of that inverse, and log det(beta sigma2 Hs' Hs + I).
struct SupportSolve {
  std::vector<int> support;
  Eigen::VectorXd z;
  double quad = 0.0;            // y' Hs z
  double trace_inv = 0.0;       // tr (beta Hs'Hs + I/sigma2)^{-1}
  double logdet_shannon = 0.0;  // log det(beta sigma2 Hs'Hs + I)
};

inline SupportSolve solve_support(const Eigen::VectorXd& y,
                                  const Eigen::MatrixXd& H, std::uint32_t mask,
                                  const ModelParams& params) {
  SupportSolve out;
  out.support = detail::mask_columns(mask, static_cast<int>(H.cols()));
  const int m = static_cast<int>(out.support.size());
  if (m == 0) return out;
  Eigen::MatrixXd Hs(H.rows(), m);
  for (int j = 0; j < m; ++j) Hs.col(j) = H.col(out.support[j]);
  Eigen::MatrixXd M = params.beta * (Hs.transpose() * Hs);
  M.diagonal().array() += 1.0 / params.sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("solve_support: ridge factorization failed");
  Eigen::VectorXd a = Hs.transpose() * y;
  out.z = llt.solve(a);
  out.quad = a.dot(out.z);
  out.trace_inv =
      llt.solve(Eigen::MatrixXd::Identity(m, m)).trace();
  double logdet_M = 0.0;
  for (int j = 0; j < m; ++j) logdet_M += std::log(llt.matrixL()(j, j));
  logdet_M *= 2.0;
  out.logdet_shannon = m * std::log(params.sigma2) + logdet_M;
  return out;
}

// log xi = (beta^2/2) y'Hs (beta Hs'Hs + I/s2)^{-1} Hs'y
//          - (1/2) log det(beta s2 Hs'Hs + I);  empty support gives 0.
inline double log_xi(const Eigen::VectorXd& y, const Eigen::MatrixXd& H,
                     std::uint32_t mask, const ModelParams& params) {
  SupportSolve s = solve_support(y, H, mask, params);
  return 0.5 * params.beta * params.beta * s.quad - 0.5 * s.logdet_shannon;
}

inline double J1(const Eigen::VectorXd& y, const Eigen::MatrixXd& H,
                 std::uint32_t mask, const ModelParams& params) {
  SupportSolve s = solve_support(y, H, mask, params);
  const double n = static_cast<double>(H.cols());
  if (s.support.empty()) return 0.0;
  return (s.trace_inv + params.beta * params.beta * s.z.squaredNorm()) / n;
}

inline double J2(const Eigen::VectorXd& y, const Eigen::MatrixXd& H,
                 std::uint32_t mask_s, std::uint32_t mask_r,
                 const ModelParams& params) {
  SupportSolve a = solve_support(y, H, mask_s, params);
  SupportSolve b = solve_support(y, H, mask_r, params);
  const int n = static_cast<int>(H.cols());
  Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd vb = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < a.support.size(); ++j) va[a.support[j]] = a.z[j];
  for (std::size_t j = 0; j < b.support.size(); ++j) vb[b.support[j]] = b.z[j];
  return params.beta * params.beta * va.dot(vb) / static_cast<double>(n);
}

inline constexpr int kEnumerationCap = 20;

inline void check_enumeration_cap(int n, bool override_cap) {
  if (n > 24)
    throw std::domain_error("support enumeration: n > 24 is not supported");
  if (n > kEnumerationCap && !override_cap)
    throw std::domain_error(
        "support enumeration: n exceeds the cap of 20 (pass override to "
        "force)");
}

struct PosteriorTable {
  int n = 0;
  std::vector<double> log_weight;  // unnormalized, indexed by support mask
  std::vector<double> prob;        // normalized, same indexing
};

// mu(s) ~ exp(n f(m_s)) * xi(s), normalized by log-sum-exp over all 2^n
// patterns.
inline PosteriorTable posterior(const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& H,
                                const SparsityPrior& prior,
                                const ModelParams& params,
                                bool override_cap = false) {
  const int n = static_cast<int>(H.cols());
  check_enumeration_cap(n, override_cap);
  const std::uint32_t count = 1u << n;
  PosteriorTable table;
  table.n = n;
  table.log_weight.resize(count);
  double maxw = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    double m_s = static_cast<double>(__builtin_popcount(mask)) / n;
    table.log_weight[mask] =
        n * prior.f(m_s) + log_xi(y, H, mask, params);
    maxw = std::max(maxw, table.log_weight[mask]);
  }
  table.prob.resize(count);
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    table.prob[mask] = std::exp(table.log_weight[mask] - maxw);
    total += table.prob[mask];
  }
  for (auto& p : table.prob) p /= total;
  return table;
}

// E[X | y, H] by mixing the per-support ridge means.
inline Eigen::VectorXd conditional_mean(const Eigen::VectorXd& y,
                                        const Eigen::MatrixXd& H,
                                        const SparsityPrior& prior,
                                        const ModelParams& params,
                                        bool override_cap = false) {
  PosteriorTable table = posterior(y, H, prior, params, override_cap);
  const int n = table.n;
  Eigen::VectorXd xhat = Eigen::VectorXd::Zero(n);
  for (std::uint32_t mask = 0; mask < table.prob.size(); ++mask) {
    if (table.prob[mask] == 0.0) continue;
    SupportSolve s = solve_support(y, H, mask, params);
    for (std::size_t j = 0; j < s.support.size(); ++j)
      xhat[s.support[j]] += table.prob[mask] * params.beta * s.z[j];
  }
  return xhat;
}

// log Z(y; lambda) up to a lambda-independent constant; its gradient at
// lambda = 0 is the conditional mean.
inline double log_partition(const Eigen::VectorXd& y, const Eigen::MatrixXd& H,
                            const SparsityPrior& prior,
                            const ModelParams& params,
                            const Eigen::VectorXd& lambda,
                            bool override_cap = false) {
  const int n = static_cast<int>(H.cols());
  check_enumeration_cap(n, override_cap);
  const std::uint32_t count = 1u << n;
  double maxw = -std::numeric_limits<double>::infinity();
  std::vector<double> logw(count);
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    const auto cols = detail::mask_columns(mask, n);
    const int m = static_cast<int>(cols.size());
    double m_s = static_cast<double>(m) / n;
    double val = n * prior.f(m_s);
    if (m > 0) {
      Eigen::MatrixXd Hs(H.rows(), m);
      Eigen::VectorXd ls(m);
      for (int j = 0; j < m; ++j) {
        Hs.col(j) = H.col(cols[j]);
        ls[j] = lambda[cols[j]];
      }
      Eigen::MatrixXd M = params.beta * (Hs.transpose() * Hs);
      M.diagonal().array() += 1.0 / params.sigma2;
      Eigen::LLT<Eigen::MatrixXd> llt(M);
      Eigen::VectorXd rhs = params.beta * (Hs.transpose() * y) + ls;
      double logdet_M = 0.0;
      for (int j = 0; j < m; ++j) logdet_M += std::log(llt.matrixL()(j, j));
      val += 0.5 * rhs.dot(llt.solve(rhs)) -
             0.5 * (m * std::log(params.sigma2) + 2.0 * logdet_M);
    }
    logw[mask] = val;
    maxw = std::max(maxw, val);
  }
  double total = 0.0;
  for (double v : logw) total += std::exp(v - maxw);
  return maxw + std::log(total);
}

// Per-instance normalized posterior variance through the two routes:
//   jj   = E_mu[J1] - E_{mu x mu}[J2]
//   The pair expectation collapses to (beta^2/n)|sum_s mu(s) z_s|^2 since
//   z_s' Q_{s and r} z_r is the inner product of the embedded vectors; the
//   literal double sum is quadratic in 2^n and tested against this form.
struct InstanceMmse {
  double jj = 0.0;        // E[J1] - E[J2] route
  double direct = 0.0;    // (1/n) |x - xhat|^2 for this draw
  double e_j1 = 0.0;
  double e_j2 = 0.0;
};

inline InstanceMmse instance_mmse(const Instance& inst,
                                  const SparsityPrior& prior,
                                  const ModelParams& params,
                                  bool override_cap = false) {
  PosteriorTable table =
      posterior(inst.y, inst.H, prior, params, override_cap);
  const int n = inst.n;
  double e_j1 = 0.0;
  Eigen::VectorXd vbar = Eigen::VectorXd::Zero(n);
  for (std::uint32_t mask = 0; mask < table.prob.size(); ++mask) {
    double mu = table.prob[mask];
    if (mu == 0.0) continue;
    SupportSolve s = solve_support(inst.y, inst.H, mask, params);
    if (!s.support.empty()) {
      e_j1 += mu * (s.trace_inv + params.beta * params.beta *
                                      s.z.squaredNorm()) /
              static_cast<double>(n);
      for (std::size_t j = 0; j < s.support.size(); ++j)
        vbar[s.support[j]] += mu * s.z[j];
    }
  }
  InstanceMmse out;
  out.e_j1 = e_j1;
  out.e_j2 = params.beta * params.beta * vbar.squaredNorm() /
             static_cast<double>(n);
  out.jj = out.e_j1 - out.e_j2;
  Eigen::VectorXd xhat = params.beta * vbar;
  out.direct = (inst.x - xhat).squaredNorm() / static_cast<double>(n);
  return out;
}

struct McMmseResult {
  double estimate = 0.0;
  double std_error = 0.0;
  double direct_estimate = 0.0;
  double direct_std_error = 0.0;
  int trials = 0;
};

// Monte-Carlo normalized MMSE over fresh instances. Stream t of the seed
// drives trial t, so results do not depend on evaluation order.
inline McMmseResult mc_mmse(const SparsityPrior& prior,
                            const ModelParams& params, int n, int trials,
                            std::uint64_t seed, bool override_cap = false,
                            MatrixEnsemble ensemble =
                                MatrixEnsemble::Gaussian) {
  if (trials < 2) throw std::domain_error("mc_mmse: need at least 2 trials");
  check_enumeration_cap(n, override_cap);
  std::vector<double> vals(trials), directs(trials);
  for (int t = 0; t < trials; ++t) {
    Philox rng(seed, static_cast<std::uint64_t>(t) + 1);
    Instance inst = make_instance(prior, params, n, rng, ensemble);
    InstanceMmse im = instance_mmse(inst, prior, params, override_cap);
    vals[t] = im.jj;
    directs[t] = im.direct;
  }
  auto mean_se = [&](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= (v.size() - 1);
    return std::pair<double, double>(mean, std::sqrt(var / v.size()));
  };
  McMmseResult out;
  auto [m1, s1] = mean_se(vals);
  auto [m2, s2] = mean_se(directs);
  out.estimate = m1;
  out.std_error = s1;
  out.direct_estimate = m2;
  out.direct_std_error = s2;
  out.trials = trials;
  return out;
}

// Text dump of one instance: header line with the draw parameters, then
// labeled CSV blocks for H, s, x, w, y.
inline void write_instance(std::ostream& out, const Instance& inst,
                           const ModelParams& params, std::uint64_t seed,
                           int trial) {
  out << "# csmmse-instance n=" << inst.n << " k=" << inst.k
      << " seed=" << seed << " trial=" << trial
      << " R=" << format_number(params.R)
      << " beta=" << format_number(params.beta)
      << " sigma2=" << format_number(params.sigma2) << "\n";
  auto write_vector = [&out](const char* label, const Eigen::VectorXd& v) {
    out << label << "\n";
    for (int i = 0; i < v.size(); ++i)
      out << (i ? "," : "") << format_number(v[i]);
    out << "\n";
  };
  out << "H\n";
  for (int i = 0; i < inst.k; ++i) {
    for (int j = 0; j < inst.n; ++j)
      out << (j ? "," : "") << format_number(inst.H(i, j));
    out << "\n";
  }
  out << "s\n";
  for (int i = 0; i < inst.n; ++i)
    out << (i ? "," : "") << int(inst.s_true.bits[i]);
  out << "\n";
  write_vector("x", inst.x);
  write_vector("w", inst.w);
  write_vector("y", inst.y);
}

inline Instance read_instance(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# csmmse-instance", 0) != 0)
    throw std::runtime_error("read_instance: missing header line");
  Instance inst;
  auto field = [&line](const std::string& key) {
    auto pos = line.find(key + "=");
    if (pos == std::string::npos)
      throw std::runtime_error("read_instance: missing field " + key);
    return std::stod(line.substr(pos + key.size() + 1));
  };
  inst.n = static_cast<int>(field("n"));
  inst.k = static_cast<int>(field("k"));
  auto parse_row = [](const std::string& s) {
    std::vector<double> vals;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    return vals;
  };
  auto expect_label = [&in, &line](const char* label) {
    if (!std::getline(in, line) || line != label)
      throw std::runtime_error(std::string("read_instance: expected block ") +
                               label);
  };
  expect_label("H");
  inst.H.resize(inst.k, inst.n);
  for (int i = 0; i < inst.k; ++i) {
    std::getline(in, line);
    auto vals = parse_row(line);
    if (static_cast<int>(vals.size()) != inst.n)
      throw std::runtime_error("read_instance: bad H row width");
    for (int j = 0; j < inst.n; ++j) inst.H(i, j) = vals[j];
  }
  expect_label("s");
  std::getline(in, line);
  auto sv = parse_row(line);
  inst.s_true.bits.resize(inst.n);
  for (int i = 0; i < inst.n; ++i)
    inst.s_true.bits[i] = sv[i] != 0.0 ? 1 : 0;
  auto read_vec = [&](const char* label, Eigen::VectorXd& v, int len) {
    expect_label(label);
    std::getline(in, line);
    auto vals = parse_row(line);
    if (static_cast<int>(vals.size()) != len)
      throw std::runtime_error("read_instance: bad vector length");
    v.resize(len);
    for (int i = 0; i < len; ++i) v[i] = vals[i];
  };
  read_vec("x", inst.x, inst.n);
  read_vec("w", inst.w, inst.k);
  read_vec("y", inst.y, inst.k);
  return inst;
}

}  // namespace csmmse
