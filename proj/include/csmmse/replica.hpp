#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "csmmse/solver.hpp"

namespace csmmse {

// MMSE of the scalar Bernoulli-Gaussian channel V = X + N(0, tau2),
// X = S U with S ~ Bernoulli(p), U ~ N(0, sigma2):
//   mmse = E[X^2] - E[(E[X|V])^2],
// where E[X|V=v] = pi(v) * (sigma2/(sigma2+tau2)) * v and pi is the
// posterior weight of S = 1. Gauss-Hermite over the two components of V
// with node doubling.
inline double scalar_bg_mmse(double tau2, double p, double sigma2,
                             const QuadratureConfig& qcfg = {}) {
  if (!(tau2 > 0.0)) throw std::domain_error("scalar_bg_mmse: tau2 <= 0");
  if (!(p > 0.0 && p <= 1.0))
    throw std::domain_error("scalar_bg_mmse: p outside (0,1]");
  // The posterior weight of S = 1 given v is a logistic in v^2,
  //   pi(v) = K(v; A, B),  A = sigma2/(2 tau2 (sigma2+tau2)),
  //   B = log((1-p)/p) + (1/2) log(1 + sigma2/tau2),
  // so E[(E[X|V])^2] = c^2 E[pi^2 V^2] is a K-moment of the V mixture.
  const double c = sigma2 / (sigma2 + tau2);
  const double A = sigma2 / (2.0 * tau2 * (sigma2 + tau2));
  const double B = (p == 1.0)
                       ? -std::numeric_limits<double>::infinity()
                       : std::log1p(-p) - std::log(p) +
                             0.5 * std::log1p(sigma2 / tau2);
  MixtureQ mix;
  mix.w0 = 1.0 - p;
  mix.w1 = p;
  mix.v0 = tau2;
  mix.v1 = sigma2 + tau2;
  MixtureExpectation engine(mix, qcfg);
  double second = engine.k_moments(A, B).k2q2;
  return p * sigma2 - c * c * second;
}

struct ReplicaSolution {
  double tau2 = 0.0;
  double D_replica = 0.0;
  bool converged = false;
  int iterations = 0;
};

// State evolution under the variance-1/n sensing convention: rescaling to
// unit-norm columns gives effective noise 1/(beta R) and undersampling
// ratio R, so the scalar-channel fixed point is
//   tau2 = 1/(beta R) + scalar_bg_mmse(tau2, p, sigma2) / R.
// Damped iteration from the uninformative start plus a retry from a large
// tau2; distinct fixed points are all reported (free-energy selection
// between branches is out of scope), ordered by tau2 ascending.
inline std::vector<ReplicaSolution> replica_mmse(const ModelParams& params,
                                                 double p,
                                                 const QuadratureConfig& qcfg =
                                                     {}) {
  params.validate();
  const double base = 1.0 / (params.beta * params.R);
  const double uninformative = base + p * params.sigma2 / params.R;
  std::vector<ReplicaSolution> found;
  for (double tau2_start : {uninformative, 1e3 * uninformative}) {
    double tau2 = tau2_start;
    ReplicaSolution sol;
    for (int it = 0; it < 10000; ++it) {
      double next = base + scalar_bg_mmse(tau2, p, params.sigma2, qcfg) /
                               params.R;
      sol.iterations = it;
      if (std::abs(next - tau2) <= 1e-13 * std::max(1.0, tau2)) {
        sol.converged = true;
        tau2 = next;
        break;
      }
      tau2 = 0.5 * tau2 + 0.5 * next;
    }
    if (!sol.converged)
      throw NoConvergence("replica_mmse: state evolution did not converge");
    sol.tau2 = tau2;
    sol.D_replica = scalar_bg_mmse(tau2, p, params.sigma2, qcfg);
    bool duplicate = false;
    for (const auto& other : found)
      if (std::abs(other.tau2 - tau2) <= 1e-9 * std::max(1.0, tau2))
        duplicate = true;
    if (!duplicate) found.push_back(sol);
  }
  std::sort(found.begin(), found.end(),
            [](const ReplicaSolution& a, const ReplicaSolution& b) {
              return a.tau2 < b.tau2;
            });
  return found;
}

}  // namespace csmmse
