#pragma once

#include <cmath>
#include <stdexcept>

#include "csmmse/model.hpp"
#include "csmmse/scalar_funcs.hpp"

namespace csmmse {

// Support-aware (genie) MMSE: the unique solution of
//   E = sigma2 m / (1 + R beta sigma2 / (1 + beta E)),
// in closed form. Same conjugate-root treatment as b(x); in fact
// E(m) = sigma2 * m * b(m) for m > 0.
inline double oracle_E(double m, const ModelParams& p) {
  if (!(m >= 0.0 && m <= 1.0))
    throw std::domain_error("oracle_E: m must lie in [0,1]");
  if (m == 0.0) return 0.0;
  const double c = p.beta * p.sigma2;
  const double u = 1.0 + c * (p.R - m);
  const double disc = std::sqrt(u * u + 4.0 * c * m);
  if (u >= 0.0) return 2.0 * p.sigma2 * m / (u + disc);
  return (-u + disc) / (2.0 * p.beta);
}

// Noise-sensitivity threshold of the oracle estimator: beta * E(m_a)
// stays bounded as beta grows iff R exceeds the a-priori magnetization.
inline double oracle_threshold(const SparsityPrior& prior) {
  return prior.m_a();
}

}  // namespace csmmse
