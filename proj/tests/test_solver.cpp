#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "csmmse/oracle.hpp"
#include "csmmse/solver.hpp"
#include "support/reference_integrators.hpp"

using namespace csmmse;

namespace {

struct Problem {
  SparsityPrior prior;
  ScalarContext ctx;
  MixtureExpectation engine;

  Problem(double p, double R, double beta, double sigma2)
      : prior(SparsityPrior::iid_bernoulli(p)),
        ctx(ScalarContext::make(ModelParams{R, beta, sigma2}, prior)),
        engine(MixtureQ::from(ctx)) {}
};

// Inner bisection for gamma at fixed m: E[K] = m. Used as a test-side
// device to scan the residual field.
double gamma_at(double m, const Problem& prob) {
  double Lv = L_func(m, prob.ctx.params);
  double lo = -1e4, hi = 1e6;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (prob.engine.k_moments(Lv, mid).k > m)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("residuals vanish at a converged solution") {
  Problem prob(0.1, 0.3, 10.0, 1.0);
  auto sols = solve(prob.ctx);
  REQUIRE_FALSE(sols.empty());
  const auto& top = sols.front();
  auto [rg, rm] = residuals(top.m_star, top.gamma_star, prob.ctx, prob.engine);
  CHECK(std::abs(rm) < 1e-10);
  CHECK(std::abs(rg) / (1.0 + std::abs(top.gamma_star)) < 1e-10);
  CHECK(top.residual < 1e-10);
}

TEST_CASE("zero-SNR fixed point recovers the prior") {
  Problem prob(0.1, 0.3, 1e-8, 1.0);
  auto sols = solve(prob.ctx);
  const auto& top = sols.front();
  CHECK_THAT(top.m_star, Catch::Matchers::WithinAbs(0.1, 1e-4));
  CHECK_THAT(top.gamma_star, Catch::Matchers::WithinAbs(std::log(9.0), 1e-3));
}

TEST_CASE("residual field brackets the root") {
  Problem prob(0.1, 0.3, 10.0, 1.0);
  auto sols = solve(prob.ctx);
  double m_star = sols.front().m_star;
  auto field = [&](double m) {
    double gamma = gamma_at(m, prob);
    auto [rg, rm] = residuals(m, gamma, prob.ctx, prob.engine);
    (void)rm;  // zero by construction of gamma_at
    return rg;
  };
  double left = field(std::max(m_star - 0.02, 1e-3));
  double right = field(std::min(m_star + 0.02, 0.999));
  CHECK(left * right < 0.0);
}

TEST_CASE("free energy evaluation") {
  Problem prob(0.1, 0.3, 10.0, 1.0);
  SECTION("matches an independent adaptive integration") {
    double m = 0.2, gamma = 0.5;
    double Lv = L_func(m, prob.ctx.params);
    MixtureQ mix = MixtureQ::from(prob.ctx);
    auto phi = [&](double q2) {
      double u = 0.5 * (Lv * q2 - gamma);
      double lc = std::abs(u) < 300.0 ? std::log(2.0 * std::cosh(u))
                                      : std::abs(u);
      return 0.5 * Lv * q2 + lc;
    };
    double oracle =
        testref::mixture_expect(phi, mix.w0, mix.v0, mix.w1, mix.v1, 1e-13);
    double expected = t_func(m, prob.ctx) + (m - 0.5) * gamma + oracle;
    CHECK_THAT(free_energy(m, gamma, prob.ctx, prob.engine),
               Catch::Matchers::WithinAbs(expected, 1e-9));
  }
  SECTION("finite over a coarse grid of (m, gamma)") {
    for (double m = 0.01; m <= 0.99; m += 0.098)
      for (double gamma = -50.0; gamma <= 50.0; gamma += 10.0)
        CHECK(std::isfinite(free_energy(m, gamma, prob.ctx, prob.engine)));
  }
}

TEST_CASE("multistart selection is order independent") {
  Problem prob(0.1, 0.3, 10.0, 1.0);
  SolverConfig base;
  auto sols = solve_system(prob.ctx, prob.engine, base);
  SolverConfig permuted = base;
  permuted.multistart = base.starts();
  std::reverse(permuted.multistart.begin(), permuted.multistart.end());
  std::mt19937 shuffle_rng(3);
  std::shuffle(permuted.multistart.begin(), permuted.multistart.end(),
               shuffle_rng);
  auto sols2 = solve_system(prob.ctx, prob.engine, permuted);
  CHECK_THAT(sols2.front().m_star,
             Catch::Matchers::WithinAbs(sols.front().m_star, 1e-9));
  CHECK_THAT(sols2.front().gamma_star,
             Catch::Matchers::WithinAbs(sols.front().gamma_star, 1e-9));
}

TEST_CASE("rho inequalities at converged points") {
  for (double beta : {0.5, 10.0, 316.0}) {
    Problem prob(0.15, 0.4, beta, 1.0);
    auto sols = solve(prob.ctx);
    for (const auto& sol : sols) {
      CHECK(sol.rho2 <= sol.m_star + 1e-10);
      CHECK(sol.rho2 >= sol.m_star * sol.m_star - 1e-10);
      CHECK(sol.rho3 <= sol.rho1 + 1e-10);
      CHECK(sol.rho1 <= prob.engine.second_moment() + 1e-10);
    }
  }
}

TEST_CASE("Curie-Weiss posterior magnetization at vanishing SNR") {
  auto prior = SparsityPrior::curie_weiss(0.05, 1.5);
  ModelParams params{0.4, 1e-8, 1.0};
  ScalarContext ctx = ScalarContext::make(params, prior);
  auto sols = solve(ctx);
  // scalar reference: m = (1/2)(1 + tanh((b m + a)/2)) by bisection
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    double rhs = 0.5 * (1.0 + std::tanh(0.5 * (1.5 * mid + 0.05)));
    (rhs > mid ? lo : hi) = mid;
  }
  CHECK_THAT(sols.front().m_star,
             Catch::Matchers::WithinAbs(0.5 * (lo + hi), 1e-4));
}

TEST_CASE("symmetric double-well prior yields coexisting solutions") {
  auto prior = SparsityPrior::curie_weiss(-3.0, 6.0);
  ModelParams params{0.4, 1e-10, 1.0};
  ScalarContext ctx = ScalarContext::make(params, prior);
  auto sols = solve(ctx);
  REQUIRE(sols.size() >= 2);
  CHECK(sols.front().degenerate_flag);
  // the two leading branches straddle 1/2 (their order is free energy
  // noise at this SNR)
  double lo_m = std::min(sols[0].m_star, sols[1].m_star);
  double hi_m = std::max(sols[0].m_star, sols[1].m_star);
  CHECK(lo_m < 0.5);
  CHECK(hi_m > 0.5);
}

TEST_CASE("asymptotic MMSE values") {
  SECTION("zero SNR returns the prior per-component variance") {
    Problem prob(0.1, 0.3, 1e-8, 1.0);
    auto sols = solve(prob.ctx);
    CHECK_THAT(mmse(prob.ctx, sols.front()),
               Catch::Matchers::WithinAbs(0.1, 1e-3));
  }
  SECTION("bounded by the prior variance over a sweep grid") {
    for (double R : {0.3, 0.6}) {
      for (double beta : {1e-8, 1.0, 10.0, 100.0, 1e4}) {
        Problem prob(0.2, R, beta, 1.0);
        auto sols = solve(prob.ctx);
        double D = mmse(prob.ctx, sols.front());
        CHECK(D >= 0.0);
        CHECK(D <= 0.2 * 1.0 + 1e-9);
      }
    }
  }
  SECTION("oracle lower bound") {
    for (double beta : {1.0, 10.0, 100.0}) {
      Problem prob(0.1, 0.3, beta, 1.0);
      auto sols = solve(prob.ctx);
      CHECK(mmse(prob.ctx, sols.front()) >=
            oracle_E(0.1, prob.ctx.params) - 1e-9);
    }
  }
  SECTION("continuity along a beta sweep away from degeneracies") {
    double prev = -1.0;
    for (double db = 0.0; db <= 24.0; db += 2.0) {
      Problem prob(0.1, 0.3, std::pow(10.0, db / 10.0), 1.0);
      auto sols = solve(prob.ctx);
      REQUIRE_FALSE(sols.front().degenerate_flag);
      double D = mmse(prob.ctx, sols.front());
      if (prev >= 0.0) CHECK(D < prev);
      prev = D;
    }
  }
}

TEST_CASE("noise sensitivity") {
  SECTION("vanishes with beta") {
    Problem prob(0.1, 0.3, 1e-8, 1.0);
    auto sols = solve(prob.ctx);
    CHECK(noise_sensitivity(prob.ctx, sols.front()) < 1e-6);
  }
  SECTION("below the threshold rate") {
    // The oracle sensitivity diverges for R < m_a (see the oracle tests);
    // this system's posterior magnetization slides below R instead and
    // keeps beta*D bounded. Pin that behavior.
    auto value_at = [](double beta) {
      Problem prob(0.3, 0.2, beta, 1.0);
      auto sols = solve(prob.ctx);
      CHECK(sols.front().m_star < 0.2);
      return noise_sensitivity(prob.ctx, sols.front());
    };
    double lo = value_at(1e2), hi = value_at(1e6);
    CHECK(lo > 0.0);
    CHECK(hi > 0.0);
    CHECK(std::isfinite(hi));
  }
  SECTION("approaches a finite limit above the threshold") {
    auto prior = SparsityPrior::iid_bernoulli(0.2);
    auto rep5 = noise_sensitivity_limit(prior, 0.5, 2.0, 1e5);
    auto rep6 = noise_sensitivity_limit(prior, 0.5, 2.0, 1e6);
    CHECK(std::abs(rep6.value - rep5.value) < 0.05 * rep6.value);
    CHECK((rep6.attained == "plain" || rep6.attained == "sigma2_scaled"));
    auto below = noise_sensitivity_limit(prior, 0.1, 2.0, 1e4);
    CHECK(below.attained == "unbounded");
  }
}
