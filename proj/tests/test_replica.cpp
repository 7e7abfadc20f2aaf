#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "csmmse/oracle.hpp"
#include "csmmse/replica.hpp"
#include "csmmse/rng.hpp"

using namespace csmmse;

TEST_CASE("scalar Bernoulli-Gaussian MMSE") {
  SECTION("dense case reduces to the Gaussian-in-Gaussian closed form") {
    for (double tau2 : {0.05, 0.7, 3.0}) {
      double sigma2 = 1.4;
      CHECK_THAT(scalar_bg_mmse(tau2, 1.0, sigma2),
                 Catch::Matchers::WithinRel(
                     sigma2 * tau2 / (sigma2 + tau2), 1e-10));
    }
  }
  SECTION("no information at huge noise") {
    CHECK_THAT(scalar_bg_mmse(1e8, 0.1, 1.0),
               Catch::Matchers::WithinRel(0.1, 1e-3));
  }
  SECTION("bounded by the prior variance") {
    for (double tau2 : {1e-4, 0.05, 1.0, 50.0})
      CHECK(scalar_bg_mmse(tau2, 0.3, 2.0) <= 0.3 * 2.0 + 1e-12);
  }
  SECTION("10^7-sample Monte Carlo at tau2 = 0.05") {
    const double p = 0.1, sigma2 = 1.0, tau2 = 0.05;
    double predicted = scalar_bg_mmse(tau2, p, sigma2);
    Philox rng(13, 0);
    const int samples = 10000000;
    const double c = sigma2 / (sigma2 + tau2);
    const double logit_prior = std::log(p / (1.0 - p));
    double acc = 0.0, sq = 0.0;
    for (int i = 0; i < samples; ++i) {
      double x = rng.uniform() < p ? std::sqrt(sigma2) * rng.normal() : 0.0;
      double v = x + std::sqrt(tau2) * rng.normal();
      double z = logit_prior +
                 0.5 * v * v * sigma2 / (tau2 * (sigma2 + tau2)) -
                 0.5 * std::log1p(sigma2 / tau2);
      double xhat = logistic(z) * c * v;
      double err = (x - xhat) * (x - xhat);
      acc += err;
      sq += err * err;
    }
    double mean = acc / samples;
    double se = std::sqrt((sq / samples - mean * mean) / samples);
    CHECK(std::abs(mean - predicted) < 3.0 * se);
  }
}

TEST_CASE("state evolution fixed point") {
  SECTION("zero SNR returns the prior variance") {
    ModelParams p{0.3, 1e-6, 1.0};
    auto sols = replica_mmse(p, 0.1);
    REQUIRE_FALSE(sols.empty());
    CHECK_THAT(sols.front().D_replica, Catch::Matchers::WithinAbs(0.1, 1e-3));
  }
  SECTION("dense signal matches the oracle at p = 1") {
    for (double beta : {0.5, 10.0, 300.0}) {
      ModelParams p{0.4, beta, 1.3};
      auto sols = replica_mmse(p, 1.0);
      CHECK_THAT(sols.front().D_replica,
                 Catch::Matchers::WithinAbs(oracle_E(1.0, p), 1e-8));
    }
  }
  SECTION("nonincreasing in beta and in R") {
    double prev = 1e9;
    for (double beta : {0.1, 1.0, 10.0, 100.0}) {
      ModelParams p{0.3, beta, 1.0};
      double d = replica_mmse(p, 0.1).front().D_replica;
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
    prev = 1e9;
    for (double R : {0.1, 0.2, 0.4, 0.8}) {
      ModelParams p{R, 10.0, 1.0};
      double d = replica_mmse(p, 0.1).front().D_replica;
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
  }
  SECTION("tau2 lower bound and convergence metadata") {
    ModelParams p{0.3, 10.0, 1.0};
    auto sols = replica_mmse(p, 0.1);
    for (const auto& sol : sols) {
      CHECK(sol.converged);
      CHECK(sol.tau2 >= 1.0 / (p.beta * p.R) - 1e-12);
      CHECK(sol.D_replica >= 0.0);
      CHECK(sol.D_replica <= 0.1 * p.sigma2 + 1e-12);
    }
  }
}
