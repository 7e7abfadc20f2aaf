#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "csmmse/oracle.hpp"
#include "csmmse/rng.hpp"

using namespace csmmse;

TEST_CASE("oracle closed form") {
  SECTION("m = 0 gives zero error") {
    ModelParams p{0.4, 3.0, 1.2};
    CHECK(oracle_E(0.0, p) == 0.0);
  }
  SECTION("fixed-point residual of the defining equation") {
    Philox rng(9, 0);
    for (int i = 0; i < 200; ++i) {
      ModelParams p;
      p.R = 0.05 + 0.9 * rng.uniform();
      p.beta = std::pow(10.0, -2.0 + 6.0 * rng.uniform());
      p.sigma2 = std::pow(10.0, -1.0 + 2.0 * rng.uniform());
      double m = rng.uniform();
      double E = oracle_E(m, p);
      double rhs = p.sigma2 * m /
                   (1.0 + p.R * p.beta * p.sigma2 / (1.0 + p.beta * E));
      CHECK(std::abs(E - rhs) < 1e-12);
    }
  }
  SECTION("large-beta expansion") {
    ModelParams p{0.5, 1e6, 1.0};
    double scaled = p.beta * oracle_E(0.2, p);
    CHECK_THAT(scaled, Catch::Matchers::WithinRel(0.2 / 0.3, 1e-2));
  }
  SECTION("monotone in m and in 1/beta") {
    ModelParams p{0.4, 7.0, 1.0};
    double prev = -1.0;
    for (double m = 0.0; m <= 1.0; m += 0.02) {
      double e = oracle_E(m, p);
      CHECK(e >= prev);
      prev = e;
    }
    double prev_b = 0.0;
    for (double beta : {1e4, 1e2, 1.0, 1e-2}) {
      ModelParams q{0.4, beta, 1.0};
      double e = oracle_E(0.3, q);
      CHECK(e >= prev_b);
      prev_b = e;
    }
  }
}

TEST_CASE("oracle threshold at the a-priori magnetization") {
  CHECK_THAT(oracle_threshold(SparsityPrior::iid_bernoulli(0.1)),
             Catch::Matchers::WithinAbs(0.1, 1e-9));
  CHECK_THAT(oracle_threshold(
                 SparsityPrior::tabulated(std::vector<double>(8, 0.0))),
             Catch::Matchers::WithinAbs(0.5, 1e-9));
  // boundedness of beta * E(m_a) above the threshold, divergence below
  double ma = 0.1;
  ModelParams above{2.0 * ma, 1e6, 1.0};
  ModelParams below{0.5 * ma, 1e6, 1.0};
  CHECK(above.beta * oracle_E(ma, above) < 10.0);
  CHECK(below.beta * oracle_E(ma, below) > 1e3);
}
