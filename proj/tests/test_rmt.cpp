#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "csmmse/rmt.hpp"

using namespace csmmse;

namespace {
SparsityPrior bern(double p) { return SparsityPrior::iid_bernoulli(p); }
}  // namespace

TEST_CASE("Stieltjes deterministic equivalent") {
  SECTION("empty pattern") {
    ModelParams params{0.5, 10.0, 1.0};
    RmtReport rep = check_stieltjes(400, 0.0, params, 1);
    CHECK(rep.empirical == 0.0);
    CHECK(rep.equivalent == 0.0);
  }
  SECTION("zero-SNR limit is exact") {
    ModelParams params{0.5, 1e-8, 1.0};
    RmtReport rep = check_stieltjes(600, 0.3, params, 2);
    CHECK(std::abs(rep.empirical - params.sigma2 * rep.m_s) < 1e-6);
    CHECK(std::abs(rep.equivalent - params.sigma2 * rep.m_s) < 1e-7);
  }
  SECTION("n = 2000 concentration on three seeds") {
    ModelParams params{0.5, 10.0, 1.0};
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      RmtReport rep = check_stieltjes(2000, 0.3, params, seed);
      CHECK(rep.abs_gap < 5e-3);
    }
  }
  SECTION("Rademacher ensemble obeys the same equivalent") {
    ModelParams params{0.5, 10.0, 1.0};
    RmtReport rep = check_stieltjes(2000, 0.3, params, 7,
                                    MatrixEnsemble::Rademacher);
    CHECK(rep.abs_gap < 5e-3);
  }
  SECTION("gap decays with n") {
    ModelParams params{0.5, 10.0, 1.0};
    auto median_gap = [&](int n) {
      std::vector<double> gaps;
      for (std::uint64_t seed = 1; seed <= 5; ++seed)
        gaps.push_back(check_stieltjes(n, 0.3, params, seed).abs_gap);
      std::sort(gaps.begin(), gaps.end());
      return gaps[2];
    };
    double g250 = median_gap(250);
    double g1000 = median_gap(1000);
    CHECK(g1000 < g250);
  }
}

TEST_CASE("Shannon deterministic equivalent") {
  ModelParams params{0.3, 10.0, 1.0};
  SECTION("n = 2000 relative accuracy") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      RmtReport rep = check_shannon(2000, 0.3, params, seed);
      CHECK(rep.abs_gap / std::abs(rep.equivalent) < 0.02);
    }
  }
  SECTION("zero SNR pushes both sides to zero") {
    ModelParams weak{0.3, 1e-8, 1.0};
    RmtReport rep = check_shannon(500, 0.3, weak, 4);
    CHECK(std::abs(rep.empirical) < 1e-5);
    CHECK(std::abs(rep.equivalent) < 1e-5);
  }
}

TEST_CASE("f_n data-term equivalent") {
  auto prior = bern(0.1);
  SECTION("n = 2000 at the reference operating point") {
    ModelParams params{0.5, 5.0, 1.0};
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      RmtReport rep = check_fn(2000, 0.2, prior, params, seed);
      CHECK(rep.abs_gap < 1e-2 * (1.0 + std::abs(rep.empirical)));
    }
  }
  SECTION("deterministic given the seed") {
    ModelParams params{0.5, 5.0, 1.0};
    RmtReport a = check_fn(400, 0.2, prior, params, 11);
    RmtReport b = check_fn(400, 0.2, prior, params, 11);
    CHECK(a.empirical == b.empirical);
    CHECK(a.equivalent == b.equivalent);
  }
}

TEST_CASE("q_n cross-term equivalent") {
  auto prior = bern(0.1);
  ModelParams params{0.5, 5.0, 1.0};
  SECTION("disjoint overlap makes both sides vanish") {
    RmtReport rep = check_qn(800, 0.3, 0.3, 0.0, prior, params, 3);
    CHECK(rep.empirical == 0.0);
    CHECK(rep.equivalent == 0.0);
  }
  SECTION("infeasible triples are rejected") {
    CHECK_THROWS_AS(check_qn(100, 0.2, 0.2, 0.3, prior, params, 1),
                    std::domain_error);
    CHECK_THROWS_AS(check_qn(100, 0.7, 0.7, 0.1, prior, params, 1),
                    std::domain_error);
  }
  SECTION("n = 2000 concentration") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      RmtReport rep = check_qn(2000, 0.3, 0.3, 0.2, prior, params, seed);
      CHECK(rep.abs_gap < 1e-2 * (1.0 + std::abs(rep.empirical)));
    }
  }
}

TEST_CASE("column-projection second moment matches the mixture") {
  auto prior = bern(0.1);
  ModelParams params{0.3, 10.0, 1.0};
  ScalarContext ctx = ScalarContext::make(params, prior);
  double target = ctx.p_y +
                  prior.m_a() * params.R * params.R * params.sigma2;
  std::vector<double> means;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Philox rng(seed, 0);
    Instance inst = make_instance(prior, params, 3000, rng);
    double acc = 0.0;
    for (int i = 0; i < inst.n; ++i) {
      double d = inst.y.dot(inst.H.col(i));
      acc += d * d;
    }
    means.push_back(acc / inst.n);
  }
  double mean = 0.0;
  for (double v : means) mean += v;
  mean /= means.size();
  double var = 0.0;
  for (double v : means) var += (v - mean) * (v - mean);
  var /= (means.size() - 1);
  double se = std::sqrt(var / means.size());
  CHECK(std::abs(mean - target) < 3.0 * se + 0.01 * target);
}

TEST_CASE("empirical saddle point") {
  auto prior = bern(0.1);
  ModelParams params{0.3, 10.0, 1.0};
  Philox rng(17, 0);
  Instance inst = make_instance(prior, params, 4000, rng);
  EmpiricalSaddleResult es = empirical_saddle(inst, prior, params);
  const auto& sol = es.solutions.front();
  SECTION("magnetization lands in the unit interval") {
    CHECK(sol.m_star >= 0.0);
    CHECK(sol.m_star <= 1.0);
  }
  SECTION("matches the mixture-quadrature solution") {
    ScalarContext ctx = ScalarContext::make(params, prior);
    auto asym = solve(ctx);
    CHECK(std::abs(sol.m_star - asym.front().m_star) < 5e-2);
  }
  SECTION("empirical rho inequalities") {
    CHECK(sol.rho2 <= sol.m_star + 1e-10);
    CHECK(sol.rho3 <= sol.rho1 + 1e-10);
  }
}
