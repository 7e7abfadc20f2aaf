#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "csmmse/csv.hpp"
#include "csmmse/finite_n.hpp"
#include "csmmse/oracle.hpp"
#include "csmmse/replica.hpp"
#include "csmmse/rmt.hpp"
#include "csmmse/solver.hpp"

namespace csmmse {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exit codes shared by the CLI: 0 success, 1 tolerance failure under
// --strict, 2 config error, 3 solver failure.
enum ExitCode {
  kExitOk = 0,
  kExitToleranceFailure = 1,
  kExitConfigError = 2,
  kExitSolverFailure = 3
};

struct RunConfig {
  std::string command;

  std::string prior_kind = "iid_bernoulli";
  double p = 0.1;
  double cw_a = 0.0, cw_b = 0.0;
  std::vector<double> table_values;

  std::vector<double> R_grid;
  std::vector<double> beta_grid;  // always stored linear
  double sigma2 = 1.0;

  int n = 12;
  int trials = 0;
  std::uint64_t seed = 1;
  std::string output;
  bool strict = false;

  double tol_replica_rel = 2e-2;
  double tol_finite_band_rel = 0.15;
  double tol_rmt_rel = 2e-2;

  std::vector<std::string> checks = {"stieltjes", "shannon", "fn", "qn",
                                     "saddle"};
  double m_s = 0.3, m_r = 0.3, m_sr = 0.2;
  std::vector<int> n_list = {250, 1000, 4000};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string ensemble = "gaussian";

  std::string scan_axis = "R";
  double scan_from = 0.05, scan_to = 0.6;
  int scan_points = 12;

  std::string dump_path;
  int dump_count = 0;

  SparsityPrior make_prior() const {
    if (prior_kind == "iid_bernoulli") return SparsityPrior::iid_bernoulli(p);
    if (prior_kind == "curie_weiss")
      return SparsityPrior::curie_weiss(cw_a, cw_b);
    if (prior_kind == "tabulated") return SparsityPrior::tabulated(table_values);
    throw ConfigError("config field 'prior.kind' has unknown value '" +
                      prior_kind + "'");
  }

  MatrixEnsemble matrix_ensemble() const {
    if (ensemble == "gaussian") return MatrixEnsemble::Gaussian;
    if (ensemble == "rademacher") return MatrixEnsemble::Rademacher;
    throw ConfigError("config field 'ensemble' must be gaussian|rademacher");
  }

  std::string prior_params_string() const {
    std::ostringstream os;
    if (prior_kind == "iid_bernoulli")
      os << "p=" << format_number(p);
    else if (prior_kind == "curie_weiss")
      os << "a=" << format_number(cw_a) << ";b=" << format_number(cw_b);
    else
      os << "grid=" << table_values.size();
    return os.str();
  }

  static RunConfig from_json(const nlohmann::json& j);
};

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
  };
  try {
    if (!j.contains("command") || !j["command"].is_string())
      fail("command", "required string, one of sweep|finite-n|rmt-check|"
                      "replica-compare|phase-scan");
    cfg.command = j["command"].get<std::string>();

    if (j.contains("prior")) {
      const auto& pj = j["prior"];
      if (!pj.contains("kind")) fail("prior.kind", "required");
      cfg.prior_kind = pj["kind"].get<std::string>();
      if (cfg.prior_kind == "iid_bernoulli") {
        if (!pj.contains("p")) fail("prior.p", "required for iid_bernoulli");
        cfg.p = pj["p"].get<double>();
      } else if (cfg.prior_kind == "curie_weiss") {
        cfg.cw_a = pj.value("a", 0.0);
        cfg.cw_b = pj.value("b", 0.0);
      } else if (cfg.prior_kind == "tabulated") {
        if (!pj.contains("values"))
          fail("prior.values", "required for tabulated");
        cfg.table_values = pj["values"].get<std::vector<double>>();
      } else {
        fail("prior.kind", "unknown kind '" + cfg.prior_kind + "'");
      }
    }

    if (j.contains("R")) {
      if (j["R"].is_number())
        cfg.R_grid = {j["R"].get<double>()};
      else
        cfg.R_grid = j["R"].get<std::vector<double>>();
    }
    const bool has_db = j.contains("beta_db");
    const bool has_lin = j.contains("beta");
    if (has_db && has_lin)
      fail("beta", "give either 'beta' (linear) or 'beta_db', not both");
    if (has_db) {
      std::vector<double> db = j["beta_db"].is_number()
                                   ? std::vector<double>{j["beta_db"]
                                                             .get<double>()}
                                   : j["beta_db"].get<std::vector<double>>();
      for (double d : db) cfg.beta_grid.push_back(std::pow(10.0, d / 10.0));
    } else if (has_lin) {
      cfg.beta_grid = j["beta"].is_number()
                          ? std::vector<double>{j["beta"].get<double>()}
                          : j["beta"].get<std::vector<double>>();
    }
    cfg.sigma2 = j.value("sigma2", 1.0);
    cfg.n = j.value("n", 12);
    cfg.trials = j.value("trials", 0);
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.output = j.value("output", std::string{});
    cfg.strict = j.value("strict", false);

    if (j.contains("tolerances")) {
      const auto& t = j["tolerances"];
      cfg.tol_replica_rel = t.value("replica_rel", cfg.tol_replica_rel);
      cfg.tol_finite_band_rel =
          t.value("finite_band_rel", cfg.tol_finite_band_rel);
      cfg.tol_rmt_rel = t.value("rmt_rel", cfg.tol_rmt_rel);
    }

    if (j.contains("checks"))
      cfg.checks = j["checks"].get<std::vector<std::string>>();
    cfg.m_s = j.value("m_s", cfg.m_s);
    cfg.m_r = j.value("m_r", cfg.m_r);
    cfg.m_sr = j.value("m_sr", cfg.m_sr);
    if (j.contains("n_list")) cfg.n_list = j["n_list"].get<std::vector<int>>();
    if (j.contains("seeds"))
      cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    cfg.ensemble = j.value("ensemble", cfg.ensemble);

    if (j.contains("scan")) {
      const auto& s = j["scan"];
      cfg.scan_axis = s.value("axis", cfg.scan_axis);
      if (cfg.scan_axis != "R" && cfg.scan_axis != "beta_db")
        fail("scan.axis", "must be R or beta_db");
      if (!s.contains("from") || !s.contains("to") || !s.contains("points"))
        fail("scan", "needs from, to, points");
      cfg.scan_from = s["from"].get<double>();
      cfg.scan_to = s["to"].get<double>();
      cfg.scan_points = s["points"].get<int>();
      if (cfg.scan_points < 2) fail("scan.points", "need at least 2");
    }
    cfg.dump_path = j.value("dump_instances", std::string{});
    cfg.dump_count = j.value("dump_count", cfg.dump_path.empty() ? 0 : 1);
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (cfg.command != "sweep" && cfg.command != "finite-n" &&
      cfg.command != "rmt-check" && cfg.command != "replica-compare" &&
      cfg.command != "phase-scan")
    fail("command", "unknown command '" + cfg.command + "'");
  return cfg;
}

namespace detail {

// Runs one job per grid cell on a bounded set of workers; results land in
// cell order regardless of completion order.
template <class Result>
std::vector<Result> ordered_parallel_map(
    std::size_t count, const std::function<Result(std::size_t)>& job) {
  std::vector<Result> results(count);
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(count ? count : 1));
  std::vector<std::future<void>> futures;
  for (unsigned w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < count; i += workers) results[i] = job(i);
    }));
  }
  for (auto& f : futures) f.get();
  return results;
}

struct CellResult {
  bool solved = false;
  std::string error;
  double m_a = 0.0;
  FixedPointSolution sol;
  std::size_t n_solutions = 0;
  double D = 0.0;
  double oracle = 0.0;
  std::optional<double> d_replica;
};

inline CellResult solve_cell(const SparsityPrior& prior, double R, double beta,
                             double sigma2, bool want_replica, double p) {
  CellResult cell;
  try {
    ModelParams params{R, beta, sigma2};
    ScalarContext ctx = ScalarContext::make(params, prior);
    auto sols = solve(ctx);
    cell.sol = sols.front();
    cell.n_solutions = sols.size();
    cell.D = mmse(ctx, cell.sol);
    cell.oracle = oracle_E(prior.m_a(), params);
    cell.m_a = prior.m_a();
    if (want_replica) {
      auto rs = replica_mmse(params, p);
      cell.d_replica = rs.front().D_replica;
    }
    cell.solved = true;
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

}  // namespace detail

inline int run_sweep(const RunConfig& cfg, std::ostream& out) {
  SparsityPrior prior = cfg.make_prior();
  CsvWriter csv(out);
  csv.header({"R", "beta", "sigma2", "prior_kind", "prior_params", "m_a",
              "m_star", "gamma_star", "rho1", "rho2", "rho3", "free_energy",
              "D", "noise_sensitivity", "oracle_E", "D_replica",
              "degenerate_flag", "n_solutions", "error"});
  const bool iid = prior.kind() == SparsityPrior::Kind::IidBernoulli;
  struct Cell {
    double R, beta;
  };
  std::vector<Cell> cells;
  for (double R : cfg.R_grid)
    for (double beta : cfg.beta_grid) cells.push_back({R, beta});
  auto results = detail::ordered_parallel_map<detail::CellResult>(
      cells.size(), [&](std::size_t i) {
        return detail::solve_cell(prior, cells[i].R, cells[i].beta,
                                  cfg.sigma2, iid, cfg.p);
      });
  bool any_failed = false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = results[i];
    auto row = csv.row();
    row.add(cells[i].R).add(cells[i].beta).add(cfg.sigma2);
    row.add(prior.kind_name()).add(cfg.prior_params_string());
    if (cell.solved) {
      row.add(cell.m_a)
          .add(cell.sol.m_star)
          .add(cell.sol.gamma_star)
          .add(cell.sol.rho1)
          .add(cell.sol.rho2)
          .add(cell.sol.rho3)
          .add(cell.sol.free_energy)
          .add(cell.D)
          .add(cells[i].beta * cell.D)
          .add(cell.oracle);
      if (cell.d_replica)
        row.add(*cell.d_replica);
      else
        row.add(std::string{});
      row.add(cell.sol.degenerate_flag).add(cell.n_solutions);
      row.add(std::string{});
    } else {
      any_failed = true;
      for (int c = 0; c < 13; ++c) row.add(std::string{});
      row.add(cell.error);
    }
    row.done();
  }
  return any_failed ? kExitSolverFailure : kExitOk;
}

inline int run_replica_compare(const RunConfig& cfg, std::ostream& out) {
  SparsityPrior prior = cfg.make_prior();
  if (prior.kind() != SparsityPrior::Kind::IidBernoulli)
    throw ConfigError(
        "config field 'prior.kind': replica-compare needs iid_bernoulli");
  CsvWriter csv(out);
  csv.header({"R", "beta", "sigma2", "p", "branch", "n_branches", "tau2",
              "D_replica", "converged", "D", "rel_gap", "tol", "pass",
              "error"});
  bool any_fail = false, any_error = false;
  for (double R : cfg.R_grid) {
    for (double beta : cfg.beta_grid) {
      try {
        ModelParams params{R, beta, cfg.sigma2};
        ScalarContext ctx = ScalarContext::make(params, prior);
        auto sols = solve(ctx);
        double D = mmse(ctx, sols.front());
        auto branches = replica_mmse(params, cfg.p);
        for (std::size_t b = 0; b < branches.size(); ++b) {
          double rel = std::abs(D - branches[b].D_replica) /
                       std::max(std::abs(D), 1e-300);
          bool pass = rel <= cfg.tol_replica_rel;
          if (b == 0 && !pass) any_fail = true;
          csv.row()
              .add(R)
              .add(beta)
              .add(cfg.sigma2)
              .add(cfg.p)
              .add(b)
              .add(branches.size())
              .add(branches[b].tau2)
              .add(branches[b].D_replica)
              .add(branches[b].converged)
              .add(D)
              .add(rel)
              .add(cfg.tol_replica_rel)
              .add(pass)
              .add(std::string{})
              .done();
        }
      } catch (const std::exception& e) {
        any_error = true;
        auto row = csv.row();
        row.add(R).add(beta).add(cfg.sigma2).add(cfg.p);
        for (int c = 0; c < 9; ++c) row.add(std::string{});
        row.add(std::string(e.what()));
        row.done();
      }
    }
  }
  if (any_error) return kExitSolverFailure;
  if (cfg.strict && any_fail) return kExitToleranceFailure;
  return kExitOk;
}

inline int run_finite_n(const RunConfig& cfg, std::ostream& out) {
  SparsityPrior prior = cfg.make_prior();
  CsvWriter csv(out);
  csv.header({"n", "k", "R", "beta", "sigma2", "prior_kind", "prior_params",
              "seed", "trials", "mc_mmse", "std_error", "direct_mmse",
              "direct_std_error", "D", "abs_gap", "band", "pass", "error"});
  if (cfg.trials == 0) return kExitOk;
  if (cfg.R_grid.empty() || cfg.beta_grid.empty())
    throw ConfigError("config field 'R'/'beta': finite-n needs both");
  bool any_fail = false, any_error = false;
  for (double R : cfg.R_grid) {
    for (double beta : cfg.beta_grid) {
      ModelParams params{R, beta, cfg.sigma2};
      try {
        ScalarContext ctx = ScalarContext::make(params, prior);
        auto sols = solve(ctx);
        double D = mmse(ctx, sols.front());
        McMmseResult mc =
            mc_mmse(prior, params, cfg.n, cfg.trials, cfg.seed, false,
                    cfg.matrix_ensemble());
        double gap = std::abs(mc.estimate - D);
        double band =
            std::max(3.0 * mc.std_error, cfg.tol_finite_band_rel * D);
        bool pass = gap <= band;
        if (!pass) any_fail = true;
        int kk = static_cast<int>(std::lround(R * cfg.n));
        csv.row()
            .add(cfg.n)
            .add(kk)
            .add(R)
            .add(beta)
            .add(cfg.sigma2)
            .add(prior.kind_name())
            .add(cfg.prior_params_string())
            .add(cfg.seed)
            .add(mc.trials)
            .add(mc.estimate)
            .add(mc.std_error)
            .add(mc.direct_estimate)
            .add(mc.direct_std_error)
            .add(D)
            .add(gap)
            .add(band)
            .add(pass)
            .add(std::string{})
            .done();
        for (int t = 0; t < std::min(cfg.dump_count, cfg.trials); ++t) {
          Philox rng(cfg.seed, static_cast<std::uint64_t>(t) + 1);
          Instance inst =
              make_instance(prior, params, cfg.n, rng, cfg.matrix_ensemble());
          std::ofstream f(cfg.dump_path + std::to_string(t) + ".txt");
          write_instance(f, inst, params, cfg.seed, t);
        }
      } catch (const std::exception& e) {
        any_error = true;
        auto row = csv.row();
        row.add(cfg.n).add(static_cast<int>(std::lround(R * cfg.n)));
        row.add(R).add(beta).add(cfg.sigma2);
        row.add(prior.kind_name()).add(cfg.prior_params_string());
        for (int c = 0; c < 10; ++c) row.add(std::string{});
        row.add(std::string(e.what()));
        row.done();
      }
    }
  }
  if (any_error) return kExitSolverFailure;
  if (cfg.strict && any_fail) return kExitToleranceFailure;
  return kExitOk;
}

inline int run_rmt_check(const RunConfig& cfg, std::ostream& out) {
  SparsityPrior prior = cfg.make_prior();
  CsvWriter csv(out);
  csv.header({"check", "n", "k", "R", "beta", "sigma2", "m_s", "m_r", "m_sr",
              "seed", "ensemble", "empirical", "equivalent", "abs_gap",
              "rel_gap", "tol", "pass", "error"});
  if (cfg.R_grid.empty() || cfg.beta_grid.empty())
    throw ConfigError("config field 'R'/'beta': rmt-check needs both");
  bool any_fail = false, any_error = false;
  const double R = cfg.R_grid.front();
  MatrixEnsemble ens = cfg.matrix_ensemble();
  for (double beta : cfg.beta_grid) {
    ModelParams params{R, beta, cfg.sigma2};
    for (const std::string& check : cfg.checks) {
      for (int n : cfg.n_list) {
        for (std::uint64_t seed : cfg.seeds) {
          try {
            RmtReport rep;
            if (check == "stieltjes")
              rep = check_stieltjes(n, cfg.m_s, params, seed, ens);
            else if (check == "shannon")
              rep = check_shannon(n, cfg.m_s, params, seed, ens);
            else if (check == "fn")
              rep = check_fn(n, cfg.m_s, prior, params, seed, ens);
            else if (check == "qn")
              rep = check_qn(n, cfg.m_s, cfg.m_r, cfg.m_sr, prior, params,
                             seed, ens);
            else if (check == "saddle") {
              Philox rng(seed, 0);
              Instance inst = make_instance(prior, params, n, rng, ens);
              auto es = empirical_saddle(inst, prior, params);
              ScalarContext ctx = ScalarContext::make(params, prior);
              auto sols = solve(ctx);
              rep.check = "saddle";
              rep.n = n;
              rep.k = inst.k;
              rep.seed = seed;
              rep.empirical = es.solutions.front().m_star;
              rep.equivalent = sols.front().m_star;
              rep.abs_gap = std::abs(rep.empirical - rep.equivalent);
            } else {
              throw ConfigError("config field 'checks': unknown check '" +
                                check + "'");
            }
            double rel = rep.abs_gap / (1.0 + std::abs(rep.empirical));
            bool pass = rel <= cfg.tol_rmt_rel;
            if (!pass) any_fail = true;
            csv.row()
                .add(rep.check)
                .add(rep.n)
                .add(rep.k)
                .add(R)
                .add(beta)
                .add(cfg.sigma2)
                .add(rep.m_s)
                .add(rep.m_r)
                .add(rep.m_sr)
                .add(rep.seed)
                .add(cfg.ensemble)
                .add(rep.empirical)
                .add(rep.equivalent)
                .add(rep.abs_gap)
                .add(rel)
                .add(cfg.tol_rmt_rel)
                .add(pass)
                .add(std::string{})
                .done();
          } catch (const ConfigError&) {
            throw;
          } catch (const std::exception& e) {
            any_error = true;
            auto row = csv.row();
            row.add(check).add(n).add(0).add(R).add(beta).add(cfg.sigma2);
            for (int c = 0; c < 11; ++c) row.add(std::string{});
            row.add(std::string(e.what()));
            row.done();
          }
        }
      }
    }
  }
  if (any_error) return kExitSolverFailure;
  if (cfg.strict && any_fail) return kExitToleranceFailure;
  return kExitOk;
}

inline int run_phase_scan(const RunConfig& cfg, std::ostream& out) {
  SparsityPrior prior = cfg.make_prior();
  CsvWriter csv(out);
  csv.header({"axis", "value", "R", "beta", "sigma2", "m_star", "gamma_star",
              "free_energy", "D", "noise_sensitivity", "n_solutions",
              "degenerate_flag", "runner_up_m", "runner_up_free_energy",
              "is_crossing", "error"});
  const bool axis_R = cfg.scan_axis == "R";
  const double base_R = cfg.R_grid.empty() ? 0.3 : cfg.R_grid.front();
  const double base_beta =
      cfg.beta_grid.empty() ? 1e4 : cfg.beta_grid.front();

  struct Point {
    double value = 0.0;
    bool solved = false;
    std::string error;
    std::vector<FixedPointSolution> sols;
    double D = 0.0, beta = 0.0, R = 0.0;
    bool is_crossing = false;
  };
  auto solve_at = [&](double value, bool crossing) {
    Point pt;
    pt.value = value;
    pt.is_crossing = crossing;
    pt.R = axis_R ? value : base_R;
    pt.beta = axis_R ? base_beta : std::pow(10.0, value / 10.0);
    try {
      ModelParams params{pt.R, pt.beta, cfg.sigma2};
      ScalarContext ctx = ScalarContext::make(params, prior);
      pt.sols = solve(ctx);
      pt.D = mmse(ctx, pt.sols.front());
      pt.solved = true;
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
    return pt;
  };

  std::vector<Point> points;
  for (int i = 0; i < cfg.scan_points; ++i) {
    double value = cfg.scan_from + (cfg.scan_to - cfg.scan_from) * i /
                                       (cfg.scan_points - 1);
    points.push_back(solve_at(value, false));
  }
  // locate selected-branch changes by bisection on the scan axis
  std::vector<Point> crossings;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (!points[i].solved || !points[i + 1].solved) continue;
    double m_left = points[i].sols.front().m_star;
    double m_right = points[i + 1].sols.front().m_star;
    if (std::abs(m_left - m_right) < 0.05) continue;
    double lo = points[i].value, hi = points[i + 1].value;
    for (int it = 0; it < 40 && hi - lo > 1e-9 * std::max(1.0, std::abs(hi));
         ++it) {
      double mid = 0.5 * (lo + hi);
      Point pm = solve_at(mid, false);
      if (!pm.solved) break;
      if (std::abs(pm.sols.front().m_star - m_left) <
          std::abs(pm.sols.front().m_star - m_right))
        lo = mid;
      else
        hi = mid;
    }
    crossings.push_back(solve_at(0.5 * (lo + hi), true));
  }
  for (const auto& c : crossings) points.push_back(c);
  std::sort(points.begin(), points.end(),
            [](const Point& a, const Point& b) { return a.value < b.value; });

  bool any_error = false;
  for (const auto& pt : points) {
    auto row = csv.row();
    row.add(cfg.scan_axis).add(pt.value).add(pt.R).add(pt.beta).add(cfg.sigma2);
    if (pt.solved) {
      const auto& top = pt.sols.front();
      row.add(top.m_star)
          .add(top.gamma_star)
          .add(top.free_energy)
          .add(pt.D)
          .add(pt.beta * pt.D)
          .add(pt.sols.size())
          .add(top.degenerate_flag);
      if (pt.sols.size() > 1)
        row.add(pt.sols[1].m_star).add(pt.sols[1].free_energy);
      else
        row.add(std::string{}).add(std::string{});
      row.add(pt.is_crossing).add(std::string{});
    } else {
      any_error = true;
      for (int c = 0; c < 10; ++c) row.add(std::string{});
      row.add(pt.error);
    }
    row.done();
  }
  return any_error ? kExitSolverFailure : kExitOk;
}

inline int run_command(const RunConfig& cfg, std::ostream& out) {
  if (cfg.command == "sweep") return run_sweep(cfg, out);
  if (cfg.command == "finite-n") return run_finite_n(cfg, out);
  if (cfg.command == "rmt-check") return run_rmt_check(cfg, out);
  if (cfg.command == "replica-compare") return run_replica_compare(cfg, out);
  if (cfg.command == "phase-scan") return run_phase_scan(cfg, out);
  throw ConfigError("config field 'command': unknown command '" + cfg.command +
                    "'");
}

}  // namespace csmmse
