// Command-line driver: parameter sweeps, finite-n Monte-Carlo validation,
// random-matrix checks, replica comparison, and phase scans, all emitted
// as deterministic CSV.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "csmmse/runner.hpp"

namespace {

struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  bool strict = false;
  std::optional<int> trials;
  std::optional<int> n;
  std::optional<double> sigma2;
  std::vector<double> R;
  std::vector<double> beta;
  std::vector<double> beta_db;
  std::optional<std::string> prior_kind;
  std::optional<double> p;
  std::optional<double> cw_a;
  std::optional<double> cw_b;
  std::optional<std::string> ensemble;
  std::optional<std::string> scan_axis;
  std::vector<double> scan_range;  // from to
  std::optional<int> scan_points;
};

void attach_options(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "JSON config file");
  cmd->add_option("--seed", ov.seed, "base RNG seed");
  cmd->add_option("--output,-o", ov.output, "CSV output path (default stdout)");
  cmd->add_flag("--strict", ov.strict,
                "exit 1 when a tolerance column fails");
  cmd->add_option("--trials", ov.trials, "Monte-Carlo trials");
  cmd->add_option("--n", ov.n, "signal dimension");
  cmd->add_option("--sigma2", ov.sigma2, "variance of nonzero entries");
  cmd->add_option("--R", ov.R, "measurement rate grid");
  auto* beta_opt =
      cmd->add_option("--beta", ov.beta, "linear inverse-noise grid");
  cmd->add_option("--beta-db", ov.beta_db, "inverse-noise grid as 10 log10")
      ->excludes(beta_opt);
  cmd->add_option("--prior-kind", ov.prior_kind,
                  "iid_bernoulli|curie_weiss|tabulated");
  cmd->add_option("--p", ov.p, "Bernoulli sparsity rate");
  cmd->add_option("--cw-a", ov.cw_a, "Curie-Weiss linear coefficient");
  cmd->add_option("--cw-b", ov.cw_b, "Curie-Weiss quadratic coefficient");
  cmd->add_option("--ensemble", ov.ensemble, "gaussian|rademacher");
  cmd->add_option("--scan-axis", ov.scan_axis, "R|beta_db");
  cmd->add_option("--scan-range", ov.scan_range,
                  "phase-scan endpoints: FROM TO")
      ->expected(2);
  cmd->add_option("--scan-points", ov.scan_points, "phase-scan grid size");
}

nlohmann::json merged_config(const std::string& command, const Overrides& ov) {
  nlohmann::json j;
  if (ov.config_path) {
    std::ifstream f(*ov.config_path);
    if (!f)
      throw csmmse::ConfigError("config file '" + *ov.config_path +
                                "' cannot be opened");
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw csmmse::ConfigError(std::string("config file is not valid JSON: ") +
                                e.what());
    }
  }
  j["command"] = command;
  if (ov.seed) j["seed"] = *ov.seed;
  if (ov.output) j["output"] = *ov.output;
  if (ov.strict) j["strict"] = true;
  if (ov.trials) j["trials"] = *ov.trials;
  if (ov.n) j["n"] = *ov.n;
  if (ov.sigma2) j["sigma2"] = *ov.sigma2;
  if (!ov.R.empty()) j["R"] = ov.R;
  if (!ov.beta.empty()) {
    j["beta"] = ov.beta;
    j.erase("beta_db");
  }
  if (!ov.beta_db.empty()) {
    j["beta_db"] = ov.beta_db;
    j.erase("beta");
  }
  if (ov.prior_kind) j["prior"]["kind"] = *ov.prior_kind;
  if (ov.p) {
    if (!j.contains("prior")) j["prior"]["kind"] = "iid_bernoulli";
    j["prior"]["p"] = *ov.p;
  }
  if (ov.cw_a) j["prior"]["a"] = *ov.cw_a;
  if (ov.cw_b) j["prior"]["b"] = *ov.cw_b;
  if (ov.ensemble) j["ensemble"] = *ov.ensemble;
  if (ov.scan_axis) j["scan"]["axis"] = *ov.scan_axis;
  if (ov.scan_range.size() == 2) {
    j["scan"]["from"] = ov.scan_range[0];
    j["scan"]["to"] = ov.scan_range[1];
    if (!j["scan"].contains("points")) j["scan"]["points"] = 12;
  }
  if (ov.scan_points) j["scan"]["points"] = *ov.scan_points;
  if (j.contains("scan") && !j["scan"].contains("axis"))
    j["scan"]["axis"] = "R";
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymptotic-MMSE sweeps and validation suites"};
  app.require_subcommand(1);
  const std::vector<std::string> commands = {
      "sweep", "finite-n", "rmt-check", "replica-compare", "phase-scan"};
  std::vector<Overrides> overrides(commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i]);
    attach_options(sub, overrides[i]);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return csmmse::kExitConfigError;
  }

  try {
    std::string command;
    const Overrides* ov = nullptr;
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (app.got_subcommand(commands[i])) {
        command = commands[i];
        ov = &overrides[i];
      }
    }
    nlohmann::json j = merged_config(command, *ov);
    csmmse::RunConfig cfg = csmmse::RunConfig::from_json(j);
    int code;
    if (cfg.output.empty()) {
      code = csmmse::run_command(cfg, std::cout);
    } else {
      std::ofstream out(cfg.output);
      if (!out)
        throw csmmse::ConfigError("config field 'output': cannot open '" +
                                  cfg.output + "'");
      code = csmmse::run_command(cfg, out);
    }
    return code;
  } catch (const csmmse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return csmmse::kExitConfigError;
  } catch (const csmmse::NoConvergence& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return csmmse::kExitSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return csmmse::kExitSolverFailure;
  }
}
