// Command-line front end: run scenarios and audit finished trajectories.
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "potflow/cli_runner.hpp"

using namespace potflow;

namespace {

void add_overrides(CLI::App* cmd, std::string& grid, std::optional<std::uint64_t>& seed,
                   std::optional<double>& stop_tol) {
  cmd->add_option("--grid", grid, "grid size NxM (rings x columns)");
  cmd->add_option("--seed", seed, "seed for sampled audits");
  cmd->add_option("--stop-tol", stop_tol, "stationary residual at which the run stops");
}

Overrides collect(const std::string& grid, const std::optional<std::uint64_t>& seed,
                  const std::optional<double>& stop_tol) {
  Overrides o;
  if (!grid.empty()) {
    auto [n, m] = parse_grid(grid);
    o.nr = n;
    o.ns = m;
  }
  o.seed = seed;
  o.stop_tol = stop_tol;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explicit parabolic flow for the second boundary value problem of optimal transport"};
  app.require_subcommand(1);

  std::string config, dir, grid;
  std::optional<std::uint64_t> seed;
  std::optional<double> stop_tol;

  auto* run = app.add_subcommand("run", "run a scenario config; output goes under $" + std::string(kOutputRootEnv));
  run->add_option("config", config, "scenario JSON")->required();
  add_overrides(run, grid, seed, stop_tol);

  auto* conv = app.add_subcommand("audit-convexity", "c- and c*-convexity of the domain pair of a config");
  conv->add_option("config", config, "scenario JSON")->required();
  add_overrides(conv, grid, seed, stop_tol);

  auto* harnack = app.add_subcommand("audit-harnack", "boundary derivative audit of the Harnack quantity");
  harnack->add_option("trajectory", dir, "run directory")->required();
  auto* km = app.add_subcommand("audit-km", "second fundamental form identity at the final snapshot");
  km->add_option("trajectory", dir, "run directory")->required();
  auto* replay = app.add_subcommand("replay-diagnostics", "recompute diagnostics from stored snapshots");
  replay->add_option("trajectory", dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ScenarioConfig cfg = load_config(config);
      apply(cfg, collect(grid, seed, stop_tol));
      return run_scenario(cfg, scenario_dir(cfg), std::cout);
    }
    if (conv->parsed()) return audit_convexity(config, collect(grid, seed, stop_tol), std::cout);
    if (harnack->parsed()) return audit_harnack(dir, std::cout);
    if (km->parsed()) return audit_km(dir, std::cout);
    if (replay->parsed()) return replay_diagnostics(dir, std::cout);
  } catch (const FlowError& e) {
    // config problems caught before a run directory exists
    std::cerr << nlohmann::json{{"error", e.name()}, {"message", e.what()}}.dump() << '\n';
    return e.kind() == ErrorKind::MissingInput ? kExitMissing : kExitInvalid;
  }
  return kExitUsage;
}
