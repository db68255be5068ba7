#pragma once
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "potflow/diagnostics.hpp"

namespace potflow {

inline constexpr int kConfigSchema = 1;
inline constexpr const char* kOutputRootEnv = "POTFLOW_OUTPUT_ROOT";

// Exit statuses of the runner.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitInvalid = 2,   // config or problem data rejected before stepping
  kExitRunFailed = 3, // flow error after stepping started
  kExitMissing = 4,   // a subcommand input is absent or unreadable
};

struct DomainConfig {
  std::string kind = "disk";  // disk | ellipse | blob
  double R = 1, a = 1, b = 1, eps = 0;
  int k = 3;
  Vec2 center = Vec2::Zero();
};

struct DensityConfig {
  std::string kind = "uniform";  // uniform | cosine_bump
  double mass = 1, eps = 0;
  std::string profile = "angular";  // angular | linear
};

struct InitialConfig {
  std::string kind = "quadratic";  // quadratic | sqrt_dilation
  double a = 2, b = 2;
  Vec2 l = Vec2::Zero();
  double k = 1.2;  // sqrt_dilation: x -> k x + offset
  Vec2 offset = Vec2::Zero();
};

struct ScenarioConfig {
  std::string name;
  std::string cost = "inner_product";
  DomainConfig source, target;
  DensityConfig rho, rho_star;
  int nr = 32, ns = 64;
  double c_stab = 0.4;
  double stop_tol = 1e-9, t_max = 40, snapshot_every = 0.1;
  InitialConfig initial;
  bool audit_harnack = false, audit_km = false, audit_convexity = false;
  std::optional<double> fit_t1, fit_t2;
  std::string output;  // directory under the output root; defaults to name
  std::uint64_t seed = 0;
};

// Parses a JSON document. Unknown keys, a wrong schema number or wrong value
// types raise ConfigError with the offending key path.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::filesystem::path& file);
// Canonical JSON of a config, as echoed into the manifest.
std::string dump_config(const ScenarioConfig& cfg);

struct Overrides {
  std::optional<int> nr, ns;
  std::optional<std::uint64_t> seed;
  std::optional<double> stop_tol;
};
void apply(ScenarioConfig& cfg, const Overrides& o);
// "NxM" -> (N, M)
std::pair<int, int> parse_grid(const std::string& s);

ProblemSpec build_spec(const ScenarioConfig& cfg);
FlowOptions build_options(const ScenarioConfig& cfg);
ScalarField build_initial(const ScenarioConfig& cfg, const CurvilinearGrid& g);

// $POTFLOW_OUTPUT_ROOT, or ./runs
std::filesystem::path output_root();
std::filesystem::path scenario_dir(const ScenarioConfig& cfg);

// Writes manifest.json, snapshots/, diagnostics.csv, alignment.csv, records.csv,
// summary.json and the enabled audit reports into dir. On failure writes
// error.json instead of a summary and returns the matching exit code.
int run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& dir, std::ostream& log);

struct LoadedRun {
  ScenarioConfig cfg;
  std::unique_ptr<FlowSolver> solver;  // snapshot fields live on its grid
  Trajectory tr;
};
// Reads a finished run back; MissingInput names the first absent file.
LoadedRun load_run(const std::filesystem::path& dir);

// Reports. The trajectory forms share the solver with the caller; the
// directory forms load a finished run and never step the flow.
void write_convexity_report(const ScenarioConfig& cfg, const std::filesystem::path& file);
void write_harnack_audit(const FlowSolver& fs, const Trajectory& tr, std::uint64_t seed,
                         const std::filesystem::path& file);
void write_km_audit(const FlowSolver& fs, const Trajectory& tr, const std::filesystem::path& file);
void write_summary(const Summary& s, const std::filesystem::path& file);

int audit_convexity(const std::filesystem::path& config, const Overrides& o, std::ostream& log);
int audit_harnack(const std::filesystem::path& dir, std::ostream& log);
int audit_km(const std::filesystem::path& dir, std::ostream& log);
int replay_diagnostics(const std::filesystem::path& dir, std::ostream& log);

}  // namespace potflow
