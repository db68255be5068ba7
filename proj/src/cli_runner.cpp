#include "potflow/cli_runner.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "potflow/km_geometry.hpp"

namespace potflow {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& why) {
  throw FlowError(ErrorKind::ConfigError, path + ": " + why);
}

[[noreturn]] void missing(const std::string& what) { throw FlowError(ErrorKind::MissingInput, what); }

// Reads one JSON object and remembers which keys were consumed, so leftovers
// can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  double num(const char* key, std::optional<double> def = {}) {
    const json* v = take(key, def.has_value());
    if (!v) return *def;
    if (!v->is_number()) config_error(at(key), "expected a number");
    return v->get<double>();
  }

  int integer(const char* key, std::optional<int> def = {}) {
    const json* v = take(key, def.has_value());
    if (!v) return *def;
    if (!v->is_number_integer()) config_error(at(key), "expected an integer");
    return v->get<int>();
  }

  std::uint64_t uint(const char* key, std::uint64_t def) {
    const json* v = take(key, true);
    if (!v) return def;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
      config_error(at(key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(const char* key, bool def) {
    const json* v = take(key, true);
    if (!v) return def;
    if (!v->is_boolean()) config_error(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string str(const char* key, std::optional<std::string> def = {}) {
    const json* v = take(key, def.has_value());
    if (!v) return *def;
    if (!v->is_string()) config_error(at(key), "expected a string");
    return v->get<std::string>();
  }

  Vec2 vec(const char* key, Vec2 def) {
    const json* v = take(key, true);
    if (!v) return def;
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
      config_error(at(key), "expected [x, y]");
    return Vec2((*v)[0].get<double>(), (*v)[1].get<double>());
  }

  std::optional<Reader> sub(const char* key) {
    const json* v = take(key, true);
    if (!v) return std::nullopt;
    return Reader(*v, at(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) config_error(at(it.key().c_str()), "unknown key");
  }

  std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json* take(const char* key, bool optional) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      if (!optional) config_error(at(key), "required key missing");
      return nullptr;
    }
    return &j_.at(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& path, const std::string& why) {
  if (!ok) config_error(path, why);
}

DomainConfig read_domain(Reader r, const std::string& path) {
  DomainConfig d;
  d.kind = r.str("kind", std::string("disk"));
  d.center = r.vec("center", Vec2::Zero());
  if (d.kind == "disk") {
    d.R = r.num("R", 1.0);
    check(d.R > 0, path + ".R", "must be positive");
  } else if (d.kind == "ellipse") {
    d.a = r.num("a");
    d.b = r.num("b");
    check(d.a > 0 && d.b > 0, path, "semi-axes must be positive");
  } else if (d.kind == "blob") {
    d.R = r.num("R", 1.0);
    d.eps = r.num("eps");
    d.k = r.integer("k");
    check(d.R > 0, path + ".R", "must be positive");
    check(std::abs(d.eps) < 1, path + ".eps", "must lie in (-1, 1)");
    check(d.k >= 1, path + ".k", "must be at least 1");
  } else {
    config_error(path + ".kind", "unknown domain kind '" + d.kind + "'");
  }
  r.finish();
  return d;
}

DensityConfig read_density(Reader r, const std::string& path) {
  DensityConfig d;
  d.kind = r.str("kind", std::string("uniform"));
  d.mass = r.num("mass", 1.0);
  check(d.mass > 0, path + ".mass", "must be positive");
  if (d.kind == "cosine_bump") {
    d.eps = r.num("eps");
    d.profile = r.str("profile", std::string("angular"));
    check(std::abs(d.eps) < 1, path + ".eps", "must lie in (-1, 1)");
    check(d.profile == "angular" || d.profile == "linear", path + ".profile", "angular or linear");
  } else if (d.kind != "uniform") {
    config_error(path + ".kind", "unknown density kind '" + d.kind + "'");
  }
  r.finish();
  return d;
}

InitialConfig read_initial(Reader r) {
  InitialConfig d;
  d.kind = r.str("kind", std::string("quadratic"));
  if (d.kind == "quadratic") {
    d.a = r.num("a", 2.0);
    d.b = r.num("b", 2.0);
    d.l = r.vec("l", Vec2::Zero());
  } else if (d.kind == "sqrt_dilation") {
    d.k = r.num("k");
    d.offset = r.vec("offset", Vec2::Zero());
    check(d.k != 1, "initial.k", "must differ from 1");
  } else {
    config_error("initial.kind", "unknown initial kind '" + d.kind + "'");
  }
  r.finish();
  return d;
}

json domain_json(const DomainConfig& d) {
  json j;
  j["kind"] = d.kind;
  if (d.kind == "ellipse") {
    j["a"] = d.a;
    j["b"] = d.b;
  } else {
    j["R"] = d.R;
  }
  if (d.kind == "blob") {
    j["eps"] = d.eps;
    j["k"] = d.k;
  }
  j["center"] = {d.center.x(), d.center.y()};
  return j;
}

json density_json(const DensityConfig& d) {
  json j;
  j["kind"] = d.kind;
  j["mass"] = d.mass;
  if (d.kind == "cosine_bump") {
    j["eps"] = d.eps;
    j["profile"] = d.profile;
  }
  return j;
}

json config_json(const ScenarioConfig& c) {
  json j;
  j["schema"] = kConfigSchema;
  j["name"] = c.name;
  j["cost"] = c.cost;
  j["source"] = domain_json(c.source);
  j["target"] = domain_json(c.target);
  j["source_density"] = density_json(c.rho);
  j["target_density"] = density_json(c.rho_star);
  j["grid"] = {{"nr", c.nr}, {"ns", c.ns}};
  j["time"] = {{"c_stab", c.c_stab}, {"stop_tol", c.stop_tol}, {"t_max", c.t_max},
               {"snapshot_every", c.snapshot_every}};
  json init;
  init["kind"] = c.initial.kind;
  if (c.initial.kind == "quadratic") {
    init["a"] = c.initial.a;
    init["b"] = c.initial.b;
    init["l"] = {c.initial.l.x(), c.initial.l.y()};
  } else {
    init["k"] = c.initial.k;
    init["offset"] = {c.initial.offset.x(), c.initial.offset.y()};
  }
  j["initial"] = init;
  j["audits"] = {{"harnack", c.audit_harnack}, {"km_geometry", c.audit_km}, {"convexity", c.audit_convexity}};
  if (c.fit_t1 || c.fit_t2) {
    json w = json::object();
    if (c.fit_t1) w["t1"] = *c.fit_t1;
    if (c.fit_t2) w["t2"] = *c.fit_t2;
    j["fit_window"] = w;
  }
  if (!c.output.empty()) j["output"] = c.output;
  j["seed"] = c.seed;
  return j;
}

json opt_num(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw FlowError(ErrorKind::MissingInput, "cannot write " + file.string());
  return f;
}

std::string read_text(const fs::path& file, const std::string& label) {
  std::ifstream f(file, std::ios::binary);
  if (!f) missing(label);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

constexpr char kSnapMagic[8] = {'P', 'F', 'S', 'N', 'A', 'P', '0', '1'};

void write_snapshot(const fs::path& file, const CurvilinearGrid& g, const Snapshot& sn) {
  auto f = open_out(file);
  std::int32_t nr = g.nr(), ns = g.ns();
  f.write(kSnapMagic, 8);
  f.write(reinterpret_cast<const char*>(&nr), sizeof nr);
  f.write(reinterpret_cast<const char*>(&ns), sizeof ns);
  f.write(reinterpret_cast<const char*>(&sn.t), sizeof sn.t);
  f.write(reinterpret_cast<const char*>(sn.u.data.data()), sizeof(double) * sn.u.size());
  f.write(reinterpret_cast<const char*>(sn.theta.data.data()), sizeof(double) * sn.theta.size());
}

Snapshot read_snapshot(const fs::path& file, const std::string& label, const CurvilinearGrid& g) {
  std::ifstream f(file, std::ios::binary);
  if (!f) missing("snapshot " + label);
  char magic[8];
  std::int32_t nr = 0, ns = 0;
  Snapshot sn{0, g.scalar(), g.scalar()};
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&nr), sizeof nr);
  f.read(reinterpret_cast<char*>(&ns), sizeof ns);
  f.read(reinterpret_cast<char*>(&sn.t), sizeof sn.t);
  if (!f || std::memcmp(magic, kSnapMagic, 8) != 0 || nr != g.nr() || ns != g.ns())
    missing("snapshot " + label + " is unreadable or from another grid");
  f.read(reinterpret_cast<char*>(sn.u.data.data()), sizeof(double) * sn.u.size());
  f.read(reinterpret_cast<char*>(sn.theta.data.data()), sizeof(double) * sn.theta.size());
  if (!f) missing("snapshot " + label + " is truncated");
  return sn;
}

const char* kDiagHeader = "t,dt,sup_theta,inf_theta,mass_balance_err,max_boundary_G,min_eig_W,stationary_residual";
const char* kAlignHeader = "t,alignment,chi_min";
const char* kRecordHeader =
    "t,dt,sup_theta,inf_theta,mass_balance_err,max_boundary_G,min_eig_W,stationary_residual,alignment,chi_min,"
    "u_dist,F_max,harnack_ratio";
const char* kHarnackHeader = "t,node,F,dbetaF_direct,dbetaF_closed,term1,term2,term3";

void write_monitors(const fs::path& dir, const Trajectory& tr) {
  auto d = open_out(dir / "diagnostics.csv");
  auto a = open_out(dir / "alignment.csv");
  d << kDiagHeader << '\n';
  a << kAlignHeader << '\n';
  for (const auto& m : tr.monitors) {
    d << fmt(m.t) << ',' << fmt(m.dt) << ',' << fmt(m.sup_theta) << ',' << fmt(m.inf_theta) << ','
      << fmt(m.mass_balance_err) << ',' << fmt(m.max_boundary_G) << ',' << fmt(m.min_eig_W) << ','
      << fmt(m.stationary_residual) << '\n';
    a << fmt(m.t) << ',' << fmt(m.alignment) << ',' << fmt(m.chi_min) << '\n';
  }
}

std::vector<std::vector<double>> read_csv(const fs::path& file, const std::string& label, const char* header) {
  std::ifstream f(file);
  if (!f) missing(label);
  std::string line;
  if (!std::getline(f, line) || line != header) missing(label + " has an unexpected header");
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      row.push_back(std::strtod(p, &end));
      if (*end != ',') break;
      p = end + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_records(const fs::path& file, const std::vector<DiagnosticsRecord>& rec) {
  auto f = open_out(file);
  f << kRecordHeader << '\n';
  for (const auto& r : rec) {
    if (std::isnan(r.u_dist)) continue;  // snapshot rows only
    f << fmt(r.t) << ',' << fmt(r.dt) << ',' << fmt(r.sup_theta) << ',' << fmt(r.inf_theta) << ','
      << fmt(r.mass_balance_err) << ',' << fmt(r.max_boundary_G) << ',' << fmt(r.min_eig_W) << ','
      << fmt(r.stationary_residual) << ',' << fmt(r.alignment) << ',' << fmt(r.chi_min) << ',' << fmt(r.u_dist)
      << ',' << fmt(r.F_max) << ',' << fmt(r.harnack_ratio) << '\n';
  }
}

AnalysisOptions analysis_options(const ScenarioConfig& cfg) {
  AnalysisOptions o;
  o.window.t1 = cfg.fit_t1;
  o.window.t2 = cfg.fit_t2;
  return o;
}

int exit_code_for(ErrorKind k, bool stepping) {
  if (k == ErrorKind::MissingInput) return kExitMissing;
  return stepping ? kExitRunFailed : kExitInvalid;
}

void write_error(const fs::path& dir, const FlowError& e, int code, std::ostream& log) {
  json j;
  j["error"] = e.name();
  j["message"] = e.what();
  j["exit_code"] = code;
  log << j.dump() << '\n';
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream f(dir / "error.json", std::ios::binary);
    if (f) f << j.dump(2) << '\n';
  }
}

std::unique_ptr<FlowSolver> make_solver(const ScenarioConfig& cfg) {
  ProblemSpec sp = build_spec(cfg);
  auto g = std::make_shared<CurvilinearGrid>(sp.source, cfg.nr, cfg.ns);
  return std::make_unique<FlowSolver>(sp, g, build_options(cfg));
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error("<document>", e.what());
  }
  Reader r(j, "");
  int schema = r.integer("schema");
  if (schema != kConfigSchema) config_error("schema", "unsupported schema " + std::to_string(schema));
  ScenarioConfig c;
  c.name = r.str("name");
  check(!c.name.empty() && c.name.find('/') == std::string::npos, "name", "must be a plain non-empty name");
  c.cost = r.str("cost", std::string("inner_product"));
  check(c.cost == "inner_product" || c.cost == "neg_half_sq_dist" || c.cost == "sqrt_one_plus_sq_dist", "cost",
        "unknown cost '" + c.cost + "'");
  if (auto s = r.sub("source")) c.source = read_domain(*s, "source");
  if (auto s = r.sub("target")) c.target = read_domain(*s, "target");
  if (auto s = r.sub("source_density")) c.rho = read_density(*s, "source_density");
  if (auto s = r.sub("target_density")) c.rho_star = read_density(*s, "target_density");
  if (auto s = r.sub("grid")) {
    c.nr = s->integer("nr", c.nr);
    c.ns = s->integer("ns", c.ns);
    s->finish();
  }
  check(c.nr >= 4 && c.ns >= 8 && c.ns % 2 == 0, "grid", "need nr >= 4 and an even ns >= 8");
  if (auto s = r.sub("time")) {
    c.c_stab = s->num("c_stab", c.c_stab);
    c.stop_tol = s->num("stop_tol", c.stop_tol);
    c.t_max = s->num("t_max", c.t_max);
    c.snapshot_every = s->num("snapshot_every", c.snapshot_every);
    s->finish();
  }
  check(c.c_stab > 0 && c.c_stab <= 1, "time.c_stab", "must lie in (0, 1]");
  check(c.t_max > 0, "time.t_max", "must be positive");
  check(c.snapshot_every > 0, "time.snapshot_every", "must be positive");
  if (auto s = r.sub("initial")) c.initial = read_initial(*s);
  if (auto s = r.sub("audits")) {
    c.audit_harnack = s->boolean("harnack", false);
    c.audit_km = s->boolean("km_geometry", false);
    c.audit_convexity = s->boolean("convexity", false);
    s->finish();
  }
  if (auto s = r.sub("fit_window")) {
    if (s->has("t1")) c.fit_t1 = s->num("t1");
    if (s->has("t2")) c.fit_t2 = s->num("t2");
    s->finish();
    check(!(c.fit_t1 && c.fit_t2) || *c.fit_t1 < *c.fit_t2, "fit_window", "t1 must precede t2");
  }
  c.output = r.str("output", std::string());
  c.seed = r.uint("seed", 0);
  r.finish();
  return c;
}

ScenarioConfig load_config(const fs::path& file) { return parse_config(read_text(file, "config " + file.string())); }

std::string dump_config(const ScenarioConfig& cfg) { return config_json(cfg).dump(2); }

void apply(ScenarioConfig& cfg, const Overrides& o) {
  if (o.nr) cfg.nr = *o.nr;
  if (o.ns) cfg.ns = *o.ns;
  if (o.seed) cfg.seed = *o.seed;
  if (o.stop_tol) cfg.stop_tol = *o.stop_tol;
  check(cfg.nr >= 4 && cfg.ns >= 8 && cfg.ns % 2 == 0, "--grid", "need N >= 4 and an even M >= 8");
}

std::pair<int, int> parse_grid(const std::string& s) {
  int n = 0, m = 0;
  char x = 0, extra = 0;
  if (std::sscanf(s.c_str(), "%d%c%d%c", &n, &x, &m, &extra) != 3 || (x != 'x' && x != 'X'))
    config_error("--grid", "expected NxM, got '" + s + "'");
  return {n, m};
}

ProblemSpec build_spec(const ScenarioConfig& cfg) {
  auto domain = [](const DomainConfig& d) -> DomainPtr {
    if (d.kind == "disk") return make_disk(d.R, d.center);
    if (d.kind == "ellipse") return make_ellipse(d.a, d.b, d.center);
    return make_blob(d.R, d.eps, d.k, d.center);
  };
  auto density = [](const DensityConfig& d, const Domain& dom) -> DensityPtr {
    if (d.kind == "uniform") return make_uniform(dom, d.mass);
    auto prof = d.profile == "linear" ? CosineBumpDensity::Profile::Linear : CosineBumpDensity::Profile::Angular;
    return std::make_shared<CosineBumpDensity>(dom, d.eps, d.mass, prof);
  };
  ProblemSpec sp;
  sp.source = domain(cfg.source);
  sp.target = domain(cfg.target);
  sp.cost = make_cost(cfg.cost);
  sp.rho = density(cfg.rho, *sp.source);
  sp.rho_star = density(cfg.rho_star, *sp.target);
  return sp;
}

FlowOptions build_options(const ScenarioConfig& cfg) {
  FlowOptions o;
  o.c_stab = cfg.c_stab;
  o.stop_tol = cfg.stop_tol;
  o.t_max = cfg.t_max;
  o.snapshot_every = cfg.snapshot_every;
  return o;
}

ScalarField build_initial(const ScenarioConfig& cfg, const CurvilinearGrid& g) {
  const auto& in = cfg.initial;
  if (in.kind == "quadratic") return quadratic_potential(g, in.a, in.b, in.l);
  // exact potential of x -> k x + offset for the sqrt cost
  return g.sample([&](const Vec2& x) {
    Vec2 z = (1 - in.k) * x - in.offset;
    return -std::sqrt(1 + z.squaredNorm()) / (1 - in.k);
  });
}

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path scenario_dir(const ScenarioConfig& cfg) { return output_root() / (cfg.output.empty() ? cfg.name : cfg.output); }

void write_summary(const Summary& s, const fs::path& file) {
  json j;
  j["sigma"] = opt_num(s.sigma);
  j["R2"] = opt_num(s.r2);
  j["C_harnack"] = opt_num(s.C_harnack);
  j["eps"] = opt_num(s.eps);
  j["max_mass_err"] = s.max_mass_err;
  j["max_alignment"] = s.max_alignment;
  j["stationary_residual"] = s.stationary_residual;
  j["K_measured"] = s.K_measured;
  auto f = open_out(file);
  f << j.dump(2) << '\n';
}

void write_convexity_report(const ScenarioConfig& cfg, const fs::path& file) {
  ProblemSpec sp = build_spec(cfg);
  ConvexityReport c = check_c_convexity(sp, 256, 64);
  ConvexityReport cs = check_cstar_convexity(sp, 256, 64);
  BitwistReport bw = check_bitwist(sp, 256);
  auto pt = [](const Vec2& v) { return json::array({v.x(), v.y()}); };
  json j;
  j["delta"] = c.min_value;
  j["delta_star"] = cs.min_value;
  j["c_convex"] = c.min_value > 0;
  j["cstar_convex"] = cs.min_value > 0;
  j["source_witness"] = {{"boundary", pt(c.argmin_boundary)}, {"target", pt(c.argmin_other)},
                         {"tangent", pt(c.argmin_tangent)}};
  j["target_witness"] = {{"boundary", pt(cs.argmin_boundary)}, {"source", pt(cs.argmin_other)},
                         {"tangent", pt(cs.argmin_tangent)}};
  j["bitwist_min_abs_det"] = bw.min_abs_det;
  j["bitwist_ok"] = bw.ok;
  auto f = open_out(file);
  f << j.dump(2) << '\n';
}

void write_harnack_audit(const FlowSolver& fsol, const Trajectory& tr, std::uint64_t seed, const fs::path& file) {
  const auto& g = fsol.grid();
  auto f = open_out(file);
  f << kHarnackHeader << '\n';
  HarnackSeries hs;
  try {
    hs = theta_special(fsol, tr, 1);
  } catch (const FlowError& e) {
    if (e.kind() == ErrorKind::NonPositiveTheta) return;  // stationary run: nothing to audit
    throw;
  }
  // 16 evenly spaced boundary columns from a seeded offset
  int stride = std::max(1, g.ns() / 16);
  std::mt19937_64 rng(seed);
  int offset = static_cast<int>(rng() % static_cast<std::uint64_t>(stride));
  std::vector<int> cols;
  for (int q = 0; q < std::min(16, g.ns()); ++q) cols.push_back((offset + q * stride) % g.ns());
  for (std::size_t n = 1; n < hs.s.size(); ++n)
    for (int j : cols) {
      int node = g.boundary_node(j);
      double direct = dbetaF_direct(g, hs, static_cast<int>(n), j);
      DbetaTerms c = dbetaF_closed(fsol.spec(), g, hs, static_cast<int>(n), j, DbetaMode::General);
      f << fmt(hs.t[n]) << ',' << node << ',' << fmt(hs.F[n][node]) << ',' << fmt(direct) << ',' << fmt(c.total)
        << ',' << fmt(c.curvature) << ',' << fmt(c.gradient) << ',' << fmt(c.mixed) << '\n';
    }
}

void write_km_audit(const FlowSolver& fsol, const Trajectory& tr, const fs::path& file) {
  if (tr.snapshots.empty()) missing("trajectory has no snapshots");
  const Snapshot& last = tr.snapshots.back();
  FlowState s = fsol.state_from(last.u, last.t);
  PullbackMetric pm = pullback_metric(fsol, s);
  auto f = open_out(file);
  for (int j = 0; j < fsol.grid().ns(); ++j) {
    json line;
    line["t"] = last.t;
    line["column"] = j;
    try {
      IIReport r = verify_II_identity(fsol, s, pm, j);
      line["node"] = r.node;
      line["lhs"] = r.lhs;
      line["rhs"] = r.rhs;
      line["term_source"] = r.term_source;
      line["term_target"] = r.term_target;
      line["kappa_source"] = r.kappa_source;
      line["kappa_target"] = r.kappa_target;
      line["ii_intrinsic"] = r.ii_intrinsic;
      line["ii_ambient"] = r.ii_ambient;
      line["rel_error"] = r.rel_error;
    } catch (const FlowError& e) {
      line["error"] = e.name();
      line["message"] = e.what();
    }
    f << line.dump() << '\n';
  }
}

int run_scenario(const ScenarioConfig& cfg, const fs::path& dir, std::ostream& log) {
  bool stepping = false;
  try {
    fs::create_directories(dir);
    fs::remove_all(dir / "snapshots");
    for (const char* stale : {"error.json", "summary.json", "manifest.json"}) fs::remove(dir / stale);
    fs::create_directories(dir / "snapshots");

    std::unique_ptr<FlowSolver> solver = make_solver(cfg);
    require_valid(solver->spec());
    const auto& g = solver->grid();
    ScalarField u0 = build_initial(cfg, g);
    solver->initialize(u0);  // compatibility checks before any stepping
    log << "run " << cfg.name << " on " << cfg.nr << "x" << cfg.ns << '\n';

    stepping = true;
    Trajectory tr = solver->run_to_convergence(u0);
    log << "steps " << tr.steps << ", t = " << tr.snapshots.back().t << ", residual " << tr.final_residual
        << (tr.converged ? "" : " (not converged)") << '\n';

    json snaps = json::array();
    for (std::size_t n = 0; n < tr.snapshots.size(); ++n) {
      char name[32];
      std::snprintf(name, sizeof name, "snapshots/%05zu.bin", n);
      write_snapshot(dir / name, g, tr.snapshots[n]);
      snaps.push_back({{"t", tr.snapshots[n].t}, {"file", name}});
    }
    write_monitors(dir, tr);

    Analysis a = analyze(*solver, tr, analysis_options(cfg));
    write_records(dir / "records.csv", a.records);
    write_summary(a.summary, dir / "summary.json");
    if (cfg.audit_convexity) write_convexity_report(cfg, dir / "convexity.json");
    if (cfg.audit_harnack) write_harnack_audit(*solver, tr, cfg.seed, dir / "harnack.csv");
    if (cfg.audit_km) write_km_audit(*solver, tr, dir / "km.jsonl");

    json m;
    m["schema"] = kConfigSchema;
    m["config"] = config_json(cfg);
    m["grid"] = {{"nr", g.nr()}, {"ns", g.ns()}};
    m["converged"] = tr.converged;
    m["steps"] = tr.steps;
    m["final_residual"] = tr.final_residual;
    m["snapshots"] = snaps;
    auto f = open_out(dir / "manifest.json");
    f << m.dump(2) << '\n';
    return kExitOk;
  } catch (const FlowError& e) {
    int code = exit_code_for(e.kind(), stepping);
    write_error(dir, e, code, log);
    return code;
  } catch (const fs::filesystem_error& e) {
    write_error({}, FlowError(ErrorKind::MissingInput, e.what()), kExitMissing, log);
    return kExitMissing;
  }
}

LoadedRun load_run(const fs::path& dir) {
  json m;
  try {
    m = json::parse(read_text(dir / "manifest.json", "manifest.json in " + dir.string()));
  } catch (const json::parse_error& e) {
    missing(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  LoadedRun run;
  run.cfg = parse_config(m.at("config").dump());
  run.solver = make_solver(run.cfg);
  const CurvilinearGrid& g = run.solver->grid();
  for (const auto& s : m.at("snapshots")) {
    std::string file = s.at("file").get<std::string>();
    if (!fs::exists(dir / file)) missing("snapshot " + file);
    run.tr.snapshots.push_back(read_snapshot(dir / file, file, g));
  }
  auto diag = read_csv(dir / "diagnostics.csv", "diagnostics.csv", kDiagHeader);
  auto align = read_csv(dir / "alignment.csv", "alignment.csv", kAlignHeader);
  if (diag.size() != align.size()) missing("alignment.csv does not match diagnostics.csv");
  for (std::size_t n = 0; n < diag.size(); ++n) {
    const auto& d = diag[n];
    if (d.size() != 8 || align[n].size() != 3) missing("malformed row in diagnostics.csv");
    StepMonitor mon{};
    mon.t = d[0];
    mon.dt = d[1];
    mon.sup_theta = d[2];
    mon.inf_theta = d[3];
    mon.mass_balance_err = d[4];
    mon.max_boundary_G = d[5];
    mon.min_eig_W = d[6];
    mon.stationary_residual = d[7];
    mon.alignment = align[n][1];
    mon.chi_min = align[n][2];
    run.tr.monitors.push_back(mon);
  }
  run.tr.converged = m.at("converged").get<bool>();
  run.tr.steps = m.at("steps").get<long>();
  run.tr.final_residual = m.at("final_residual").get<double>();
  return run;
}

int audit_convexity(const fs::path& config, const Overrides& o, std::ostream& log) {
  fs::path dir;
  try {
    ScenarioConfig cfg = load_config(config);
    apply(cfg, o);
    dir = scenario_dir(cfg);
    fs::create_directories(dir);
    write_convexity_report(cfg, dir / "convexity.json");
    log << read_text(dir / "convexity.json", "convexity.json");
    return kExitOk;
  } catch (const FlowError& e) {
    int code = exit_code_for(e.kind(), false);
    write_error(dir, e, code, log);
    return code;
  }
}

namespace {

template <class F>
int on_run(const fs::path& dir, std::ostream& log, F&& body) {
  try {
    LoadedRun run = load_run(dir);
    body(run, *run.solver);
    return kExitOk;
  } catch (const FlowError& e) {
    int code = exit_code_for(e.kind(), false);
    write_error({}, e, code, log);
    return code;
  }
}

}  // namespace

int audit_harnack(const fs::path& dir, std::ostream& log) {
  return on_run(dir, log, [&](const LoadedRun& run, const FlowSolver& s) {
    write_harnack_audit(s, run.tr, run.cfg.seed, dir / "harnack.csv");
    log << "wrote " << (dir / "harnack.csv").string() << '\n';
  });
}

int audit_km(const fs::path& dir, std::ostream& log) {
  return on_run(dir, log, [&](const LoadedRun& run, const FlowSolver& s) {
    write_km_audit(s, run.tr, dir / "km.jsonl");
    log << "wrote " << (dir / "km.jsonl").string() << '\n';
  });
}

int replay_diagnostics(const fs::path& dir, std::ostream& log) {
  return on_run(dir, log, [&](const LoadedRun& run, const FlowSolver& s) {
    Analysis a = analyze(s, run.tr, analysis_options(run.cfg));
    write_records(dir / "replay_records.csv", a.records);
    write_summary(a.summary, dir / "replay_summary.json");
    log << read_text(dir / "replay_summary.json", "replay_summary.json");
  });
}

}  // namespace potflow
