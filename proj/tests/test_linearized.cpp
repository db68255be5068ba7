#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "potflow/linearized.hpp"

using namespace potflow;

namespace {

ProblemSpec disk_pair(double eps = 0.0) {
  ProblemSpec sp;
  sp.source = make_disk(1);
  sp.target = make_disk(2);
  sp.cost = make_cost("inner_product");
  sp.rho = make_uniform(*sp.source);
  if (eps == 0.0)
    sp.rho_star = make_uniform(*sp.target);
  else
    sp.rho_star = std::make_shared<CosineBumpDensity>(*sp.target, eps, 1.0, CosineBumpDensity::Profile::Linear);
  return sp;
}

double max_interior_abs(const CurvilinearGrid& g, const ScalarField& v) {
  double m = 0;
  for (int k = 0; k < g.boundary_node(0); ++k) m = std::max(m, std::abs(v[k]));
  return m;
}

// one shared perturbed run; the Harnack tests read it
struct PerturbedRun {
  std::shared_ptr<CurvilinearGrid> g;
  ProblemSpec sp;
  std::unique_ptr<FlowSolver> fs;
  Trajectory tr;
  PerturbedRun() {
    g = std::make_shared<CurvilinearGrid>(make_disk(1), 16, 32);
    sp = disk_pair(0.1);
    FlowOptions o;
    o.t_max = 3;
    o.stop_tol = 1e-12;
    o.snapshot_every = 0.1;
    fs = std::make_unique<FlowSolver>(sp, g, o);
    tr = fs->run_to_convergence(quadratic_potential(*g, 2, 2));
  }
};

const PerturbedRun& perturbed() {
  static PerturbedRun r;
  return r;
}

}  // namespace

TEST_CASE("coefficients on the stationary disk pair") {
  auto g = std::make_shared<CurvilinearGrid>(make_disk(1), 12, 24);
  FlowSolver fs(disk_pair(), g);
  FlowState s = fs.initialize(quadratic_potential(*g, 2, 2));
  LinearizedCoeffs c = build_coeffs(fs, s);
  CHECK(c.c1 == doctest::Approx(0.5).epsilon(1e-8));
  for (int k = 0; k < g->size(); k += 5) {
    CHECK((c.winv[k] - 0.5 * Mat2::Identity()).norm() <= 1e-8);
    CHECK(c.drift[k].norm() <= 1e-8);
  }
  // beta = grad h*(Du) = x on the unit circle, so c2 = 1
  CHECK(c.c2 == doctest::Approx(1).epsilon(1e-8));
}

TEST_CASE("inner-product drift is the target log-density gradient") {
  auto g = std::make_shared<CurvilinearGrid>(make_disk(1), 12, 24);
  ProblemSpec sp = disk_pair(0.2);
  FlowSolver fs(sp, g);
  FlowState s = fs.initialize(quadratic_potential(*g, 2, 2));
  LinearizedCoeffs c = build_coeffs(fs, s);
  for (int k = 0; k < g->size(); k += 3) {
    Vec2 p = s.grad[k];
    Vec2 expect = sp.rho_star->grad(p) / (*sp.rho_star)(p);
    CHECK((c.drift[k] - expect).norm() <= 1e-6);
  }
  // c2 cross-checked against a direct evaluation of grad h*(Du) . nu
  double c2 = 1e300;
  for (int j = 0; j < g->ns(); ++j)
    c2 = std::min(c2, sp.target->grad_h(s.grad[g->boundary_node(j)]).dot(g->normal(j)));
  CHECK(c.c2 == doctest::Approx(c2).epsilon(1e-10));
}

TEST_CASE("build_coeffs errors") {
  auto g = std::make_shared<CurvilinearGrid>(make_disk(1), 12, 24);
  FlowSolver fs(disk_pair(), g);
  FlowState bad = fs.state_from(g->sample([](const Vec2& x) { return -x.squaredNorm(); }), 0);
  CHECK_THROWS_AS(build_coeffs(fs, bad), FlowError);
  try {
    build_coeffs(fs, bad);
  } catch (const FlowError& e) {
    CHECK(e.kind() == ErrorKind::EllipticityLost);
  }
  FlowState s = fs.initialize(quadratic_potential(*g, 2, 2));
  try {
    build_coeffs(fs, s, 1.5);
    FAIL("expected ObliquenessLost");
  } catch (const FlowError& e) {
    CHECK(e.kind() == ErrorKind::ObliquenessLost);
  }
}

TEST_CASE("apply_L on trivial fields") {
  auto g = std::make_shared<CurvilinearGrid>(make_disk(1), 12, 24);
  FlowSolver fs(disk_pair(0.1), g);
  FlowState s = fs.initialize(quadratic_potential(*g, 2, 2));
  LinearizedCoeffs c = build_coeffs(fs, s);
  ScalarField one = g->sample([](const Vec2&) { return 3.0; });
  CHECK(max_interior_abs(*g, apply_L(*g, c, one, one, 0.01)) == 0.0);
  ScalarField t1 = g->sample([](const Vec2&) { return 1.25; });
  ScalarField t0 = g->sample([](const Vec2&) { return 1.0; });
  ScalarField r = apply_L(*g, c, t1, t0, 0.25);
  for (int k = 0; k < g->boundary_node(0); ++k) CHECK(r[k] == doctest::Approx(-1).epsilon(1e-14));
}

TEST_CASE("theta solves the linearized equation in the bulk") {
  // Centered difference across snapshots 0.05 apart. The pole rings (strongly
  // filtered angular modes) and the last interior ring (whose stencil reads the
  // one-sided boundary theta) are excluded; see the README.
  double res[2];
  int i = 0;
  for (int nr : {12, 24}) {
    auto g = std::make_shared<CurvilinearGrid>(make_disk(1), nr, 2 * nr);
    FlowOptions o;
    o.t_max = 0.5;
    o.stop_tol = 0;
    o.snapshot_every = 0.05;
    FlowSolver fs(disk_pair(0.1), g, o);
    Trajectory tr = fs.run_to_convergence(quadratic_potential(*g, 2, 2));
    const auto& now = tr.snapshots[8];
    const auto& prev = tr.snapshots[7];
    const auto& next = tr.snapshots[9];
    LinearizedCoeffs c = build_coeffs(fs, fs.state_from(now.u, now.t));
    ScalarField r = spatial_L(*g, c, now.theta);
    double worst = 0, scale = 0;
    for (int k = 0; k < g->boundary_node(0); ++k) {
      double dt = (next.theta[k] - prev.theta[k]) / (next.t - prev.t);
      scale = std::max(scale, std::abs(dt));
      double rad = g->x(k).norm();
      if (rad >= 0.25 && rad <= 0.85) worst = std::max(worst, std::abs(r[k] - dt));
    }
    res[i++] = worst / scale;
  }
  MESSAGE("relative bulk L theta residual: " << res[0] << " -> " << res[1]);
  CHECK(res[0] <= 0.02);
  CHECK(res[1] <= res[0]);
}

TEST_CASE("stationary trajectory has no special solution") {
  auto g = std::make_shared<CurvilinearGrid>(make_disk(1), 12, 24);
  FlowOptions o;
  o.t_max = 1;
  o.stop_tol = 0;  // keep stepping so snapshots exist
  o.snapshot_every = 0.25;
  FlowSolver fs(disk_pair(), g, o);
  Trajectory tr = fs.run_to_convergence(quadratic_potential(*g, 2, 2));
  REQUIRE(tr.snapshots.size() >= 3);
  try {
    theta_special(fs, tr, 1);
    FAIL("expected NonPositiveTheta");
  } catch (const FlowError& e) {
    CHECK(e.kind() == ErrorKind::NonPositiveTheta);
  }
  std::vector<double> sups, infs;
  for (const auto& m : tr.monitors) {
    sups.push_back(m.sup_theta);
    infs.push_back(m.inf_theta);
  }
  MonotonicityReport rep = max_principle_monitor(sups, infs);
  CHECK(rep.max_violation_sup <= 1e-12);
  CHECK(rep.max_violation_inf <= 1e-12);
}

TEST_CASE("special solution on a perturbed run") {
  const auto& run = perturbed();
  const auto& g = *run.g;
  HarnackSeries hs = theta_special(*run.fs, run.tr, 1);
  REQUIRE(hs.s.size() >= 10);
  CHECK(hs.s[0] == 0.0);
  for (const auto& Th : hs.Theta)
    for (double v : Th.data) CHECK(v >= 0.0);
  for (double v : hs.F[0].data) CHECK(v == 0.0);
  for (std::size_t n = 1; n < hs.F.size(); ++n)
    for (double v : hs.F[n].data) CHECK(std::isfinite(v));

  // Theta_2 starts at t = 1
  HarnackSeries h2 = theta_special(*run.fs, run.tr, 2);
  CHECK(h2.t[0] == doctest::Approx(1.0));

  // both boundary evaluators, inner-product cost
  int n = static_cast<int>(hs.s.size()) / 2;
  double worst_gap = 0, worst_sign = -1e300;
  for (int j = 0; j < g.ns(); ++j) {
    DbetaTerms q = dbetaF_closed(run.sp, g, hs, n, j, DbetaMode::Quadratic);
    DbetaTerms gm = dbetaF_closed(run.sp, g, hs, n, j, DbetaMode::General);
    worst_gap = std::max(worst_gap, std::abs(q.total - gm.total));
    CHECK(q.curvature <= 0);
    CHECK(q.gradient <= 0);
    CHECK(q.mixed <= 1e-12);
    worst_sign = std::max(worst_sign, q.total);
  }
  CHECK(worst_gap <= 1e-10);
  CHECK(worst_sign <= 0);
  CHECK(tangency_defect(g, hs, n) <= 0.1);
  for (int j = 0; j < g.ns(); j += 4) CHECK(std::isfinite(dbetaF_direct(g, hs, n, j)));
}

TEST_CASE("vanishing gradient gives a zero boundary derivative") {
  const auto& run = perturbed();
  HarnackSeries hs = theta_special(*run.fs, run.tr, 1);
  int n = 3, j = 5;
  int b = run.g->boundary_node(j);
  hs.grad_f[n][b] = Vec2::Zero();
  for (auto mode : {DbetaMode::Quadratic, DbetaMode::General}) {
    DbetaTerms d = dbetaF_closed(run.sp, *run.g, hs, n, j, mode);
    CHECK(d.total == 0.0);
  }
}

TEST_CASE("monotonicity monitor") {
  std::vector<double> sups{1.0, 0.8, 0.5, 0.5, 0.2}, infs{-1.0, -0.7, -0.4, -0.3, -0.1};
  MonotonicityReport ok = max_principle_monitor(sups, infs);
  CHECK(ok.max_violation_sup == 0.0);
  CHECK(ok.max_violation_inf == 0.0);
  CHECK(ok.running_max.back() == 0.2);
  std::reverse(sups.begin(), sups.end());
  std::reverse(infs.begin(), infs.end());
  MonotonicityReport bad = max_principle_monitor(sups, infs);
  CHECK(bad.max_violation_sup == doctest::Approx(0.8));
  CHECK(bad.max_violation_inf == doctest::Approx(0.9));
  CHECK(bad.worst_sup == 4);
}

TEST_CASE("sublinearity fit") {
  std::vector<double> t, F;
  for (int n = 0; n <= 40; ++n) {
    t.push_back(0.1 * n);
    F.push_back(0.5 + 0.25 * t.back());
  }
  SublinearFit f = fit_sublinearity(t, F);
  CHECK(f.C2 == doctest::Approx(0.25));
  CHECK(f.C1 == doctest::Approx(0.5));
  for (double& v : F) v = -1.0;
  f = fit_sublinearity(t, F);
  CHECK(f.C2 == 0.0);
  CHECK(f.C1 == -1.0);
}
