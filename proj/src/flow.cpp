#include "potflow/flow.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace potflow {

struct FlowSolver::Fft {
  int n;
  double* in;
  fftw_complex* out;
  fftw_plan fwd, bwd;
  explicit Fft(int ns) : n(ns) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    fwd = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(n, out, in, FFTW_ESTIMATE);
  }
  ~Fft() {
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(in);
    fftw_free(out);
  }
};

FlowSolver::FlowSolver(ProblemSpec spec, std::shared_ptr<const CurvilinearGrid> grid, FlowOptions opt)
    : spec_(std::move(spec)), grid_(std::move(grid)), opt_(opt) {
  target_mass_ = integrate_domain(*spec_.target, *spec_.rho_star, spec_.quad_r, spec_.quad_phi);
  fft_ = std::make_unique<Fft>(grid_->ns());
}

FlowSolver::~FlowSolver() = default;

ScalarField quadratic_potential(const CurvilinearGrid& g, double a, double b, Vec2 l) {
  Vec2 c = g.domain().center();
  return g.sample([&](const Vec2& x) {
    Vec2 z = x - c;
    return 0.5 * (a * z.x() * z.x() + b * z.y() * z.y()) + l.dot(z);
  });
}

void FlowSolver::refresh(FlowState& s) const {
  const auto& g = *grid_;
  const auto& cost = *spec_.cost;
  int n = g.size();
  if (s.u.size() != static_cast<std::size_t>(n) || s.u.stamp != g.stamp())
    throw FlowError(ErrorKind::ConfigError, "potential does not live on the solver grid");
  s.grad.data.resize(n);
  s.T.data.resize(n);
  s.hess.data.resize(n);
  s.W.data.resize(n);
  s.theta.data.resize(n);
  s.grad.stamp = s.T.stamp = s.hess.stamp = s.W.stamp = s.theta.stamp = g.stamp();
  bool have_T = s.T.size() == static_cast<std::size_t>(n);
  s.W_positive = true;
  s.witness = -1;
  s.min_eig_W = std::numeric_limits<double>::infinity();
  s.max_trace_Winv = 0;
  s.mass = 0;
  int ni = (g.nr() - 1) * g.ns();
  s.ring_coef.assign(g.nr() - 1, 0.0);
  for (int k = 0; k < n; ++k) {
    const Vec2& x = g.x(k);
    Vec2 p;
    Mat2 H;
    g.grad_hess_at(s.u.data.data(), k, p, H);
    s.grad[k] = p;
    s.hess[k] = H;
    Vec2 y;
    if (!cost.closed_form_Y(x, p, y))
      y = invert_Y(cost, x, p, have_T && std::isfinite(s.T[k].x()) ? &s.T[k] : nullptr);
    s.T[k] = y;
    Mat2 W = H - cost.hess_xx(x, y);
    W = 0.5 * (W + W.transpose());
    s.W[k] = W;
    double e = min_eig(W);
    s.min_eig_W = std::min(s.min_eig_W, e);
    double d = W.determinant();
    if (!(e > 0) || !(d > 0)) {
      if (s.W_positive) s.witness = k;
      s.W_positive = false;
      s.theta[k] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (k < ni) {
      s.max_trace_Winv = std::max(s.max_trace_Winv, (W(0, 0) + W(1, 1)) / d);
      // (K^T W^{-1} K)_{phi phi} through the adjugate
      Vec2 kp = g.K(k).col(1);
      double a = (W(1, 1) * kp.x() * kp.x() - 2 * W(0, 1) * kp.x() * kp.y() + W(0, 0) * kp.y() * kp.y()) / d;
      double& rc = s.ring_coef[g.ring(k)];
      rc = std::max(rc, a);
    }
    double B = std::abs(cost.cross(x, y).determinant()) * (*spec_.rho)(x) / (*spec_.rho_star)(y);
    s.theta[k] = std::log(d / B);
    s.mass += g.weight(k) * d / B * (*spec_.rho)(x);
  }
  int ns = g.ns();
  s.beta.resize(ns);
  s.chi.resize(ns);
  s.max_G = 0;
  for (int j = 0; j < ns; ++j) {
    int k = g.boundary_node(j);
    const Vec2& y = s.T[k];
    s.max_G = std::max(s.max_G, std::abs(spec_.target->h(y)));
    s.beta[j] = DpY(cost, g.x(k), y).transpose() * spec_.target->grad_h(y);
    s.chi[j] = (s.W[k] * s.beta[j]).norm();
  }
}

FlowState FlowSolver::state_from(const ScalarField& u, double t) const {
  FlowState s;
  s.u = u;
  s.t = t;
  refresh(s);
  return s;
}

FlowState FlowSolver::initialize(const ScalarField& u0) const {
  FlowState s = state_from(u0, 0.0);
  const auto& g = *grid_;
  if (!s.W_positive) {
    const Vec2& x = g.x(s.witness);
    throw FlowError(ErrorKind::NotCConvex,
                    "W(u0) not positive definite at node " + std::to_string(s.witness) + " x=(" +
                        std::to_string(x.x()) + "," + std::to_string(x.y()) + ")");
  }
  if (s.max_G > opt_.init_boundary_tol)
    throw FlowError(ErrorKind::BoundaryIncompatible,
                    "max |G(x, grad u0)| = " + std::to_string(s.max_G) + " on the boundary");
  // Coverage of the target boundary by the image polygon of the source boundary.
  int ns = g.ns();
  std::vector<Vec2> poly(ns);
  double seg = 0;
  for (int j = 0; j < ns; ++j) poly[j] = s.T[g.boundary_node(j)];
  for (int j = 0; j < ns; ++j) seg = std::max(seg, (poly[(j + 1) % ns] - poly[j]).norm());
  const auto& tgt = *spec_.target;
  int m = 4 * ns;
  double haus = 0;
  for (int q = 0; q < m; ++q) {
    Vec2 b = tgt.boundary_at_angle(2 * M_PI * q / m);
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < ns; ++j) {
      Vec2 a = poly[j], d = poly[(j + 1) % ns] - a;
      double tt = d.squaredNorm() > 0 ? std::clamp((b - a).dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
      best = std::min(best, (a + tt * d - b).norm());
    }
    haus = std::max(haus, best);
  }
  double tol = std::max(seg, 1e-6);
  if (haus > tol)
    throw FlowError(ErrorKind::ImageMismatch,
                    "target boundary not covered: Hausdorff gap " + std::to_string(haus));
  enforce_boundary(s);
  refresh(s);
  if (!s.W_positive)
    throw FlowError(ErrorKind::NotCConvex, "W lost positivity after the boundary projection");
  return s;
}

ScalarField FlowSolver::interior_rhs(const FlowState& s) const {
  if (!s.W_positive)
    throw FlowError(ErrorKind::NonPositiveDet,
                    "det W <= 0 at node " + std::to_string(s.witness));
  return s.theta;
}

int FlowSolver::enforce_boundary(FlowState& s) const {
  const auto& g = *grid_;
  const auto& cost = *spec_.cost;
  const auto& tgt = *spec_.target;
  int ns = g.ns();
  double* u = s.u.data.data();
  for (int sweep = 0; sweep <= opt_.max_boundary_sweeps; ++sweep) {
    double worst = 0;
    for (int j = 0; j < ns; ++j) {
      int k = g.boundary_node(j);
      const Vec2& x = g.x(k);
      Vec2 p = g.grad_at(u, k);
      Vec2 y0, y;
      if (cost.closed_form_Y(x, p, y0))
        y = invert_Y(cost, x, p, &y0);
      else
        y = invert_Y(cost, x, p, s.T.size() == static_cast<std::size_t>(g.size()) ? &s.T[k] : nullptr);
      double G = tgt.h(y);
      worst = std::max(worst, std::abs(G));
      if (std::abs(G) <= opt_.boundary_tol) continue;
      Vec2 beta = DpY(cost, x, y).transpose() * tgt.grad_h(y);
      double bn = beta.dot(g.normal(j));
      if (std::abs(bn) < opt_.obliqueness_floor * beta.norm() || beta.norm() == 0)
        throw FlowError(ErrorKind::ObliquenessLost,
                        "beta.nu = " + std::to_string(bn) + " at boundary column " + std::to_string(j));
      double dG = beta.dot(g.K(k).col(0)) * g.dr_self_weight(k);
      u[k] -= G / dG;
    }
    if (worst <= opt_.boundary_tol) return sweep;
  }
  throw FlowError(ErrorKind::NewtonStall, "boundary Newton did not reach tolerance");
}

double FlowSolver::stable_dt(const FlowState& s) const {
  double h = grid_->h_min();
  return opt_.c_stab * h * h / s.max_trace_Winv;
}

void FlowSolver::smooth_increment(std::vector<double>& inc, const FlowState& s, double dt) const {
  const auto& g = *grid_;
  int ns = g.ns();
  double c1 = 1 - std::cos(g.dphi());
  Fft& f = *fft_;
  for (int i = 0; i < g.nr() - 1; ++i) {
    double a = s.ring_coef[i];
    // applied on every ring: skipping the weak outer rings left a seam in theta
    // where the filtered and unfiltered dynamics meet
    if (!(a > 0)) continue;
    std::copy(inc.begin() + i * ns, inc.begin() + (i + 1) * ns, f.in);
    fftw_execute(f.fwd);
    for (int m = 0; m <= ns / 2; ++m) {
      double lam = (1 - std::cos(m * g.dphi())) / c1;
      // modes whose explicit angular multiplier dt a lam stays below 1 pass
      // untouched, so smooth content near the pole keeps consistent dynamics
      double fac = 1.0 / (1.0 + std::max(0.0, dt * a * lam - 1.0)) / ns;
      f.out[m][0] *= fac;
      f.out[m][1] *= fac;
    }
    fftw_execute(f.bwd);
    std::copy(f.in, f.in + ns, inc.begin() + i * ns);
  }
}

bool FlowSolver::admissible(const FlowState& s) const {
  if (!s.W_positive) return false;
  for (std::size_t k = 0; k < s.theta.size(); ++k)
    if (!std::isfinite(s.theta[k])) return false;
  return true;
}

StepReport FlowSolver::step(FlowState& s, double dt) const {
  if (!(dt > 0)) throw FlowError(ErrorKind::ConfigError, "dt must be positive");
  const auto& g = *grid_;
  int ni = (g.nr() - 1) * g.ns();
  const std::vector<double> theta = interior_rhs(s).data;
  double bound = stable_dt(s) * (1 + 1e-12);
  StepReport rep;
  while (dt > bound) {
    if (rep.halvings == opt_.max_halvings)
      throw FlowError(ErrorKind::StepRejected, "dt exceeds the stability bound after max halvings");
    dt *= 0.5;
    ++rep.halvings;
  }
  std::vector<double> u_old = s.u.data;
  std::vector<double> inc(ni);
  for (;;) {
    for (int k = 0; k < ni; ++k) inc[k] = dt * theta[k];
    if (opt_.angular_smoothing) smooth_increment(inc, s, dt);
    for (int k = 0; k < ni; ++k) s.u[k] = u_old[k] + inc[k];
    bool ok = true;
    try {
      rep.boundary_sweeps = enforce_boundary(s);
      refresh(s);
      ok = admissible(s);
    } catch (const FlowError& e) {
      if (e.kind() == ErrorKind::ObliquenessLost) {
        s.u.data = u_old;
        refresh(s);
        throw;
      }
      ok = false;
    }
    if (ok) {
      s.t += dt;
      rep.dt = dt;
      rep.residual = 0.5 * (sup_theta(s) - inf_theta(s));
      return rep;
    }
    s.u.data = u_old;
    refresh(s);
    if (rep.halvings == opt_.max_halvings)
      throw FlowError(ErrorKind::StepRejected, "positivity or boundary failure after max halvings");
    dt *= 0.5;
    ++rep.halvings;
  }
}

double FlowSolver::sup_theta(const FlowState& s) const {
  int ni = (grid_->nr() - 1) * grid_->ns();
  return *std::max_element(s.theta.data.begin(), s.theta.data.begin() + ni);
}

double FlowSolver::inf_theta(const FlowState& s) const {
  int ni = (grid_->nr() - 1) * grid_->ns();
  return *std::min_element(s.theta.data.begin(), s.theta.data.begin() + ni);
}

double FlowSolver::mass_balance_error(const FlowState& s) const {
  return std::abs(s.mass - target_mass_);
}

double FlowSolver::alignment(const FlowState& s) const {
  const auto& g = *grid_;
  double worst = 0;
  for (int j = 0; j < g.ns(); ++j) {
    Vec2 v = s.W[g.boundary_node(j)] * s.beta[j];
    const Vec2& n = g.normal(j);
    worst = std::max(worst, std::abs(v.x() * n.y() - v.y() * n.x()) / v.norm());
  }
  return worst;
}

StepMonitor FlowSolver::monitor(const FlowState& s, double dt) const {
  StepMonitor m{};
  m.t = s.t;
  m.dt = dt;
  m.sup_theta = sup_theta(s);
  m.inf_theta = inf_theta(s);
  m.mass_balance_err = mass_balance_error(s);
  m.max_boundary_G = s.max_G;
  m.min_eig_W = s.min_eig_W;
  m.stationary_residual = 0.5 * (m.sup_theta - m.inf_theta);
  m.alignment = alignment(s);
  m.chi_min = *std::min_element(s.chi.begin(), s.chi.end());
  return m;
}

Trajectory FlowSolver::run_to_convergence(const ScalarField& u0) const {
  Trajectory tr;
  FlowState s = initialize(u0);
  tr.monitors.push_back(monitor(s, 0));
  tr.snapshots.push_back({s.t, s.u, s.theta});
  double every = opt_.snapshot_every;
  long next_snap = 1;
  for (;;) {
    double res = tr.monitors.back().stationary_residual;
    tr.final_residual = res;
    if (res <= opt_.stop_tol) {
      tr.converged = true;
      break;
    }
    if (s.t >= opt_.t_max - 1e-12 || tr.steps >= opt_.max_steps) break;
    double dt = stable_dt(s);
    double t_snap = every > 0 ? next_snap * every : std::numeric_limits<double>::infinity();
    bool hit = false;
    if (s.t + dt >= t_snap - 1e-12 * std::max(1.0, t_snap)) {
      dt = t_snap - s.t;
      hit = true;
    }
    if (s.t + dt > opt_.t_max) dt = opt_.t_max - s.t;
    StepReport rep = step(s, dt);
    ++tr.steps;
    if (rep.halvings > 0) hit = false;
    if (hit) {
      s.t = t_snap;  // remove roundoff drift
      ++next_snap;
    }
    tr.monitors.push_back(monitor(s, rep.dt));
    if (hit) tr.snapshots.push_back({s.t, s.u, s.theta});
  }
  if (tr.snapshots.back().t != s.t) tr.snapshots.push_back({s.t, s.u, s.theta});
  return tr;
}

}  // namespace potflow
