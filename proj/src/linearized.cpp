#include "potflow/linearized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace potflow {

LinearizedCoeffs build_coeffs(const FlowSolver& fs, const FlowState& s, double obliqueness_floor) {
  const auto& g = fs.grid();
  const auto& sp = fs.spec();
  int n = g.size();
  if (!s.W_positive)
    throw FlowError(ErrorKind::EllipticityLost, "W not positive definite at node " + std::to_string(s.witness));
  LinearizedCoeffs c;
  c.winv = {std::vector<Mat2>(n), g.stamp()};
  c.drift = {std::vector<Vec2>(n), g.stamp()};
  c.c1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    Mat2 wi = s.W[k].inverse();
    c.winv[k] = wi;
    c.c1 = std::min(c.c1, min_eig(wi));
    const Vec2& x = g.x(k);
    const Vec2& p = s.grad[k];
    Tensor3 dA = dA_dp(*sp.cost, x, p);
    Vec2 dlB = dlogB_dp(*sp.cost, *sp.rho, *sp.rho_star, x, p);
    for (int m = 0; m < 2; ++m) c.drift[k][m] = -(wi.cwiseProduct(dA[m])).sum() - dlB[m];
  }
  if (!(c.c1 > 0)) throw FlowError(ErrorKind::EllipticityLost, "w^{ij} lost positivity");
  c.beta = s.beta;
  c.c2 = std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.ns(); ++j) c.c2 = std::min(c.c2, c.beta[j].dot(g.normal(j)));
  if (c.c2 < obliqueness_floor)
    throw FlowError(ErrorKind::ObliquenessLost, "min beta.nu = " + std::to_string(c.c2));
  return c;
}

ScalarField spatial_L(const CurvilinearGrid& g, const LinearizedCoeffs& c, const ScalarField& v) {
  ScalarField out = g.scalar();
  int ni = g.boundary_node(0);
  Vec2 gr;
  Mat2 H;
  for (int k = 0; k < ni; ++k) {
    g.grad_hess_at(v.data.data(), k, gr, H);
    out[k] = c.winv[k].cwiseProduct(H).sum() + c.drift[k].dot(gr);
  }
  return out;
}

ScalarField apply_L(const CurvilinearGrid& g, const LinearizedCoeffs& c, const ScalarField& v_now,
                    const ScalarField& v_prev, double dt) {
  ScalarField out = spatial_L(g, c, v_now);
  int ni = g.boundary_node(0);
  for (int k = 0; k < ni; ++k) out[k] -= (v_now[k] - v_prev[k]) / dt;
  return out;
}

ScalarField f_evolution_residual(const CurvilinearGrid& g, const LinearizedCoeffs& c,
                                 const ScalarField& f_now, const ScalarField& f_prev, double dt) {
  ScalarField out = apply_L(g, c, f_now, f_prev, dt);
  int ni = g.boundary_node(0);
  for (int k = 0; k < ni; ++k) {
    Vec2 gr = g.grad_at(f_now.data.data(), k);
    out[k] += gr.dot(c.winv[k] * gr);
  }
  return out;
}

namespace {

// derivative at s[m] of the quadratic through (s[a], s[a+1], s[a+2])
double lagrange_slope(const std::vector<double>& s, int a, int m, double f0, double f1, double f2) {
  double x0 = s[a], x1 = s[a + 1], x2 = s[a + 2], x = s[m];
  double l0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
  double l1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
  double l2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
  return l0 * f0 + l1 * f1 + l2 * f2;
}

}  // namespace

HarnackSeries theta_special(const FlowSolver& fs, const Trajectory& tr, int k, double alpha, double floor) {
  if (k < 1) throw FlowError(ErrorKind::ConfigError, "k must be >= 1");
  const auto& g = fs.grid();
  HarnackSeries hs;
  hs.k = k;
  hs.alpha = alpha;
  hs.floor = floor;
  double t0 = k - 1;
  int n0 = -1;
  for (std::size_t n = 0; n < tr.snapshots.size(); ++n)
    if (std::abs(tr.snapshots[n].t - t0) <= 1e-9 * std::max(1.0, t0)) {
      n0 = static_cast<int>(n);
      break;
    }
  if (n0 < 0) throw FlowError(ErrorKind::MissingInput, "no snapshot at t = " + std::to_string(t0));
  const auto& th0 = tr.snapshots[n0].theta.data;
  hs.sup0 = *std::max_element(th0.begin(), th0.end());
  // theta carries roundoff of order eps |u| / h^2 from the second differences
  double umax = 0;
  for (double v : tr.snapshots[n0].u.data) umax = std::max(umax, std::abs(v));
  floor += 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, umax) / (g.h_min() * g.h_min());
  hs.floor = floor;

  std::vector<int> idx;
  for (std::size_t n = n0; n < tr.snapshots.size(); ++n) {
    const auto& sn = tr.snapshots[n];
    ScalarField Th = g.scalar();
    double lo = std::numeric_limits<double>::infinity();
    for (int q = 0; q < g.size(); ++q) {
      Th[q] = hs.sup0 - sn.theta[q];
      lo = std::min(lo, Th[q]);
    }
    if (static_cast<int>(n) > n0 && !(lo > floor)) {
      hs.truncated = true;
      hs.truncated_at = sn.t;
      break;
    }
    idx.push_back(static_cast<int>(n));
    hs.s.push_back(sn.t - t0);
    hs.t.push_back(sn.t);
    hs.Theta.push_back(std::move(Th));
  }
  int m_count = static_cast<int>(idx.size());
  if (m_count < 3)
    throw FlowError(ErrorKind::NonPositiveTheta,
                    "Theta_" + std::to_string(k) + " does not stay above the floor after s = 0");

  int n = g.size(), ns = g.ns();
  for (int m = 0; m < m_count; ++m) {
    const auto& sn = tr.snapshots[idx[m]];
    FlowState st = fs.state_from(sn.u, sn.t);
    const ScalarField& Th = hs.Theta[m];
    int a = std::clamp(m - 1, 0, m_count - 3);
    ScalarField F = g.scalar();
    VectorField gf{std::vector<Vec2>(n, Vec2::Zero()), g.stamp()};
    double fmax = -std::numeric_limits<double>::infinity();
    for (int q = 0; q < n; ++q) {
      if (!(Th[q] > floor)) continue;
      Vec2 grad = g.grad_at(Th.data.data(), q) / Th[q];
      gf[q] = grad;
      if (m == 0) continue;  // F(., 0) = 0
      double Tt = lagrange_slope(hs.s, a, m, hs.Theta[a][q], hs.Theta[a + 1][q], hs.Theta[a + 2][q]);
      double ft = Tt / Th[q];
      F[q] = hs.s[m] * (grad.dot(st.W[q].inverse() * grad) - alpha * ft);
    }
    for (int q = 0; q < n; ++q) fmax = std::max(fmax, F[q]);
    hs.F_max.push_back(fmax);
    hs.Theta_sup.push_back(*std::max_element(Th.data.begin(), Th.data.end()));
    hs.Theta_inf.push_back(*std::min_element(Th.data.begin(), Th.data.end()));
    hs.F.push_back(std::move(F));
    hs.grad_f.push_back(std::move(gf));

    BoundaryFrame fr;
    fr.p.resize(ns);
    fr.y.resize(ns);
    fr.grad_theta.resize(ns);
    fr.W.resize(ns);
    fr.beta = st.beta;
    fr.chi = st.chi;
    for (int j = 0; j < ns; ++j) {
      int b = g.boundary_node(j);
      fr.p[j] = st.grad[b];
      fr.y[j] = st.T[b];
      fr.W[j] = st.W[b];
      fr.grad_theta[j] = g.grad_at(sn.theta.data.data(), b);
    }
    hs.frames.push_back(std::move(fr));
  }
  return hs;
}

double dbetaF_direct(const CurvilinearGrid& g, const HarnackSeries& hs, int n, int j) {
  return directional_derivative_at_boundary(g, hs.F[n], j, hs.frames[n].beta[j]);
}

DbetaTerms dbetaF_closed(const ProblemSpec& spec, const CurvilinearGrid& g, const HarnackSeries& hs,
                         int n, int j, DbetaMode mode) {
  const BoundaryFrame& fr = hs.frames[n];
  int b = g.boundary_node(j);
  const Vec2& x0 = g.x(b);
  Vec2 gf = hs.grad_f[n][b];
  const Vec2& gth = fr.grad_theta[j];
  // tau = W^{-1} grad f is tangent up to discretization; keep its tangential part
  Vec2 tau = fr.W[j].inverse() * gf;
  double tt = tau.dot(g.tangent(j));
  double phi = g.phi(j);
  const auto& src = *spec.source;
  Mat2 Gpp;
  double form;
  if (mode == DbetaMode::Quadratic) {
    Gpp = spec.target->hess_h(fr.y[j]);
    form = src.curvature_at_angle(phi);
  } else {
    Gpp = G_pp(*spec.cost, *spec.target, x0, fr.p[j]);
    form = c_convexity_form(*spec.cost, src, phi, fr.y[j]);
  }
  double s = hs.s[n];
  DbetaTerms d;
  d.curvature = -s * fr.chi[j] * form * tt * tt;
  d.gradient = -s * gf.dot(Gpp * gf);
  d.mixed = s * hs.alpha * gf.dot(Gpp * gth);
  d.total = d.curvature + d.gradient + d.mixed;
  return d;
}

double tangency_defect(const CurvilinearGrid& g, const HarnackSeries& hs, int n) {
  const BoundaryFrame& fr = hs.frames[n];
  double worst = 0;
  for (int j = 0; j < g.ns(); ++j) {
    Vec2 tau = fr.W[j].inverse() * hs.grad_f[n][g.boundary_node(j)];
    Vec2 wb = fr.W[j] * fr.beta[j];
    worst = std::max(worst, std::abs(wb.dot(tau)) / wb.norm());
  }
  return worst;
}

MonotonicityReport max_principle_monitor(const std::vector<double>& sups, const std::vector<double>& infs) {
  MonotonicityReport r;
  double hi = std::numeric_limits<double>::infinity(), lo = -hi;
  for (std::size_t n = 0; n < sups.size(); ++n) {
    if (n > 0) {
      double vs = sups[n] - hi, vi = lo - infs[n];
      if (vs > r.max_violation_sup) {
        r.max_violation_sup = vs;
        r.worst_sup = static_cast<int>(n);
      }
      if (vi > r.max_violation_inf) {
        r.max_violation_inf = vi;
        r.worst_inf = static_cast<int>(n);
      }
    }
    hi = std::min(hi, sups[n]);
    lo = std::max(lo, infs[n]);
    r.running_max.push_back(hi);
    r.running_min.push_back(lo);
  }
  return r;
}

SublinearFit fit_sublinearity(const std::vector<double>& t, const std::vector<double>& Fmax) {
  SublinearFit f;
  if (t.empty()) return f;
  double T = t.back(), sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t n = 0; n < t.size(); ++n) {
    if (t[n] < 0.5 * T) continue;
    sx += t[n];
    sy += Fmax[n];
    sxx += t[n] * t[n];
    sxy += t[n] * Fmax[n];
    ++m;
  }
  double den = m * sxx - sx * sx;
  if (m >= 2 && den > 0) f.C2 = std::max(0.0, (m * sxy - sx * sy) / den);
  f.C1 = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < t.size(); ++n) f.C1 = std::max(f.C1, Fmax[n] - f.C2 * t[n]);
  return f;
}

}  // namespace potflow
