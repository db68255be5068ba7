#include "potflow/km_geometry.hpp"

#include <cmath>
#include <numbers>

namespace potflow {

namespace {

double sgn(const CostModel& c) { return c.convention == SignConvention::Maximization ? 1.0 : -1.0; }

Mat2 cross_max(const CostModel& c, const Vec2& x, const Vec2& y) { return sgn(c) * c.cross(x, y); }

Tensor3 zero3() {
  Tensor3 t;
  t[0].setZero();
  t[1].setZero();
  return t;
}

Vec4 join(const Vec2& a, const Vec2& b) { return Vec4(a.x(), a.y(), b.x(), b.y()); }

// Christoffel symbols [m](i,j) from the metric and dw[k] = d_k w
Tensor3 christoffel2(const Mat2& w, const Mat2 dw[2]) {
  Mat2 wi = w.inverse();
  Tensor3 low;  // [l](i,j) = 1/2 (d_i w_jl + d_j w_il - d_l w_ij)
  for (int l = 0; l < 2; ++l)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) low[l](i, j) = 0.5 * (dw[i](j, l) + dw[j](i, l) - dw[l](i, j));
  Tensor3 g = zero3();
  for (int m = 0; m < 2; ++m)
    for (int l = 0; l < 2; ++l) g[m] += wi(m, l) * low[l];
  return g;
}

}  // namespace

Mat4 km_metric(const CostModel& c, const Vec2& x, const Vec2& y) {
  Mat2 C = cross_max(c, x, y);
  Mat4 h = Mat4::Zero();
  h.block<2, 2>(0, 2) = 0.5 * C;
  h.block<2, 2>(2, 0) = 0.5 * C.transpose();
  return h;
}

std::array<Mat4, 4> km_christoffel(const CostModel& c, const Vec2& x, const Vec2& y, double hfd) {
  Vec4 X = join(x, y);
  std::array<Mat4, 4> dh;
  for (int a = 0; a < 4; ++a) {
    Vec4 e = Vec4::Zero();
    e[a] = hfd;
    Vec4 p = X + e, m = X - e;
    dh[a] = (km_metric(c, p.head<2>(), p.tail<2>()) - km_metric(c, m.head<2>(), m.tail<2>())) / (2 * hfd);
  }
  Mat4 hi = km_metric(c, x, y).inverse();
  std::array<Mat4, 4> G;
  for (int d = 0; d < 4; ++d) {
    G[d].setZero();
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int e = 0; e < 4; ++e) G[d](a, b) += 0.5 * hi(d, e) * (dh[a](e, b) + dh[b](e, a) - dh[e](a, b));
  }
  return G;
}

double phi_jacobian_defect(const CostModel& c, const Vec2& x0, const Vec2& y0, double hfd) {
  double s = sgn(c);
  auto Phi = [&](const Vec4& X) {
    return join(s * c.grad_x(x0, X.tail<2>()), s * c.grad_y(X.head<2>(), y0));
  };
  Vec4 X = join(x0, y0);
  Mat4 J;
  for (int a = 0; a < 4; ++a) {
    Vec4 e = Vec4::Zero();
    e[a] = hfd;
    J.col(a) = (Phi(X + e) - Phi(X - e)) / (2 * hfd);
  }
  return (J - 2 * km_metric(c, x0, y0)).cwiseAbs().maxCoeff();
}

PullbackMetric pullback_metric(const FlowSolver& fs, const FlowState& s) {
  const auto& g = fs.grid();
  const auto& sp = fs.spec();
  const CostModel& cost = *sp.cost;
  int n = g.size();
  PullbackMetric pm;
  pm.W = s.W;
  pm.w = {std::vector<Mat2>(n), g.stamp()};
  pm.gamma.assign(n, zero3());
  pm.phi = g.scalar();
  pm.psi_base = g.scalar();

  std::vector<double> comp[5];  // W00, W01, W11, T0, T1
  for (auto& v : comp) v.resize(n);
  for (int k = 0; k < n; ++k) {
    comp[0][k] = s.W[k](0, 0);
    comp[1][k] = s.W[k](0, 1);
    comp[2][k] = s.W[k](1, 1);
    comp[3][k] = s.T[k].x();
    comp[4][k] = s.T[k].y();
  }
  for (int k = 0; k < n; ++k) {
    Vec2 d[5];
    for (int q = 0; q < 5; ++q) d[q] = g.grad_at(comp[q].data(), k);
    Mat2 dw[2];
    for (int i = 0; i < 2; ++i) dw[i] << d[0][i], d[1][i], d[1][i], d[2][i];
    pm.gamma[k] = christoffel2(s.W[k], dw);

    Mat2 DT;
    DT.row(0) = d[3].transpose();
    DT.row(1) = d[4].transpose();
    Mat2 C = cross_max(cost, g.x(k), s.T[k]);
    Mat2 CD = C * DT;
    pm.w[k] = 0.5 * (CD + CD.transpose());
    pm.max_w_defect = std::max(pm.max_w_defect, (pm.w[k] - s.W[k]).cwiseAbs().maxCoeff());

    // det DT = det W / det C through the chain rule DT = C^{-1} W
    double dC = std::abs(C.determinant());
    double dDT = std::abs(s.W[k].determinant()) / dC;
    double rs = (*sp.rho_star)(s.T[k]);
    pm.phi[k] = 0.5 * std::log(dC / (rs * rs * dDT));
    pm.psi_base[k] = rs * rs * dDT / dC;
  }
  return pm;
}

double ii_w_curve(const Mat2& w, const Tensor3& gamma, const Vec2& g1, const Vec2& g2, const Vec2& beta) {
  double bw = std::sqrt(beta.dot(w * beta));
  double vw = g1.dot(w * g1);
  if (!(bw > 0) || !(vw > 0)) throw FlowError(ErrorKind::MetricDegenerate, "zero w-length vector");
  Vec2 acc = g2;
  for (int m = 0; m < 2; ++m) acc[m] += g1.dot(gamma[m] * g1);
  return -(beta / bw).dot(w * acc) / vw;
}

IIw second_fundamental_form_w(const FlowSolver& fs, const FlowState& s, const PullbackMetric& pm, int j,
                              double hfd) {
  const auto& g = fs.grid();
  const auto& sp = fs.spec();
  const Domain& src = *sp.source;
  int b = g.boundary_node(j);
  const Mat2& W = pm.W[b];
  if (!(min_eig(W) > 0)) throw FlowError(ErrorKind::MetricDegenerate, "W not positive at boundary node");
  double phi = g.phi(j);
  Vec2 g1 = src.boundary_dphi(phi), g2 = src.boundary_dphi2(phi);
  const Vec2& beta = s.beta[j];
  IIw out;
  out.intrinsic = ii_w_curve(W, pm.gamma[b], g1, g2, beta);

  // the curve (gamma(phi), T(gamma(phi))) in source x target
  int ns = g.ns();
  double dp = g.dphi();
  const Vec2& Tm = s.T[g.boundary_node((j + ns - 1) % ns)];
  const Vec2& T0 = s.T[b];
  const Vec2& Tp = s.T[g.boundary_node((j + 1) % ns)];
  Vec4 G1 = join(g1, (Tp - Tm) / (2 * dp));
  Vec4 G2 = join(g2, (Tp - 2 * T0 + Tm) / (dp * dp));
  auto Gam = km_christoffel(*sp.cost, g.x(b), T0, hfd);
  Vec4 acc = G2;
  for (int d = 0; d < 4; ++d) acc[d] += G1.dot(Gam[d] * G1);
  Mat2 C = cross_max(*sp.cost, g.x(b), T0);
  Vec2 DTb = C.inverse() * (W * beta);
  Mat4 h = km_metric(*sp.cost, g.x(b), T0);
  double bw = std::sqrt(beta.dot(W * beta));
  out.ambient = -join(beta, DTb).dot(h * acc) / bw / g1.dot(W * g1);
  return out;
}

double coordinate_domain_II(const CostModel& c, ImageOf which, const Vec2& anchor, const Domain& dom,
                            double phi, double dphi, double floor) {
  double s = sgn(c);
  auto P = [&](double a) {
    Vec2 z = dom.boundary_at_angle(a);
    return which == ImageOf::Source ? Vec2(s * c.grad_y(z, anchor)) : Vec2(s * c.grad_x(anchor, z));
  };
  // orientation of the image curve from its signed area
  const int m = 256;
  double area = 0;
  Vec2 prev = P(0);
  for (int q = 1; q <= m; ++q) {
    Vec2 cur = P(2 * std::numbers::pi * q / m);
    area += prev.x() * cur.y() - prev.y() * cur.x();
    prev = cur;
  }
  double orient = area >= 0 ? 1.0 : -1.0;
  Vec2 pm = P(phi - dphi), p0 = P(phi), pp = P(phi + dphi);
  Vec2 d1 = (pp - pm) / (2 * dphi), d2 = (pp - 2 * p0 + pm) / (dphi * dphi);
  double speed = d1.norm();
  if (!(speed > floor)) throw FlowError(ErrorKind::DegenerateImage, "image curve velocity below floor");
  return orient * (d1.x() * d2.y() - d1.y() * d2.x()) / (speed * speed * speed);
}

IIReport verify_II_identity(const FlowSolver& fs, const FlowState& s, const PullbackMetric& pm, int j,
                            double hfd) {
  const auto& g = fs.grid();
  const auto& sp = fs.spec();
  int b = g.boundary_node(j);
  const Vec2& x0 = g.x(b);
  const Vec2& y0 = s.T[b];
  const Mat2& W = pm.W[b];
  const Vec2& beta = s.beta[j];
  IIw ii = second_fundamental_form_w(fs, s, pm, j, hfd);

  IIReport r;
  r.node = j;
  r.nr = g.nr();
  r.ns = g.ns();
  r.hfd = hfd;
  r.ii_intrinsic = ii.intrinsic;
  r.ii_ambient = ii.ambient;
  Vec2 t = g.tangent(j);
  Vec2 tau = t / std::sqrt(t.dot(W * t));
  double bw = std::sqrt(beta.dot(W * beta));
  r.lhs = 2 * bw * ii.intrinsic;

  Mat2 C = cross_max(*sp.cost, x0, y0);
  Vec2 tau_hat = C.transpose() * tau;  // tangent to the source image at D_y c(x0, y0)
  Vec2 tau_bar = W * tau;              // C DT tau, tangent to the target image at D_x c(x0, y0)
  Vec2 DTb = C.inverse() * (W * beta);
  Vec2 rel = y0 - sp.target->center();
  double psi = std::atan2(rel.y(), rel.x());
  r.kappa_source = coordinate_domain_II(*sp.cost, ImageOf::Source, y0, *sp.source, g.phi(j));
  r.kappa_target = coordinate_domain_II(*sp.cost, ImageOf::Target, x0, *sp.target, psi);
  r.term_source = DTb.norm() * r.kappa_source * tau_hat.squaredNorm();
  r.term_target = beta.norm() * r.kappa_target * tau_bar.squaredNorm();
  r.rhs = r.term_source + r.term_target;
  r.rel_error = std::abs(r.lhs - r.rhs) / std::max(std::abs(r.rhs), 1e-300);
  return r;
}

GradNormDbeta dbeta_gradnorm_boundary(const FlowSolver& fs, const FlowState& s, const PullbackMetric& pm,
                                      const HarnackSeries& hs, int n, int j) {
  const auto& g = fs.grid();
  int b = g.boundary_node(j);
  const Vec2& beta = s.beta[j];
  const Mat2& W = pm.W[b];
  GradNormDbeta out;
  Vec2 X = W.inverse() * hs.grad_f[n][b];
  // keep the tangential part; the identity is for tangent grad^w f
  Vec2 t = g.tangent(j);
  double xt = X.dot(t);
  double tw = t.dot(W * t);
  if (xt != 0) {
    double ii = second_fundamental_form_w(fs, s, pm, j).intrinsic;
    out.closed = -2 * std::sqrt(beta.dot(W * beta)) * ii * xt * xt * tw;
  }
  ScalarField Q = g.scalar();
  for (int k = 0; k < g.size(); ++k) {
    const Vec2& gf = hs.grad_f[n][k];
    Q[k] = gf.dot(pm.W[k].inverse() * gf);
  }
  out.direct = directional_derivative_at_boundary(g, Q, j, beta);
  return out;
}

ScalarField verify_weighted_laplacian_identity(const CurvilinearGrid& g, const PullbackMetric& pm,
                                               const LinearizedCoeffs& c, const ScalarField& v_now,
                                               const ScalarField& v_prev, double dt) {
  ScalarField L = apply_L(g, c, v_now, v_prev, dt);
  ScalarField out = g.scalar();
  int ni = g.boundary_node(0);
  Vec2 gv;
  Mat2 H;
  for (int k = 0; k < ni; ++k) {
    g.grad_hess_at(v_now.data.data(), k, gv, H);
    Vec2 gphi = g.grad_at(pm.phi.data.data(), k);
    const Mat2& wi = c.winv[k];
    double lap = 0;
    for (int i = 0; i < 2; ++i)
      for (int jj = 0; jj < 2; ++jj) {
        double conn = pm.gamma[k][0](i, jj) * gv[0] + pm.gamma[k][1](i, jj) * gv[1];
        lap += wi(i, jj) * (H(i, jj) - conn);
      }
    double rhs = lap - gphi.dot(wi * gv) - (v_now[k] - v_prev[k]) / dt;
    out[k] = L[k] - rhs;
  }
  return out;
}

}  // namespace potflow
