#include "potflow/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace potflow {

namespace {
std::atomic<std::uint64_t> g_stamp{1};
}

CurvilinearGrid::CurvilinearGrid(DomainPtr dom, int nr, int ns)
    : dom_(std::move(dom)), nr_(nr), ns_(ns), stamp_(g_stamp++) {
  if (nr < 4 || ns < 8 || ns % 2) throw FlowError(ErrorKind::ConfigError, "grid needs nr >= 4 and even ns >= 8");
  dr_ = 1.0 / (nr - 0.5);
  dphi_ = 2 * M_PI / ns;
  s1_ = std::sin(dphi_);
  c2_ = 2 * (1 - std::cos(dphi_));
  Re_.resize(ns);
  Ro_.resize(ns);
  Re1_.resize(ns);
  Ro1_.resize(ns);
  Re2_.resize(ns);
  Ro2_.resize(ns);
  for (int j = 0; j < ns; ++j) {
    RadiusJet a = dom_->radius(phi(j)), b = dom_->radius(phi(j) + M_PI);
    Re_[j] = 0.5 * (a.r + b.r);
    Ro_[j] = 0.5 * (a.r - b.r);
    Re1_[j] = 0.5 * (a.d1 + b.d1);
    Ro1_[j] = 0.5 * (a.d1 - b.d1);
    Re2_[j] = 0.5 * (a.d2 + b.d2);
    Ro2_[j] = 0.5 * (a.d2 - b.d2);
  }
  R0_ = *std::min_element(Re_.begin(), Re_.end());
  int n = size();
  x_.resize(n);
  K_.resize(n);
  M_.resize(2 * n);
  jdet_.resize(n);
  w_.resize(n);
  hmin_ = std::numeric_limits<double>::infinity();
  std::vector<double> wr(nr, dr_);
  wr[nr - 1] = 0;
  wr[nr - 1] += dr_ / 3;
  wr[nr - 2] += 5 * dr_ / 24;
  wr[nr - 3] -= dr_ / 24;
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < ns; ++j) {
      int k = idx(i, j);
      double p = phi(j);
      Vec2 e(std::cos(p), std::sin(p));
      Vec2 d[5];
      map_derivs(k, d);
      double rr = r(i);
      double P = rr * R0_ + rr * rr * rr * (Re_[j] - R0_) + rr * rr * Ro_[j];
      x_[k] = dom_->center() + P * e;
      Mat2 J;
      J.col(0) = d[0];
      J.col(1) = d[1];
      jdet_[k] = J.determinant();
      if (jdet_[k] <= 0) throw FlowError(ErrorKind::ConfigError, "star map folds: nonpositive Jacobian");
      K_[k] = J.inverse().transpose();
      for (int m = 0; m < 2; ++m) {
        Mat2 X;
        X << d[2][m], d[3][m], d[3][m], d[4][m];
        M_[2 * k + m] = K_[k] * X * K_[k].transpose();
      }
      w_[k] = jdet_[k] * wr[i] * dphi_;
      hmin_ = std::min(hmin_, dr_ * d[0].norm());
    }
  nu_.resize(ns);
  tan_.resize(ns);
  for (int j = 0; j < ns; ++j) {
    nu_[j] = dom_->normal_at_angle(phi(j));
    tan_[j] = dom_->boundary_dphi(phi(j)).normalized();
  }
}

void CurvilinearGrid::map_derivs(int k, Vec2 d[5]) const {
  int i = ring(k), j = col(k);
  double rr = r(i), p = phi(j);
  Vec2 e(std::cos(p), std::sin(p)), t = perp(e);
  double r2 = rr * rr, r3 = r2 * rr, dRe = Re_[j] - R0_;
  double P = rr * R0_ + r3 * dRe + r2 * Ro_[j];
  double Pr = R0_ + 3 * r2 * dRe + 2 * rr * Ro_[j], Prr = 6 * rr * dRe + 2 * Ro_[j];
  double Pp = r3 * Re1_[j] + r2 * Ro1_[j], Prp = 3 * r2 * Re1_[j] + 2 * rr * Ro1_[j];
  double Ppp = r3 * Re2_[j] + r2 * Ro2_[j];
  d[0] = Pr * e;
  d[1] = Pp * e + P * t;
  d[2] = Prr * e;
  d[3] = Prp * e + Pr * t;
  d[4] = (Ppp - P) * e + 2 * Pp * t;
}

NodeKind CurvilinearGrid::kind(int k) const {
  if (is_boundary(k)) return NodeKind::Boundary;
  if (ring(k) == 0) return NodeKind::NearCenter;
  return NodeKind::Interior;
}

double CurvilinearGrid::dr_self_weight(int k) const {
  return is_boundary(k) ? 1.5 / dr_ : 0.0;
}

LogicalDerivs CurvilinearGrid::logical(const double* f, int k) const {
  const int i = k / ns_, j = k - i * ns_;
  auto wrap = [&](int jj) { return jj >= ns_ ? jj - ns_ : (jj < 0 ? jj + ns_ : jj); };
  const int jp = wrap(j + 1), jm = wrap(j - 1);
  const int jo = wrap(j + ns_ / 2), jop = wrap(jo + 1), jom = wrap(jo - 1);
  const double i2s = 1.0 / (2 * s1_), idr = 1.0 / dr_;
  // value and angular difference on the line through the center at signed ring ii
  auto val = [&](int ii) { return ii >= 0 ? f[ii * ns_ + j] : f[(-ii - 1) * ns_ + jo]; };
  auto dp = [&](int ii) {
    if (ii >= 0) return f[ii * ns_ + jp] - f[ii * ns_ + jm];
    int base = (-ii - 1) * ns_;
    return f[base + jop] - f[base + jom];
  };
  LogicalDerivs L;
  const double f0 = f[k];
  const double fa = f[i * ns_ + jp], fb = f[i * ns_ + jm];
  L.fp = (fa - fb) * i2s;
  L.fpp = (fa - 2 * f0 + fb) / c2_;
  if (i == nr_ - 1) {
    double f1 = val(i - 1), f2 = val(i - 2), f3 = val(i - 3);
    L.fr = (3 * f0 - 4 * f1 + f2) * (0.5 * idr);
    L.frr = (2 * f0 - 5 * f1 + 4 * f2 - f3) * (idr * idr);
    L.frp = (3 * (fa - fb) - 4 * dp(i - 1) + dp(i - 2)) * i2s * (0.5 * idr);
    return L;
  }
  const double fo1 = val(i + 1), fi1 = val(i - 1);
  L.frr = (fo1 - 2 * f0 + fi1) * (idr * idr);
  if (i <= nr_ - 3) {
    // five-point first derivatives keep the 1/r chain-rule terms second order near the center
    const double fo2 = val(i + 2), fi2 = val(i - 2);
    L.fr = (fi2 - 8 * fi1 + 8 * fo1 - fo2) * (idr / 12);
    L.frp = (dp(i - 2) - 8 * dp(i - 1) + 8 * dp(i + 1) - dp(i + 2)) * i2s * (idr / 12);
  } else {
    L.fr = (fo1 - fi1) * (0.5 * idr);
    L.frp = (dp(i + 1) - dp(i - 1)) * i2s * (0.5 * idr);
  }
  return L;
}

Vec2 CurvilinearGrid::grad_at(const double* f, int k) const {
  LogicalDerivs L = logical(f, k);
  return K_[k] * Vec2(L.fr, L.fp);
}

void CurvilinearGrid::grad_hess_at(const double* f, int k, Vec2& g, Mat2& H) const {
  LogicalDerivs L = logical(f, k);
  g = K_[k] * Vec2(L.fr, L.fp);
  Mat2 Lm;
  Lm << L.frr, L.frp, L.frp, L.fpp;
  H = K_[k] * Lm * K_[k].transpose() - g[0] * M_[2 * k] - g[1] * M_[2 * k + 1];
}

VectorField gradient(const CurvilinearGrid& g, const ScalarField& f) {
  VectorField out{std::vector<Vec2>(g.size()), g.stamp()};
  for (int k = 0; k < g.size(); ++k) out[k] = g.grad_at(f.data.data(), k);
  return out;
}

MatrixField hessian(const CurvilinearGrid& g, const ScalarField& f) {
  MatrixField out{std::vector<Mat2>(g.size()), g.stamp()};
  Vec2 gr;
  for (int k = 0; k < g.size(); ++k) g.grad_hess_at(f.data.data(), k, gr, out[k]);
  return out;
}

double integrate(const CurvilinearGrid& g, const ScalarField& f) {
  double s = 0;
  for (int k = 0; k < g.size(); ++k) s += g.weight(k) * f[k];
  return s;
}

double directional_derivative_at_boundary(const CurvilinearGrid& g, const ScalarField& f, int j,
                                          const Vec2& d, double floor) {
  if (std::abs(d.dot(g.normal(j))) < floor * d.norm())
    throw FlowError(ErrorKind::TangentDirection, "direction tangent to the boundary");
  return g.grad_at(f.data.data(), g.boundary_node(j)).dot(d);
}

}  // namespace potflow
