#include "potflow/cost_models.hpp"

#include <cmath>

namespace potflow {

namespace {

Tensor3 zero3() {
  Tensor3 t;
  t[0].setZero();
  t[1].setZero();
  return t;
}

Vec2 unit(int k) { return k == 0 ? Vec2(1, 0) : Vec2(0, 1); }

// third derivatives of phi(z) = sqrt(1+|z|^2)
double phi3(const Vec2& z, double phi, int i, int j, int k) {
  double d = -((i == j) * z[k] + (i == k) * z[j] + (j == k) * z[i]) / (phi * phi * phi);
  return d + 3.0 * z[i] * z[j] * z[k] / std::pow(phi, 5);
}

Mat2 phi2(const Vec2& z, double phi) {
  return Mat2::Identity() / phi - z * z.transpose() / (phi * phi * phi);
}

}  // namespace

Tensor3 CostModel::d_xxy(const Vec2& x, const Vec2& y) const {
  Tensor3 t;
  for (int r = 0; r < 2; ++r)
    t[r] = (hess_xx(x, y + h_fd * unit(r)) - hess_xx(x, y - h_fd * unit(r))) / (2 * h_fd);
  return t;
}

Tensor3 CostModel::d_xyy(const Vec2& x, const Vec2& y) const {
  Tensor3 t;
  for (int q = 0; q < 2; ++q) {
    Mat2 d = (cross(x, y + h_fd * unit(q)) - cross(x, y - h_fd * unit(q))) / (2 * h_fd);
    for (int i = 0; i < 2; ++i)
      for (int r = 0; r < 2; ++r) t[i](r, q) = d(i, r);
  }
  return t;
}

DerivativeBundle CostModel::bundle(const Vec2& x, const Vec2& y) const {
  return {value(x, y), grad_x(x, y), grad_y(x, y), hess_xx(x, y), cross(x, y), d_xxy(x, y)};
}

Tensor3 InnerProductCost::d_xxy(const Vec2&, const Vec2&) const { return zero3(); }
Tensor3 InnerProductCost::d_xyy(const Vec2&, const Vec2&) const { return zero3(); }
Tensor3 NegHalfSqDistCost::d_xxy(const Vec2&, const Vec2&) const { return zero3(); }
Tensor3 NegHalfSqDistCost::d_xyy(const Vec2&, const Vec2&) const { return zero3(); }

double SqrtOnePlusSqDistCost::value(const Vec2& x, const Vec2& y) const {
  return -std::sqrt(1.0 + (x - y).squaredNorm());
}
Vec2 SqrtOnePlusSqDistCost::grad_x(const Vec2& x, const Vec2& y) const {
  Vec2 z = x - y;
  return -z / std::sqrt(1.0 + z.squaredNorm());
}
Vec2 SqrtOnePlusSqDistCost::grad_y(const Vec2& x, const Vec2& y) const {
  Vec2 z = x - y;
  return z / std::sqrt(1.0 + z.squaredNorm());
}
Mat2 SqrtOnePlusSqDistCost::hess_xx(const Vec2& x, const Vec2& y) const {
  Vec2 z = x - y;
  return -phi2(z, std::sqrt(1.0 + z.squaredNorm()));
}
Mat2 SqrtOnePlusSqDistCost::hess_yy(const Vec2& x, const Vec2& y) const { return hess_xx(x, y); }
Mat2 SqrtOnePlusSqDistCost::cross(const Vec2& x, const Vec2& y) const { return -hess_xx(x, y); }

Tensor3 SqrtOnePlusSqDistCost::d_xxy(const Vec2& x, const Vec2& y) const {
  Vec2 z = x - y;
  double phi = std::sqrt(1.0 + z.squaredNorm());
  Tensor3 t;
  for (int r = 0; r < 2; ++r)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) t[r](i, j) = phi3(z, phi, i, j, r);
  return t;
}

Tensor3 SqrtOnePlusSqDistCost::d_xyy(const Vec2& x, const Vec2& y) const {
  Vec2 z = x - y;
  double phi = std::sqrt(1.0 + z.squaredNorm());
  Tensor3 t;
  for (int i = 0; i < 2; ++i)
    for (int r = 0; r < 2; ++r)
      for (int q = 0; q < 2; ++q) t[i](r, q) = -phi3(z, phi, i, r, q);
  return t;
}

bool SqrtOnePlusSqDistCost::closed_form_Y(const Vec2& x, const Vec2& p, Vec2& y) const {
  double s = 1.0 - p.squaredNorm();
  if (s <= 0) return false;
  y = x + p / std::sqrt(s);
  return true;
}

bool SqrtOnePlusSqDistCost::closed_form_X(const Vec2& q, const Vec2& y, Vec2& x) const {
  double s = 1.0 - q.squaredNorm();
  if (s <= 0) return false;
  x = y + q / std::sqrt(s);
  return true;
}

NegatedCost::NegatedCost(CostPtr base) : base_(std::move(base)) {
  h_fd = base_->h_fd;
  newton_tol = base_->newton_tol;
  cross_margin = base_->cross_margin;
  convention = base_->convention == SignConvention::Maximization ? SignConvention::Minimization
                                                                  : SignConvention::Maximization;
}

Tensor3 NegatedCost::d_xxy(const Vec2& x, const Vec2& y) const {
  Tensor3 t = base_->d_xxy(x, y);
  t[0] = -t[0];
  t[1] = -t[1];
  return t;
}

Tensor3 NegatedCost::d_xyy(const Vec2& x, const Vec2& y) const {
  Tensor3 t = base_->d_xyy(x, y);
  t[0] = -t[0];
  t[1] = -t[1];
  return t;
}

CostPtr make_cost(const std::string& name) {
  if (name == "inner_product") return std::make_shared<InnerProductCost>();
  if (name == "neg_half_sq_dist") return std::make_shared<NegHalfSqDistCost>();
  if (name == "sqrt_one_plus_sq_dist") return std::make_shared<SqrtOnePlusSqDistCost>();
  throw FlowError(ErrorKind::ConfigError, "unknown cost '" + name + "'");
}

CostPtr with_convention(const CostPtr& cost, SignConvention target) {
  if (cost->convention == target) return cost;
  if (auto neg = std::dynamic_pointer_cast<const NegatedCost>(cost)) return neg->base();
  return std::make_shared<NegatedCost>(cost);
}

namespace {

template <class Residual, class Jacobian>
Vec2 damped_newton(Vec2 z, Residual res, Jacobian jac, double tol, double margin) {
  Vec2 r = res(z);
  double rn = r.norm();
  for (int it = 0; it < 50; ++it) {
    if (rn <= tol) return z;
    Mat2 J = jac(z);
    if (std::abs(J.determinant()) < margin) break;
    Vec2 step = J.inverse() * r;
    double lam = 1.0;
    Vec2 zn = z - step;
    Vec2 rnew = res(zn);
    while (!(rnew.norm() < rn) && lam > 1e-10) {
      lam *= 0.5;
      zn = z - lam * step;
      rnew = res(zn);
    }
    if (!(rnew.norm() < rn)) break;
    z = zn;
    r = rnew;
    rn = r.norm();
  }
  if (rn <= tol) return z;
  throw FlowError(ErrorKind::NonConvergence, "twist inversion residual " + std::to_string(rn));
}

}  // namespace

Vec2 invert_Y(const CostModel& c, const Vec2& x, const Vec2& p, const Vec2* seed,
              const DefiningFunction* target, double outside_tol) {
  Vec2 y0;
  if (seed)
    y0 = *seed;
  else if (!c.closed_form_Y(x, p, y0))
    y0 = target ? target->center() : x;
  Vec2 y = damped_newton(
      y0, [&](const Vec2& y) -> Vec2 { return c.grad_x(x, y) - p; },
      [&](const Vec2& y) -> Mat2 { return c.cross(x, y); }, c.newton_tol, c.cross_margin);
  if (target && target->h(y) > outside_tol)
    throw FlowError(ErrorKind::OutsideTarget, "Y(x,p) lies outside the target domain");
  return y;
}

Vec2 invert_X(const CostModel& c, const Vec2& q, const Vec2& y, const Vec2* seed,
              const DefiningFunction* source, double outside_tol) {
  Vec2 x0;
  if (seed)
    x0 = *seed;
  else if (!c.closed_form_X(q, y, x0))
    x0 = source ? source->center() : y;
  Vec2 x = damped_newton(
      x0, [&](const Vec2& x) -> Vec2 { return c.grad_y(x, y) - q; },
      [&](const Vec2& x) -> Mat2 { return c.cross(x, y).transpose(); }, c.newton_tol,
      c.cross_margin);
  if (source && source->h(x) > outside_tol)
    throw FlowError(ErrorKind::OutsideTarget, "X(q,y) lies outside the source domain");
  return x;
}

Mat2 DpY(const CostModel& c, const Vec2& x, const Vec2& y) { return c.cross(x, y).inverse(); }

Mat2 DxY(const CostModel& c, const Vec2& x, const Vec2& y) {
  return -c.cross(x, y).inverse() * c.hess_xx(x, y);
}

Tensor3 DppY(const CostModel& c, const Vec2& x, const Vec2& y) {
  Mat2 Ci = c.cross(x, y).inverse();
  Tensor3 t3 = c.d_xyy(x, y);
  Tensor3 out;
  for (int k = 0; k < 2; ++k)
    for (int s = 0; s < 2; ++s) {
      Vec2 v;  // v_i = c_{i,rq} Y^r_k Y^q_s
      for (int i = 0; i < 2; ++i) v[i] = Ci.col(k).dot(t3[i] * Ci.col(s));
      Vec2 col = -Ci * v;
      out[k](0, s) = col[0];
      out[k](1, s) = col[1];
    }
  return out;
}

Mat2 matrix_A(const CostModel& c, const Vec2& x, const Vec2& p) {
  return c.hess_xx(x, invert_Y(c, x, p));
}

Mat2 matrix_A_alt(const CostModel& c, const Vec2& x, const Vec2& p, double h) {
  if (h <= 0) h = c.h_fd;
  Mat2 Dp, Dx;
  for (int k = 0; k < 2; ++k) {
    Vec2 e = h * unit(k);
    Dp.col(k) = (invert_Y(c, x, p + e) - invert_Y(c, x, p - e)) / (2 * h);
    Dx.col(k) = (invert_Y(c, x + e, p) - invert_Y(c, x - e, p)) / (2 * h);
  }
  return -Dp.inverse() * Dx;
}

double scalar_B(const CostModel& c, const DensityOracle& rho, const DensityOracle& rho_star,
                const Vec2& x, const Vec2& p) {
  Vec2 y = invert_Y(c, x, p);
  double d = std::abs(c.cross(x, y).determinant());
  if (d < c.cross_margin) throw FlowError(ErrorKind::DegenerateCross, "|det D2xy c| below margin");
  return d * rho(x) / rho_star(y);
}

double boundary_G(const CostModel& c, const DefiningFunction& hstar, const Vec2& x, const Vec2& p) {
  return hstar.h(invert_Y(c, x, p));
}

Vec2 oblique_beta(const CostModel& c, const DefiningFunction& hstar, const Vec2& x, const Vec2& p) {
  Vec2 y = invert_Y(c, x, p);
  return DpY(c, x, y).transpose() * hstar.grad_h(y);
}

Mat2 G_pp(const CostModel& c, const DefiningFunction& hstar, const Vec2& x, const Vec2& p) {
  Vec2 y = invert_Y(c, x, p);
  Mat2 Yp = DpY(c, x, y);
  Tensor3 Ypp = DppY(c, x, y);
  Vec2 g = hstar.grad_h(y);
  Mat2 out = Yp.transpose() * hstar.hess_h(y) * Yp;
  for (int k = 0; k < 2; ++k)
    for (int s = 0; s < 2; ++s) out(k, s) += g.dot(Ypp[k].col(s));
  return out;
}

double mtw_tensor(const CostModel& c, const Vec2& x, const Vec2& p, const Vec2& xi, Vec2 eta,
                  double h) {
  if (h <= 0) h = c.h_fd;
  eta -= (eta.dot(xi) / xi.squaredNorm()) * xi;
  auto q = [&](const Vec2& pp) { return eta.dot(matrix_A(c, x, pp) * eta); };
  return (q(p + h * xi) - 2 * q(p) + q(p - h * xi)) / (h * h);
}

Tensor3 dA_dp(const CostModel& c, const Vec2& x, const Vec2& p, double h) {
  if (h <= 0) h = c.h_fd;
  Tensor3 t;
  for (int k = 0; k < 2; ++k)
    t[k] = (matrix_A(c, x, p + h * unit(k)) - matrix_A(c, x, p - h * unit(k))) / (2 * h);
  return t;
}

Vec2 dlogB_dp(const CostModel& c, const DensityOracle& rho, const DensityOracle& rho_star,
              const Vec2& x, const Vec2& p, double h) {
  if (h <= 0) h = c.h_fd;
  Vec2 g;
  for (int k = 0; k < 2; ++k)
    g[k] = (std::log(scalar_B(c, rho, rho_star, x, p + h * unit(k))) -
            std::log(scalar_B(c, rho, rho_star, x, p - h * unit(k)))) /
           (2 * h);
  return g;
}

}  // namespace potflow
