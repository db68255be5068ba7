#pragma once
#include <memory>
#include <string>

#include "potflow/errors.hpp"
#include "potflow/types.hpp"

namespace potflow {

enum class SignConvention { Maximization, Minimization };

// Normalized defining function: negative inside, zero on the boundary,
// unit gradient there.
class DefiningFunction {
 public:
  virtual ~DefiningFunction() = default;
  virtual double h(const Vec2& y) const = 0;
  virtual Vec2 grad_h(const Vec2& y) const = 0;
  virtual Mat2 hess_h(const Vec2& y) const = 0;
  virtual Vec2 center() const = 0;
};

class DensityOracle {
 public:
  virtual ~DensityOracle() = default;
  virtual double operator()(const Vec2& x) const = 0;
  virtual Vec2 grad(const Vec2& x) const = 0;
};

struct DerivativeBundle {
  double value;
  Vec2 grad_x, grad_y;
  Mat2 hess_xx, cross;
  Tensor3 xxy;  // xxy[r](i,j) = c_{ij,r}
};

class CostModel {
 public:
  virtual ~CostModel() = default;
  virtual std::string name() const = 0;
  virtual double value(const Vec2& x, const Vec2& y) const = 0;
  virtual Vec2 grad_x(const Vec2& x, const Vec2& y) const = 0;
  virtual Vec2 grad_y(const Vec2& x, const Vec2& y) const = 0;
  virtual Mat2 hess_xx(const Vec2& x, const Vec2& y) const = 0;
  virtual Mat2 hess_yy(const Vec2& x, const Vec2& y) const = 0;
  // cross(x,y)(i,r) = d^2 c / dx_i dy_r
  virtual Mat2 cross(const Vec2& x, const Vec2& y) const = 0;
  // [r](i,j) = c_{ij,r}; centered differences of hess_xx in y unless overridden
  virtual Tensor3 d_xxy(const Vec2& x, const Vec2& y) const;
  // [i](r,q) = c_{i,rq}; centered differences of cross in y unless overridden
  virtual Tensor3 d_xyy(const Vec2& x, const Vec2& y) const;
  // Optional closed-form twist inverses, used to seed Newton.
  virtual bool closed_form_Y(const Vec2&, const Vec2&, Vec2&) const { return false; }
  virtual bool closed_form_X(const Vec2&, const Vec2&, Vec2&) const { return false; }

  DerivativeBundle bundle(const Vec2& x, const Vec2& y) const;

  double h_fd = 1e-4;
  double newton_tol = 1e-12;
  double cross_margin = 1e-8;
  SignConvention convention = SignConvention::Maximization;
};

using CostPtr = std::shared_ptr<const CostModel>;

class InnerProductCost : public CostModel {
 public:
  std::string name() const override { return "inner_product"; }
  double value(const Vec2& x, const Vec2& y) const override { return x.dot(y); }
  Vec2 grad_x(const Vec2&, const Vec2& y) const override { return y; }
  Vec2 grad_y(const Vec2& x, const Vec2&) const override { return x; }
  Mat2 hess_xx(const Vec2&, const Vec2&) const override { return Mat2::Zero(); }
  Mat2 hess_yy(const Vec2&, const Vec2&) const override { return Mat2::Zero(); }
  Mat2 cross(const Vec2&, const Vec2&) const override { return Mat2::Identity(); }
  Tensor3 d_xxy(const Vec2&, const Vec2&) const override;
  Tensor3 d_xyy(const Vec2&, const Vec2&) const override;
  bool closed_form_Y(const Vec2&, const Vec2& p, Vec2& y) const override { y = p; return true; }
  bool closed_form_X(const Vec2& q, const Vec2&, Vec2& x) const override { x = q; return true; }
};

// c = -|x-y|^2/2
class NegHalfSqDistCost : public CostModel {
 public:
  std::string name() const override { return "neg_half_sq_dist"; }
  double value(const Vec2& x, const Vec2& y) const override { return -0.5 * (x - y).squaredNorm(); }
  Vec2 grad_x(const Vec2& x, const Vec2& y) const override { return y - x; }
  Vec2 grad_y(const Vec2& x, const Vec2& y) const override { return x - y; }
  Mat2 hess_xx(const Vec2&, const Vec2&) const override { return -Mat2::Identity(); }
  Mat2 hess_yy(const Vec2&, const Vec2&) const override { return -Mat2::Identity(); }
  Mat2 cross(const Vec2&, const Vec2&) const override { return Mat2::Identity(); }
  Tensor3 d_xxy(const Vec2&, const Vec2&) const override;
  Tensor3 d_xyy(const Vec2&, const Vec2&) const override;
  bool closed_form_Y(const Vec2& x, const Vec2& p, Vec2& y) const override { y = x + p; return true; }
  bool closed_form_X(const Vec2& q, const Vec2& y, Vec2& x) const override { x = y + q; return true; }
};

// c = -sqrt(1+|x-y|^2): the usual sqrt(1+|x-y|^2) transport cost written for
// maximization.
class SqrtOnePlusSqDistCost : public CostModel {
 public:
  std::string name() const override { return "sqrt_one_plus_sq_dist"; }
  double value(const Vec2& x, const Vec2& y) const override;
  Vec2 grad_x(const Vec2& x, const Vec2& y) const override;
  Vec2 grad_y(const Vec2& x, const Vec2& y) const override;
  Mat2 hess_xx(const Vec2& x, const Vec2& y) const override;
  Mat2 hess_yy(const Vec2& x, const Vec2& y) const override;
  Mat2 cross(const Vec2& x, const Vec2& y) const override;
  Tensor3 d_xxy(const Vec2& x, const Vec2& y) const override;
  Tensor3 d_xyy(const Vec2& x, const Vec2& y) const override;
  bool closed_form_Y(const Vec2& x, const Vec2& p, Vec2& y) const override;
  bool closed_form_X(const Vec2& q, const Vec2& y, Vec2& x) const override;
};

// c -> -c, applied once when switching to the minimization convention.
class NegatedCost : public CostModel {
 public:
  explicit NegatedCost(CostPtr base);
  std::string name() const override { return base_->name(); }
  double value(const Vec2& x, const Vec2& y) const override { return -base_->value(x, y); }
  Vec2 grad_x(const Vec2& x, const Vec2& y) const override { return -base_->grad_x(x, y); }
  Vec2 grad_y(const Vec2& x, const Vec2& y) const override { return -base_->grad_y(x, y); }
  Mat2 hess_xx(const Vec2& x, const Vec2& y) const override { return -base_->hess_xx(x, y); }
  Mat2 hess_yy(const Vec2& x, const Vec2& y) const override { return -base_->hess_yy(x, y); }
  Mat2 cross(const Vec2& x, const Vec2& y) const override { return -base_->cross(x, y); }
  Tensor3 d_xxy(const Vec2& x, const Vec2& y) const override;
  Tensor3 d_xyy(const Vec2& x, const Vec2& y) const override;
  bool closed_form_Y(const Vec2& x, const Vec2& p, Vec2& y) const override {
    return base_->closed_form_Y(x, -p, y);
  }
  bool closed_form_X(const Vec2& q, const Vec2& y, Vec2& x) const override {
    return base_->closed_form_X(-q, y, x);
  }
  const CostPtr& base() const { return base_; }

 private:
  CostPtr base_;
};

CostPtr make_cost(const std::string& name);
CostPtr with_convention(const CostPtr& cost, SignConvention target);

// Twist inverses: y with grad_x c(x,y) = p, and x with grad_y c(x,y) = q.
Vec2 invert_Y(const CostModel& c, const Vec2& x, const Vec2& p,
              const Vec2* seed = nullptr, const DefiningFunction* target = nullptr,
              double outside_tol = 1e-8);
Vec2 invert_X(const CostModel& c, const Vec2& q, const Vec2& y,
              const Vec2* seed = nullptr, const DefiningFunction* source = nullptr,
              double outside_tol = 1e-8);

Mat2 DpY(const CostModel& c, const Vec2& x, const Vec2& y);
Mat2 DxY(const CostModel& c, const Vec2& x, const Vec2& y);
// [k](l,s): second p-derivatives of Y^l, slice over the first p index
Tensor3 DppY(const CostModel& c, const Vec2& x, const Vec2& y);

Mat2 matrix_A(const CostModel& c, const Vec2& x, const Vec2& p);
// -(D_pY)^{-1} D_xY with both Jacobians from centered differences of invert_Y
Mat2 matrix_A_alt(const CostModel& c, const Vec2& x, const Vec2& p, double h = -1);
double scalar_B(const CostModel& c, const DensityOracle& rho, const DensityOracle& rho_star,
                const Vec2& x, const Vec2& p);
double boundary_G(const CostModel& c, const DefiningFunction& hstar, const Vec2& x, const Vec2& p);
Vec2 oblique_beta(const CostModel& c, const DefiningFunction& hstar, const Vec2& x, const Vec2& p);
// Hessian in p of G(x,p)
Mat2 G_pp(const CostModel& c, const DefiningFunction& hstar, const Vec2& x, const Vec2& p);
double mtw_tensor(const CostModel& c, const Vec2& x, const Vec2& p, const Vec2& xi, Vec2 eta,
                  double h = -1);
// [k] = dA/dp_k by centered differences
Tensor3 dA_dp(const CostModel& c, const Vec2& x, const Vec2& p, double h = -1);
Vec2 dlogB_dp(const CostModel& c, const DensityOracle& rho, const DensityOracle& rho_star,
              const Vec2& x, const Vec2& p, double h = -1);

}  // namespace potflow
