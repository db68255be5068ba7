#pragma once
#include <memory>
#include <string>
#include <vector>

#include "potflow/cost_models.hpp"

namespace potflow {

struct RadiusJet {
  double r, d1, d2, d3;  // rho(phi) and its first three derivatives
};

// Star-shaped smooth domain about center(); boundary = {c + rho(phi) e(phi)}.
class Domain : public DefiningFunction {
 public:
  Domain(std::string kind, std::vector<double> params, Vec2 c) : kind_(std::move(kind)), params_(std::move(params)), c_(c) {}
  virtual RadiusJet radius(double phi) const = 0;

  double h(const Vec2& y) const override;
  Vec2 grad_h(const Vec2& y) const override;
  Mat2 hess_h(const Vec2& y) const override;
  Vec2 center() const override { return c_; }
  bool contains(const Vec2& y, double tol = 0) const { return h(y) <= tol; }

  // s in [0,1) -> boundary point at angle 2 pi s
  Vec2 boundary_point(double s) const;
  Vec2 boundary_at_angle(double phi) const;
  Vec2 boundary_dphi(double phi) const;
  Vec2 boundary_dphi2(double phi) const;
  Vec2 normal_at_angle(double phi) const;
  double curvature_at_angle(double phi) const;
  // curvature from centered differences of the parametrization
  double curvature_fd(double phi, double dphi = 1e-3) const;
  double area() const;
  // r in [0,1], phi -> c + r rho(phi) e(phi)
  Vec2 polar_map(double r, double phi) const;

  const std::string& kind() const { return kind_; }
  const std::vector<double>& params() const { return params_; }

 private:
  std::string kind_;
  std::vector<double> params_;
  Vec2 c_;
};

using DomainPtr = std::shared_ptr<const Domain>;

DomainPtr make_disk(double R, Vec2 c = Vec2::Zero());
DomainPtr make_ellipse(double a, double b, Vec2 c = Vec2::Zero());
// r(phi) = R (1 + eps cos(k phi))
DomainPtr make_blob(double R, double eps, int k, Vec2 c = Vec2::Zero());

class UniformDensity : public DensityOracle {
 public:
  explicit UniformDensity(double v) : v_(v) {}
  double operator()(const Vec2&) const override { return v_; }
  Vec2 grad(const Vec2&) const override { return Vec2::Zero(); }
  double value() const { return v_; }

 private:
  double v_;
};

// Z (1 + eps cos(angle of y - center)), Z fixed by the requested mass.
// The Angular profile jumps at the center; Linear uses |y - center|/R_max times
// the cosine, i.e. Z (1 + eps (y - c)_1 / R_max), smooth and equal to the
// angular profile on a circular boundary.
class CosineBumpDensity : public DensityOracle {
 public:
  enum class Profile { Angular, Linear };
  CosineBumpDensity(const Domain& dom, double eps, double mass, Profile profile = Profile::Angular);
  double operator()(const Vec2& y) const override;
  Vec2 grad(const Vec2& y) const override;
  double eps() const { return eps_; }
  double Z() const { return Z_; }
  Profile profile() const { return profile_; }

 private:
  Vec2 c_;
  double eps_, Z_, rmax_ = 1;
  Profile profile_;
};

using DensityPtr = std::shared_ptr<const DensityOracle>;

// uniform density with total mass `mass` on `dom`
DensityPtr make_uniform(const Domain& dom, double mass = 1.0);

struct ProblemSpec {
  DomainPtr source, target;
  CostPtr cost;
  DensityPtr rho, rho_star;
  double lambda = 1e-3, Lambda = 1e3;
  double mass_tol = 1e-8;
  int quad_r = 48, quad_phi = 512;
};

// Gauss-Legendre in r times trapezoid in phi over the star map
double integrate_domain(const Domain& dom, const DensityOracle& f, int nr = 48, int nphi = 512);

struct BitwistReport {
  double min_abs_det = 0;
  Vec2 argmin_x, argmin_y;
  int samples = 0;
  bool ok = false;
};

struct ConvexityReport {
  double min_value = 0;  // sampled lower envelope, the delta estimate
  Vec2 argmin_boundary, argmin_other, argmin_tangent;
  int n_boundary = 0, n_other = 0, evaluations = 0;
  bool other_independent = false;  // form did not depend on the other point
};

struct Violation {
  ErrorKind kind;
  std::string message;
  double value;
};

// 2-D Halton point in [0,1)^2 from bases (b1, b2)
Vec2 halton2(int index, int b1, int b2);
Vec2 sample_domain(const Domain& dom, const Vec2& u);

BitwistReport check_bitwist(const ProblemSpec& spec, int n_samples);
// form [D^2 h(tau,tau) - (C^{-1} nu)_r c_{jk,r} tau^j tau^k] on source boundary
double c_convexity_form(const CostModel& c, const Domain& src, double phi, const Vec2& y);
double cstar_convexity_form(const CostModel& c, const Domain& tgt, double phi, const Vec2& x);
ConvexityReport check_c_convexity(const ProblemSpec& spec, int n_boundary, int n_target);
ConvexityReport check_cstar_convexity(const ProblemSpec& spec, int n_boundary, int n_source);
std::vector<Violation> validate_spec(const ProblemSpec& spec);
// throws the first violation, if any
void require_valid(const ProblemSpec& spec);

}  // namespace potflow
