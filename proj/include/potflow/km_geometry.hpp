#pragma once
#include <array>
#include <vector>

#include "potflow/linearized.hpp"

namespace potflow {

// Geometry of the pseudo-metric of Kim and McCann on source x target.
//
// That framework uses the minimization sign (c_KM = -c for our maximization
// costs). All functions here take the library's costs and convert internally:
//   -D_y c_KM = D_y c,  -D_x D_y c_KM = cross(x, y) = C,
// so h = 1/2 [[0, C], [C^T, 0]] in (x, y) coordinates, and the pulled-back
// metric on the source is sym(C DT) = W, the flow's own matrix.

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

Mat4 km_metric(const CostModel& c, const Vec2& x, const Vec2& y);
// [d](a, b) = Gamma^d_ab, centered differences of the metric with step hfd
std::array<Mat4, 4> km_christoffel(const CostModel& c, const Vec2& x, const Vec2& y, double hfd = 1e-4);
// Phi(x, y) = D_x c(x0, y) (+) D_y c(x, y0); returns max |dPhi - 2 h| at (x0, y0)
double phi_jacobian_defect(const CostModel& c, const Vec2& x0, const Vec2& y0, double hfd = 1e-4);

struct PullbackMetric {
  MatrixField w;          // sym(C DT) with DT from grid differences of T
  MatrixField W;          // the flow's W, used for everything downstream
  std::vector<Tensor3> gamma;  // [k][m](i,j) = Gamma^m_ij of W
  ScalarField phi;        // 1/2 log(|det C| / (rho*(T)^2 det DT))
  ScalarField psi_base;   // rho*(T)^2 det DT / |det C|; its 1/(n-2) power is undefined for n = 2
  double max_w_defect = 0;  // max_k |w - W|
};

PullbackMetric pullback_metric(const FlowSolver& fs, const FlowState& s);

// II^w(tau, tau) for the w-unit tangent of a curve with velocity g1 and
// acceleration g2, outward normal along beta; gamma are Christoffel symbols of w.
double ii_w_curve(const Mat2& w, const Tensor3& gamma, const Vec2& g1, const Vec2& g2, const Vec2& beta);

struct IIw {
  double intrinsic = 0;  // Levi-Civita connection of w
  double ambient = 0;    // embedding (x, T(x)) and the connection of h
};
IIw second_fundamental_form_w(const FlowSolver& fs, const FlowState& s, const PullbackMetric& pm, int j,
                              double hfd = 1e-4);

// Euclidean curvature of the image of dom's boundary at angle phi under
// x -> D_y c(x, anchor) (Source) or y -> D_x c(anchor, y) (Target). Positive
// when the image region is convex there.
enum class ImageOf { Source, Target };
double coordinate_domain_II(const CostModel& c, ImageOf which, const Vec2& anchor, const Domain& dom,
                            double phi, double dphi = 1e-3, double floor = 1e-10);

struct IIReport {
  int node = 0;
  int nr = 0, ns = 0;
  double hfd = 0;
  double lhs = 0;          // 2 |beta|_w II^w(tau, tau)
  double rhs = 0;          // term_source + term_target
  double term_source = 0;  // |DT beta| II of the source image at T(x0)
  double term_target = 0;  // |beta| II of the target image at x0
  double kappa_source = 0, kappa_target = 0;
  double ii_intrinsic = 0, ii_ambient = 0;
  double rel_error = 0;
};
IIReport verify_II_identity(const FlowSolver& fs, const FlowState& s, const PullbackMetric& pm, int j,
                            double hfd = 1e-4);

struct GradNormDbeta {
  double closed = 0;  // -2 |beta|_w II^w(grad^w f, grad^w f)
  double direct = 0;  // one-sided difference of w(grad^w f, grad^w f) along beta
};
// s must be the flow state of snapshot n of the series
GradNormDbeta dbeta_gradnorm_boundary(const FlowSolver& fs, const FlowState& s, const PullbackMetric& pm,
                                      const HarnackSeries& hs, int n, int j);

// L v - (Delta_phi v - v_t) at interior nodes, Delta_phi = Delta_w - <grad phi, grad .>_w
ScalarField verify_weighted_laplacian_identity(const CurvilinearGrid& g, const PullbackMetric& pm,
                                               const LinearizedCoeffs& c, const ScalarField& v_now,
                                               const ScalarField& v_prev, double dt);

}  // namespace potflow
