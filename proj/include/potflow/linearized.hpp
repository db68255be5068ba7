#pragma once
#include <vector>

#include "potflow/flow.hpp"

namespace potflow {

// Coefficients of the linearization of the flow about a state:
//   L v = w^{ij} v_ij + b^k v_k - v_t,
//   b^k = -w^{ij} D_{p_k} A_ij - D_{p_k} log B.
struct LinearizedCoeffs {
  MatrixField winv;
  VectorField drift;
  std::vector<Vec2> beta;  // per boundary column
  double c1 = 0;           // smallest eigenvalue of w^{ij} over nodes
  double c2 = 0;           // smallest beta . nu over boundary columns
};

LinearizedCoeffs build_coeffs(const FlowSolver& fs, const FlowState& s, double obliqueness_floor = 1e-3);

// w^{ij} v_ij + b . grad v at interior nodes, 0 on the boundary ring
ScalarField spatial_L(const CurvilinearGrid& g, const LinearizedCoeffs& c, const ScalarField& v);
ScalarField apply_L(const CurvilinearGrid& g, const LinearizedCoeffs& c, const ScalarField& v_now,
                    const ScalarField& v_prev, double dt);
// residual of the log-transformed equation: L f + w^{ij} f_i f_j, interior nodes
ScalarField f_evolution_residual(const CurvilinearGrid& g, const LinearizedCoeffs& c,
                                 const ScalarField& f_now, const ScalarField& f_prev, double dt);

// Boundary data of one snapshot, kept so boundary formulas need no re-solve.
struct BoundaryFrame {
  std::vector<Vec2> p, y, beta, grad_theta;
  std::vector<Mat2> W;
  std::vector<double> chi;
};

// Theta_k(x,s) = sup theta(., k-1) - theta(x, k-1+s), f = log Theta_k,
// F = s (w^{ij} f_i f_j - alpha f_s). The sup runs over all nodes so Theta_k >= 0
// on the closed grid at s = 0. The positivity floor is raised by the roundoff
// level of theta, 16 eps max|u| / h_min^2.
struct HarnackSeries {
  int k = 1;
  double alpha = 2, floor = 1e-14;
  double sup0 = 0;
  std::vector<double> s, t;  // shifted and absolute times
  std::vector<ScalarField> Theta, F;
  std::vector<VectorField> grad_f;
  std::vector<double> F_max, Theta_sup, Theta_inf;
  std::vector<BoundaryFrame> frames;
  bool truncated = false;
  double truncated_at = 0;
};

HarnackSeries theta_special(const FlowSolver& fs, const Trajectory& tr, int k, double alpha = 2,
                            double floor = 1e-14);

double dbetaF_direct(const CurvilinearGrid& g, const HarnackSeries& hs, int n, int j);

enum class DbetaMode { Quadratic, General };
struct DbetaTerms {
  double total, curvature, gradient, mixed;
};
DbetaTerms dbetaF_closed(const ProblemSpec& spec, const CurvilinearGrid& g, const HarnackSeries& hs,
                         int n, int j, DbetaMode mode);

// max over boundary columns of |<W beta, tau>| / |W beta|, tau = W^{-1} grad f.
// Absolute, not relative to |tau|: late in a run grad f decays below the O(h)
// boundary error of theta and any relative measure saturates at 1.
double tangency_defect(const CurvilinearGrid& g, const HarnackSeries& hs, int n);

struct MonotonicityReport {
  std::vector<double> running_max, running_min;
  double max_violation_sup = 0, max_violation_inf = 0;
  int worst_sup = -1, worst_inf = -1;
};
// sup should not rise above its running minimum, inf should not fall below its running maximum
MonotonicityReport max_principle_monitor(const std::vector<double>& sups, const std::vector<double>& infs);

struct SublinearFit {
  double C1 = 0, C2 = 0;
};
// C2 = max(0, least-squares slope over the second half of the horizon),
// C1 = max_n (Fmax_n - C2 t_n)
SublinearFit fit_sublinearity(const std::vector<double>& t, const std::vector<double>& Fmax);

}  // namespace potflow
