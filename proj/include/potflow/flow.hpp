#pragma once
#include <memory>
#include <vector>

#include "potflow/grid.hpp"

namespace potflow {

struct FlowOptions {
  double c_stab = 0.4;
  double boundary_tol = 1e-12;
  double init_boundary_tol = 1e-3;
  int max_boundary_sweeps = 40;
  int max_halvings = 6;
  double stop_tol = 1e-9;
  double t_max = 40;
  double snapshot_every = 0.1;
  double obliqueness_floor = 1e-3;
  bool angular_smoothing = true;
  long max_steps = 50000000;
};

struct FlowState {
  ScalarField u;
  double t = 0;
  VectorField grad, T;
  MatrixField hess, W;
  ScalarField theta;
  std::vector<Vec2> beta;   // per boundary column
  std::vector<double> chi;  // |W beta| per boundary column
  bool W_positive = false;
  int witness = -1;  // first node where W is not positive definite
  double max_G = 0;
  double min_eig_W = 0;
  double max_trace_Winv = 0;       // over interior nodes
  double mass = 0;                 // quadrature of e^theta rho
  std::vector<double> ring_coef;   // max angular diffusion coefficient per interior ring
};

struct StepReport {
  double dt = 0;
  double residual = 0;  // (sup - inf)/2 of theta over interior nodes after the step
  int boundary_sweeps = 0;
  int halvings = 0;
};

// Per-step monitors; the first eight fields are the diagnostics CSV columns.
// The discrete fixed point has theta equal to a grid-dependent constant of size
// O(h^2) rather than zero, so stationary_residual is the sup-distance of theta
// from constants, (sup - inf)/2 over interior nodes.
struct StepMonitor {
  double t, dt, sup_theta, inf_theta, mass_balance_err, max_boundary_G, min_eig_W,
      stationary_residual;
  double alignment, chi_min;
};

struct Snapshot {
  double t;
  ScalarField u, theta;
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
  std::vector<StepMonitor> monitors;
  bool converged = false;
  long steps = 0;
  double final_residual = 0;
};

class FlowSolver {
 public:
  FlowSolver(ProblemSpec spec, std::shared_ptr<const CurvilinearGrid> grid, FlowOptions opt = {});
  ~FlowSolver();
  FlowSolver(const FlowSolver&) = delete;
  FlowSolver& operator=(const FlowSolver&) = delete;

  const ProblemSpec& spec() const { return spec_; }
  const CurvilinearGrid& grid() const { return *grid_; }
  std::shared_ptr<const CurvilinearGrid> grid_ptr() const { return grid_; }
  const FlowOptions& options() const { return opt_; }
  FlowOptions& options() { return opt_; }
  double target_mass() const { return target_mass_; }

  FlowState initialize(const ScalarField& u0) const;
  // state at time t from a potential, caches filled, no validation
  FlowState state_from(const ScalarField& u, double t) const;
  void refresh(FlowState& s) const;
  ScalarField interior_rhs(const FlowState& s) const;
  int enforce_boundary(FlowState& s) const;
  StepReport step(FlowState& s, double dt) const;
  double stable_dt(const FlowState& s) const;
  StepMonitor monitor(const FlowState& s, double dt) const;
  Trajectory run_to_convergence(const ScalarField& u0) const;

  double sup_theta(const FlowState& s) const;
  double inf_theta(const FlowState& s) const;
  double mass_balance_error(const FlowState& s) const;
  double alignment(const FlowState& s) const;

 private:
  void smooth_increment(std::vector<double>& inc, const FlowState& s, double dt) const;
  bool admissible(const FlowState& s) const;

  ProblemSpec spec_;
  std::shared_ptr<const CurvilinearGrid> grid_;
  FlowOptions opt_;
  double target_mass_;
  struct Fft;
  std::unique_ptr<Fft> fft_;
};

// (a x1^2 + b x2^2)/2 + <l, x> about the source center
ScalarField quadratic_potential(const CurvilinearGrid& g, double a, double b, Vec2 l = Vec2::Zero());

}  // namespace potflow
