#pragma once
#include <limits>
#include <optional>
#include <vector>

#include "potflow/linearized.hpp"

namespace potflow {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One row per accepted step. The last three entries are only known after the
// run finishes and stay NaN on steps that have no snapshot.
struct DiagnosticsRecord {
  double t = 0, dt = 0;
  double sup_theta = 0, inf_theta = 0;
  double mass_balance_err = 0;
  double max_boundary_G = 0;
  double min_eig_W = 0;
  double stationary_residual = 0;
  double alignment = 0, chi_min = 0;
  double u_dist = kNaN, F_max = kNaN, harnack_ratio = kNaN;
};

std::vector<DiagnosticsRecord> records_from(const Trajectory& tr);

struct TimeSeries {
  std::vector<double> t, v;
};

// Attach snapshot-level series to the step records by matching times.
void fill_u_dist(std::vector<DiagnosticsRecord>& rec, const TimeSeries& d);
void fill_harnack(std::vector<DiagnosticsRecord>& rec, const HarnackSeries& hs,
                  const TimeSeries& ratios);

struct AlignmentReport {
  double max_sin = 0;
  double chi_min = 0;
  int worst = -1;        // boundary column
  bool flagged = false;  // max_sin above the flag level or chi <= 0
};

AlignmentReport wbeta_alignment(const CurvilinearGrid& g, const MatrixField& W,
                                const std::vector<Vec2>& beta, double flag_level = 1e-2);
AlignmentReport wbeta_alignment(const FlowSolver& fs, const FlowState& s, double flag_level = 1e-2);

// Unset bounds are detected: t1 is the last local maximum of the series, t2 the
// last sample above the floor.
struct FitWindow {
  std::optional<double> t1, t2;
  double floor = 0;
  int min_samples = 10;
};

struct RateFit {
  double sigma = 0, amplitude = 0;
  double t1 = 0, t2 = 0;
  double r2 = 0;
  int samples = 0;
};

RateFit fit_rate(const TimeSeries& s, const FitWindow& w = {});

// ||u(t) - u_final - mean||_inf per snapshot; the area-weighted mean of the
// difference is removed because the flow drifts u by the discrete constant.
TimeSeries u_distance_series(const CurvilinearGrid& g, const std::vector<Snapshot>& snaps);
// ||theta(t) - shift||_inf over interior nodes per snapshot
TimeSeries theta_norm_series(const CurvilinearGrid& g, const std::vector<Snapshot>& snaps,
                             double shift);
// midpoint of the interior range of theta in the final snapshot
double theta_limit(const CurvilinearGrid& g, const Trajectory& tr);
// Size of roundoff in theta: second differences of u amplify eps |u| by 1/h^2.
double theta_roundoff(const CurvilinearGrid& g, const Trajectory& tr);

// Fits with floors below which the series is noise. For u the floor also keeps
// out the tail where u_final stops being a good proxy for the limit.
RateFit fit_u_rate(const CurvilinearGrid& g, const Trajectory& tr, FitWindow w = {});
RateFit fit_theta_rate(const CurvilinearGrid& g, const Trajectory& tr, FitWindow w = {});

struct HarnackRatios {
  TimeSeries series;  // C(t) = sup Theta(t) / inf Theta(t+1), t >= 1
  // Same ratio at t = 1 for every shift k: (S_{k-1} - I_k) / (S_{k-1} - S_{k+1})
  // with S, I the interior sup and inf of theta at integer times.
  std::vector<int> shift_k;
  std::vector<double> shift_C;
  double C_max = 0, C_median = 0;
  double eps = 0;  // (C_max - 1) / C_max
};

// The shift family stops at the first k whose denominator falls below
// shift_floor times the initial oscillation of theta.
HarnackRatios harnack_ratio_series(const CurvilinearGrid& g, const Trajectory& tr,
                                   const HarnackSeries& hs, double shift_floor = 1e-6);

struct OscillationRow {
  int k = 0;
  double sup = 0, inf = 0;
  bool sup_ok = true, inf_ok = true;
};

struct OscillationReport {
  std::vector<OscillationRow> rows;
  double eps = 0, C = 0, sigma = 0, shift = 0, tol = 0;
  int violations = 0;
  bool contracting = true;  // eps < 1
};

// Checks sup(k+1) <= eps sup(k-1) + tol and inf(k) >= -(C-1) sup(0) e^{-sigma (k-1)} - tol
// on theta - shift at integer times k = 0..k_max, interior nodes.
OscillationReport oscillation_decay(const CurvilinearGrid& g, const std::vector<Snapshot>& snaps,
                                    double eps, double C, double sigma, double shift, double tol,
                                    int k_max);

// Sampled discrete stand-in for ||u||_{C^4_x C^2_t} + ||c||_{C^4}.
double measured_norm_bound(const FlowSolver& fs, const Trajectory& tr);

struct Summary {
  std::optional<double> sigma, r2;
  std::optional<double> C_harnack, eps;
  double max_mass_err = 0, max_alignment = 0, stationary_residual = 0, K_measured = 0;
};

struct AnalysisOptions {
  FitWindow window;        // applied to the u fit
  bool harnack = true;     // needs a snapshot at t = 0 and at t = 1 or later
  double osc_tol = -1;     // < 0: ten times the roundoff level of theta
};

struct Analysis {
  std::vector<DiagnosticsRecord> records;
  TimeSeries u_dist, theta_norm;
  double theta_c = 0;
  std::optional<RateFit> u_fit, theta_fit;
  std::optional<HarnackRatios> harnack;
  std::optional<OscillationReport> oscillation;
  std::optional<SublinearFit> sublinear;
  Summary summary;
};

// The full post-pass over a finished trajectory. Missing decay or a degenerate
// Harnack denominator leave the corresponding entries empty.
Analysis analyze(const FlowSolver& fs, const Trajectory& tr, const AnalysisOptions& opt = {});

}  // namespace potflow
