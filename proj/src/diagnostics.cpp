#include "potflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace potflow {

namespace {

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

// index of the record at time t, or -1
long find_time(const std::vector<DiagnosticsRecord>& rec, double t) {
  auto it = std::lower_bound(rec.begin(), rec.end(), t - 1e-9 * std::max(1.0, std::abs(t)),
                             [](const DiagnosticsRecord& r, double v) { return r.t < v; });
  if (it == rec.end() || !same_time(it->t, t)) return -1;
  return it - rec.begin();
}

const Snapshot* snapshot_at(const std::vector<Snapshot>& snaps, double t) {
  for (const auto& s : snaps)
    if (same_time(s.t, t)) return &s;
  return nullptr;
}

std::pair<double, double> interior_range(const CurvilinearGrid& g, const ScalarField& f) {
  auto [lo, hi] = std::minmax_element(f.data.begin(), f.data.begin() + g.boundary_node(0));
  return {*lo, *hi};
}

double max_abs(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }
double max_abs(const Tensor3& t) { return std::max(max_abs(t[0]), max_abs(t[1])); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<DiagnosticsRecord> records_from(const Trajectory& tr) {
  std::vector<DiagnosticsRecord> out;
  out.reserve(tr.monitors.size());
  for (const auto& m : tr.monitors) {
    DiagnosticsRecord r;
    r.t = m.t;
    r.dt = m.dt;
    r.sup_theta = m.sup_theta;
    r.inf_theta = m.inf_theta;
    r.mass_balance_err = m.mass_balance_err;
    r.max_boundary_G = m.max_boundary_G;
    r.min_eig_W = m.min_eig_W;
    r.stationary_residual = m.stationary_residual;
    r.alignment = m.alignment;
    r.chi_min = m.chi_min;
    out.push_back(r);
  }
  return out;
}

void fill_u_dist(std::vector<DiagnosticsRecord>& rec, const TimeSeries& d) {
  for (std::size_t n = 0; n < d.t.size(); ++n) {
    long i = find_time(rec, d.t[n]);
    if (i >= 0) rec[i].u_dist = d.v[n];
  }
}

void fill_harnack(std::vector<DiagnosticsRecord>& rec, const HarnackSeries& hs, const TimeSeries& ratios) {
  for (std::size_t n = 0; n < hs.t.size(); ++n) {
    long i = find_time(rec, hs.t[n]);
    if (i >= 0) rec[i].F_max = hs.F_max[n];
  }
  for (std::size_t n = 0; n < ratios.t.size(); ++n) {
    long i = find_time(rec, ratios.t[n] + hs.k - 1);
    if (i >= 0) rec[i].harnack_ratio = ratios.v[n];
  }
}

AlignmentReport wbeta_alignment(const CurvilinearGrid& g, const MatrixField& W, const std::vector<Vec2>& beta,
                                double flag_level) {
  AlignmentReport a;
  a.chi_min = std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.ns(); ++j) {
    Vec2 v = W[g.boundary_node(j)] * beta[j];
    double chi = v.norm();
    a.chi_min = std::min(a.chi_min, chi);
    if (chi == 0) continue;
    const Vec2& n = g.normal(j);
    double s = std::abs(v.x() * n.y() - v.y() * n.x()) / chi;
    if (s > a.max_sin) {
      a.max_sin = s;
      a.worst = j;
    }
  }
  a.flagged = a.max_sin > flag_level || !(a.chi_min > 0);
  return a;
}

AlignmentReport wbeta_alignment(const FlowSolver& fs, const FlowState& s, double flag_level) {
  return wbeta_alignment(fs.grid(), s.W, s.beta, flag_level);
}

RateFit fit_rate(const TimeSeries& s, const FitWindow& w) {
  const std::size_t n = s.t.size();
  auto fail = [](const std::string& why) { throw FlowError(ErrorKind::NoDecayWindow, why); };
  if (n == 0) fail("empty series");

  // end of the usable prefix
  long end = -1;
  if (w.t2) {
    for (std::size_t i = 0; i < n; ++i)
      if (s.t[i] <= *w.t2 + 1e-12) end = i;
  } else {
    for (std::size_t i = 0; i < n; ++i)
      if (s.v[i] > w.floor && s.v[i] > 0) end = i;
  }
  if (end < 0) fail("no sample above the floor");

  long begin = 0;
  if (w.t1) {
    while (begin < end && s.t[begin] < *w.t1 - 1e-12) ++begin;
  } else {
    for (long i = 0; i <= end; ++i) {
      bool left = i == 0 || s.v[i] >= s.v[i - 1];
      bool right = i == end || s.v[i] >= s.v[i + 1];
      if (left && right) begin = i;
    }
  }

  std::vector<double> x, y;
  for (long i = begin; i <= end; ++i)
    if (s.v[i] > w.floor && s.v[i] > 0) {
      x.push_back(s.t[i]);
      y.push_back(std::log(s.v[i]));
    }
  if (static_cast<int>(x.size()) < w.min_samples) {
    std::ostringstream os;
    os << x.size() << " samples in the decay window, need " << w.min_samples;
    fail(os.str());
  }

  const double m = x.size();
  double xm = 0, ym = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= m;
  ym /= m;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (y[i] - ym);
    syy += (y[i] - ym) * (y[i] - ym);
  }
  double slope = sxy / sxx;
  if (!(slope < 0)) fail("series does not decay on the window");

  RateFit f;
  f.sigma = -slope;
  f.amplitude = std::exp(ym - slope * xm);
  f.t1 = x.front();
  f.t2 = x.back();
  f.samples = static_cast<int>(x.size());
  double ss_res = std::max(0.0, syy - slope * sxy);
  f.r2 = syy > 0 ? std::clamp(1 - ss_res / syy, 0.0, 1.0) : 1.0;
  return f;
}

TimeSeries u_distance_series(const CurvilinearGrid& g, const std::vector<Snapshot>& snaps) {
  TimeSeries out;
  if (snaps.empty()) return out;
  const ScalarField& uf = snaps.back().u;
  double wsum = 0;
  for (int k = 0; k < g.size(); ++k) wsum += g.weight(k);
  std::vector<double> d(g.size());
  for (const auto& sn : snaps) {
    double mean = 0;
    for (int k = 0; k < g.size(); ++k) {
      d[k] = sn.u[k] - uf[k];
      mean += g.weight(k) * d[k];
    }
    mean /= wsum;
    double m = 0;
    for (double v : d) m = std::max(m, std::abs(v - mean));
    out.t.push_back(sn.t);
    out.v.push_back(m);
  }
  return out;
}

TimeSeries theta_norm_series(const CurvilinearGrid& g, const std::vector<Snapshot>& snaps, double shift) {
  TimeSeries out;
  for (const auto& sn : snaps) {
    auto [lo, hi] = interior_range(g, sn.theta);
    out.t.push_back(sn.t);
    out.v.push_back(std::max(std::abs(hi - shift), std::abs(lo - shift)));
  }
  return out;
}

double theta_limit(const CurvilinearGrid& g, const Trajectory& tr) {
  if (tr.snapshots.empty()) throw FlowError(ErrorKind::MissingInput, "trajectory has no snapshots");
  auto [lo, hi] = interior_range(g, tr.snapshots.back().theta);
  return 0.5 * (lo + hi);
}

double theta_roundoff(const CurvilinearGrid& g, const Trajectory& tr) {
  double umax = 1;
  for (const auto& sn : tr.snapshots)
    for (double v : sn.u.data) umax = std::max(umax, std::abs(v));
  return 16 * std::numeric_limits<double>::epsilon() * umax / (g.h_min() * g.h_min());
}

RateFit fit_u_rate(const CurvilinearGrid& g, const Trajectory& tr, FitWindow w) {
  TimeSeries d = u_distance_series(g, tr.snapshots);
  if (w.floor == 0 && d.v.size() >= 2) {
    double umax = 1;
    for (const auto& sn : tr.snapshots)
      for (double v : sn.u.data) umax = std::max(umax, std::abs(v));
    w.floor = std::max(100 * d.v[d.v.size() - 2], 1e4 * std::numeric_limits<double>::epsilon() * umax);
  }
  return fit_rate(d, w);
}

RateFit fit_theta_rate(const CurvilinearGrid& g, const Trajectory& tr, FitWindow w) {
  if (w.floor == 0) w.floor = 10 * theta_roundoff(g, tr);
  return fit_rate(theta_norm_series(g, tr.snapshots, theta_limit(g, tr)), w);
}

HarnackRatios harnack_ratio_series(const CurvilinearGrid& g, const Trajectory& tr, const HarnackSeries& hs,
                                   double shift_floor) {
  HarnackRatios r;
  for (std::size_t i = 0; i < hs.s.size(); ++i) {
    if (hs.s[i] < 1 - 1e-9) continue;
    long m = -1;
    for (std::size_t q = i; q < hs.s.size(); ++q)
      if (same_time(hs.s[q], hs.s[i] + 1)) {
        m = q;
        break;
      }
    if (m < 0) break;
    if (!(hs.Theta_inf[m] > hs.floor)) {
      std::ostringstream os;
      os << "inf Theta(., " << hs.s[m] << ") = " << hs.Theta_inf[m] << " at t = " << hs.s[i];
      throw FlowError(ErrorKind::DegenerateDenominator, os.str());
    }
    r.series.t.push_back(hs.s[i]);
    r.series.v.push_back(hs.Theta_sup[i] / hs.Theta_inf[m]);
  }

  std::vector<double> S, I;
  for (int k = 0;; ++k) {
    const Snapshot* sn = snapshot_at(tr.snapshots, k);
    if (!sn) break;
    auto [lo, hi] = interior_range(g, sn->theta);
    S.push_back(hi);
    I.push_back(lo);
  }
  if (!S.empty()) {
    double osc0 = S[0] - I[0];
    for (std::size_t k = 1; k + 1 < S.size(); ++k) {
      double den = S[k - 1] - S[k + 1];
      if (!(den > shift_floor * osc0)) break;
      r.shift_k.push_back(static_cast<int>(k));
      r.shift_C.push_back((S[k - 1] - I[k]) / den);
    }
  }

  if (r.series.v.empty() && r.shift_C.empty())
    throw FlowError(ErrorKind::DegenerateDenominator, "no Harnack ratio with a positive denominator");
  r.C_max = 0;
  for (double c : r.series.v) r.C_max = std::max(r.C_max, c);
  for (double c : r.shift_C) r.C_max = std::max(r.C_max, c);
  r.C_median = median(r.series.v.empty() ? r.shift_C : r.series.v);
  r.eps = (r.C_max - 1) / r.C_max;
  return r;
}

OscillationReport oscillation_decay(const CurvilinearGrid& g, const std::vector<Snapshot>& snaps, double eps,
                                    double C, double sigma, double shift, double tol, int k_max) {
  OscillationReport rep;
  rep.eps = eps;
  rep.C = C;
  rep.sigma = sigma;
  rep.shift = shift;
  rep.tol = tol;
  rep.contracting = eps < 1;
  for (int k = 0; k <= k_max; ++k) {
    const Snapshot* sn = snapshot_at(snaps, k);
    if (!sn) {
      std::ostringstream os;
      os << "no snapshot at integer time " << k;
      throw FlowError(ErrorKind::MissingInput, os.str());
    }
    auto [lo, hi] = interior_range(g, sn->theta);
    OscillationRow row;
    row.k = k;
    row.sup = hi - shift;
    row.inf = lo - shift;
    rep.rows.push_back(row);
  }
  for (int k = 1; k <= k_max; ++k) {
    auto& row = rep.rows[k];
    if (k >= 2) row.sup_ok = row.sup <= eps * rep.rows[k - 2].sup + tol;
    row.inf_ok = row.inf >= -(C - 1) * rep.rows[0].sup * std::exp(-sigma * (k - 1)) - tol;
    rep.violations += !row.sup_ok + !row.inf_ok;
  }
  return rep;
}

double measured_norm_bound(const FlowSolver& fs, const Trajectory& tr) {
  const auto& g = fs.grid();
  const int N = g.size();
  double spatial = 0;
  std::vector<double> h11(N), h12(N), h22(N);
  for (const auto& sn : tr.snapshots) {
    double n0 = 0, n1 = 0, n2 = 0, n3 = 0, n4 = 0;
    for (int k = 0; k < N; ++k) {
      Vec2 d;
      Mat2 H;
      g.grad_hess_at(sn.u.data.data(), k, d, H);
      n0 = std::max(n0, std::abs(sn.u[k]));
      n1 = std::max(n1, d.cwiseAbs().maxCoeff());
      n2 = std::max(n2, max_abs(H));
      h11[k] = H(0, 0);
      h12[k] = H(0, 1);
      h22[k] = H(1, 1);
    }
    for (const auto* f : {&h11, &h12, &h22})
      for (int k = 0; k < N; ++k) {
        Vec2 d;
        Mat2 H;
        g.grad_hess_at(f->data(), k, d, H);
        n3 = std::max(n3, d.cwiseAbs().maxCoeff());
        n4 = std::max(n4, max_abs(H));
      }
    spatial = std::max(spatial, n0 + n1 + n2 + n3 + n4);
  }

  double temporal = 0;
  const auto& sn = tr.snapshots;
  for (std::size_t n = 0; n + 1 < sn.size(); ++n) {
    double dt = sn[n + 1].t - sn[n].t;
    if (!(dt > 0)) continue;
    double ut = 0, utt = 0;
    for (int k = 0; k < N; ++k) ut = std::max(ut, std::abs(sn[n + 1].u[k] - sn[n].u[k]) / dt);
    if (n + 2 < sn.size()) {
      double dt2 = sn[n + 2].t - sn[n + 1].t;
      if (dt2 > 0)
        for (int k = 0; k < N; ++k)
          utt = std::max(utt, std::abs((sn[n + 2].u[k] - sn[n + 1].u[k]) / dt2 -
                                       (sn[n + 1].u[k] - sn[n].u[k]) / dt) /
                                  (0.5 * (dt + dt2)));
    }
    temporal = std::max(temporal, ut + utt);
  }

  // cost derivatives on a sample of (x, T(x)) pairs crossed with each other
  double cost = 0;
  if (!sn.empty()) {
    FlowState fin = fs.state_from(sn.back().u, sn.back().t);
    const auto& c = *fs.spec().cost;
    std::vector<Vec2> xs, ys;
    int stride = std::max(1, N / 24);
    for (int k = 0; k < N; k += stride) {
      xs.push_back(g.x(k));
      ys.push_back(fin.T[k]);
    }
    const double h = 1e-4;
    const Vec2 e[2] = {Vec2(1, 0), Vec2(0, 1)};
    for (const auto& x : xs)
      for (const auto& y : ys) {
        double n0 = std::abs(c.value(x, y));
        double n1 = std::max(c.grad_x(x, y).cwiseAbs().maxCoeff(), c.grad_y(x, y).cwiseAbs().maxCoeff());
        double n2 = std::max({max_abs(c.hess_xx(x, y)), max_abs(c.hess_yy(x, y)), max_abs(c.cross(x, y))});
        double n3 = std::max(max_abs(c.d_xxy(x, y)), max_abs(c.d_xyy(x, y)));
        double n4 = 0;
        for (int a = 0; a < 2; ++a) {
          Vec2 dx = h * e[a];
          n3 = std::max(n3, max_abs((c.hess_xx(x + dx, y) - c.hess_xx(x - dx, y)) / (2 * h)));
          n3 = std::max(n3, max_abs((c.hess_yy(x, y + dx) - c.hess_yy(x, y - dx)) / (2 * h)));
          n4 = std::max(n4, max_abs((c.hess_xx(x + dx, y) - 2 * c.hess_xx(x, y) + c.hess_xx(x - dx, y)) / (h * h)));
          n4 = std::max(n4, max_abs((c.hess_yy(x, y + dx) - 2 * c.hess_yy(x, y) + c.hess_yy(x, y - dx)) / (h * h)));
          Tensor3 px = c.d_xxy(x + dx, y), mx = c.d_xxy(x - dx, y);
          Tensor3 py = c.d_xyy(x, y + dx), my = c.d_xyy(x, y - dx);
          Tensor3 qy = c.d_xxy(x, y + dx), ny = c.d_xxy(x, y - dx);
          for (int r = 0; r < 2; ++r) {
            n4 = std::max(n4, max_abs((px[r] - mx[r]) / (2 * h)));
            n4 = std::max(n4, max_abs((py[r] - my[r]) / (2 * h)));
            n4 = std::max(n4, max_abs((qy[r] - ny[r]) / (2 * h)));
          }
        }
        cost = std::max(cost, n0 + n1 + n2 + n3 + n4);
      }
  }
  return spatial + temporal + cost;
}

Analysis analyze(const FlowSolver& fs, const Trajectory& tr, const AnalysisOptions& opt) {
  const auto& g = fs.grid();
  Analysis a;
  a.records = records_from(tr);
  a.u_dist = u_distance_series(g, tr.snapshots);
  a.theta_c = theta_limit(g, tr);
  a.theta_norm = theta_norm_series(g, tr.snapshots, a.theta_c);
  fill_u_dist(a.records, a.u_dist);

  auto soft = [](auto&& f) {
    try {
      f();
    } catch (const FlowError& e) {
      switch (e.kind()) {
        case ErrorKind::NoDecayWindow:
        case ErrorKind::DegenerateDenominator:
        case ErrorKind::NonPositiveTheta:
        case ErrorKind::MissingInput:
          break;
        default:
          throw;
      }
    }
  };
  soft([&] { a.u_fit = fit_u_rate(g, tr, opt.window); });
  soft([&] { a.theta_fit = fit_theta_rate(g, tr); });
  if (opt.harnack)
    soft([&] {
      HarnackSeries hs = theta_special(fs, tr, 1);
      a.sublinear = fit_sublinearity(hs.s, hs.F_max);
      a.harnack = harnack_ratio_series(g, tr, hs);
      fill_harnack(a.records, hs, a.harnack->series);
    });
  if (a.harnack && a.theta_fit) {
    double tol = opt.osc_tol >= 0 ? opt.osc_tol : 10 * theta_roundoff(g, tr);
    int k_max = static_cast<int>(std::floor(tr.snapshots.back().t + 1e-9));
    soft([&] {
      a.oscillation = oscillation_decay(g, tr.snapshots, a.harnack->eps, a.harnack->C_max, a.theta_fit->sigma,
                                        a.theta_c, tol, k_max);
    });
  }

  Summary& s = a.summary;
  if (a.u_fit) {
    s.sigma = a.u_fit->sigma;
    s.r2 = a.u_fit->r2;
  }
  if (a.harnack) {
    s.C_harnack = a.harnack->C_max;
    s.eps = a.harnack->eps;
  }
  for (const auto& m : tr.monitors) {
    s.max_mass_err = std::max(s.max_mass_err, m.mass_balance_err);
    s.max_alignment = std::max(s.max_alignment, m.alignment);
  }
  s.stationary_residual = tr.monitors.empty() ? tr.final_residual : tr.monitors.back().stationary_residual;
  s.K_measured = measured_norm_bound(fs, tr);
  return a;
}

}  // namespace potflow
