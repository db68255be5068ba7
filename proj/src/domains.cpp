#include "potflow/domains.hpp"

#include <cmath>
#include <limits>

namespace potflow {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

Vec2 dir(double phi) { return Vec2(std::cos(phi), std::sin(phi)); }

struct KJet {
  double k, d1, d2;
};

// k = rho / sqrt(rho^2 + rho'^2) and two derivatives
KJet kjet(const RadiusJet& j) {
  double S = j.r * j.r + j.d1 * j.d1;
  double S1 = 2 * j.r * j.d1 + 2 * j.d1 * j.d2;
  double S2 = 2 * j.d1 * j.d1 + 2 * j.r * j.d2 + 2 * j.d2 * j.d2 + 2 * j.d1 * j.d3;
  double is = 1.0 / std::sqrt(S);
  double is3 = is * is * is, is5 = is3 * is * is;
  KJet o;
  o.k = j.r * is;
  o.d1 = j.d1 * is - 0.5 * j.r * is3 * S1;
  o.d2 = j.d2 * is - j.d1 * is3 * S1 + 0.75 * j.r * is5 * S1 * S1 - 0.5 * j.r * is3 * S2;
  return o;
}

struct PolarH {
  double r, phi, H, Hr, Hp, Hrr, Hrp, Hpp;
};

class Disk : public Domain {
 public:
  Disk(double R, Vec2 c) : Domain("disk", {R}, c), R_(R) {}
  RadiusJet radius(double) const override { return {R_, 0, 0, 0}; }

 private:
  double R_;
};

class Ellipse : public Domain {
 public:
  Ellipse(double a, double b, Vec2 c) : Domain("ellipse", {a, b}, c), a_(a), b_(b) {}
  RadiusJet radius(double phi) const override {
    double m = 0.5 * (a_ * a_ + b_ * b_), d = 0.5 * (b_ * b_ - a_ * a_);
    double c2 = std::cos(2 * phi), s2 = std::sin(2 * phi);
    double E = m + d * c2, E1 = -2 * d * s2, E2 = -4 * d * c2, E3 = 8 * d * s2;
    double ab = a_ * b_;
    double Em12 = std::pow(E, -0.5), Em32 = std::pow(E, -1.5), Em52 = std::pow(E, -2.5),
           Em72 = std::pow(E, -3.5);
    RadiusJet j;
    j.r = ab * Em12;
    j.d1 = -0.5 * ab * Em32 * E1;
    j.d2 = ab * (0.75 * Em52 * E1 * E1 - 0.5 * Em32 * E2);
    j.d3 = ab * (-1.875 * Em72 * E1 * E1 * E1 + 2.25 * Em52 * E1 * E2 - 0.5 * Em32 * E3);
    return j;
  }

 private:
  double a_, b_;
};

class Blob : public Domain {
 public:
  Blob(double R, double eps, int k, Vec2 c)
      : Domain("blob", {R, eps, double(k)}, c), R_(R), e_(eps), k_(k) {}
  RadiusJet radius(double phi) const override {
    double c = std::cos(k_ * phi), s = std::sin(k_ * phi);
    double k = k_;
    return {R_ * (1 + e_ * c), -R_ * e_ * k * s, -R_ * e_ * k * k * c, R_ * e_ * k * k * k * s};
  }

 private:
  double R_, e_;
  int k_;
};

}  // namespace

namespace {
PolarH polar_h(const Domain& d, const Vec2& y) {
  Vec2 v = y - d.center();
  PolarH p;
  p.r = v.norm();
  p.phi = p.r > 0 ? std::atan2(v.y(), v.x()) : 0.0;
  RadiusJet j = d.radius(p.phi);
  KJet k = kjet(j);
  double s = p.r - j.r;
  p.H = s * k.k;
  p.Hr = k.k;
  p.Hp = -j.d1 * k.k + s * k.d1;
  p.Hrr = 0;
  p.Hrp = k.d1;
  p.Hpp = -j.d2 * k.k - 2 * j.d1 * k.d1 + s * k.d2;
  return p;
}
}  // namespace

double Domain::h(const Vec2& y) const { return polar_h(*this, y).H; }

Vec2 Domain::grad_h(const Vec2& y) const {
  PolarH p = polar_h(*this, y);
  if (p.r < 1e-300) return Vec2::Zero();
  Vec2 e = dir(p.phi);
  return p.Hr * e + (p.Hp / p.r) * perp(e);
}

Mat2 Domain::hess_h(const Vec2& y) const {
  PolarH p = polar_h(*this, y);
  if (p.r < 1e-300) return Mat2::Zero();
  Vec2 e = dir(p.phi), t = perp(e);
  Mat2 et = e * t.transpose();
  return p.Hrr * e * e.transpose() + (p.Hrp / p.r - p.Hp / (p.r * p.r)) * (et + et.transpose()) +
         (p.Hpp / (p.r * p.r) + p.Hr / p.r) * t * t.transpose();
}

Vec2 Domain::polar_map(double r, double phi) const { return c_ + r * radius(phi).r * dir(phi); }
Vec2 Domain::boundary_at_angle(double phi) const { return polar_map(1.0, phi); }
Vec2 Domain::boundary_point(double s) const { return boundary_at_angle(kTwoPi * s); }

Vec2 Domain::boundary_dphi(double phi) const {
  RadiusJet j = radius(phi);
  Vec2 e = dir(phi);
  return j.d1 * e + j.r * perp(e);
}

Vec2 Domain::boundary_dphi2(double phi) const {
  RadiusJet j = radius(phi);
  Vec2 e = dir(phi);
  return (j.d2 - j.r) * e + 2 * j.d1 * perp(e);
}

Vec2 Domain::normal_at_angle(double phi) const {
  Vec2 t = boundary_dphi(phi);
  return Vec2(t.y(), -t.x()).normalized();
}

double Domain::curvature_at_angle(double phi) const {
  RadiusJet j = radius(phi);
  double S = j.r * j.r + j.d1 * j.d1;
  return (j.r * j.r + 2 * j.d1 * j.d1 - j.r * j.d2) / std::pow(S, 1.5);
}

double Domain::curvature_fd(double phi, double dphi) const {
  Vec2 a = boundary_at_angle(phi - dphi), b = boundary_at_angle(phi), c = boundary_at_angle(phi + dphi);
  Vec2 d1 = (c - a) / (2 * dphi), d2 = (c - 2 * b + a) / (dphi * dphi);
  return (d1.x() * d2.y() - d1.y() * d2.x()) / std::pow(d1.norm(), 3);
}

double Domain::area() const {
  const int n = 4096;
  double s = 0;
  for (int i = 0; i < n; ++i) {
    double r = radius(kTwoPi * i / n).r;
    s += 0.5 * r * r;
  }
  return s * kTwoPi / n;
}

DomainPtr make_disk(double R, Vec2 c) { return std::make_shared<Disk>(R, c); }
DomainPtr make_ellipse(double a, double b, Vec2 c) { return std::make_shared<Ellipse>(a, b, c); }
DomainPtr make_blob(double R, double eps, int k, Vec2 c) {
  return std::make_shared<Blob>(R, eps, k, c);
}

CosineBumpDensity::CosineBumpDensity(const Domain& dom, double eps, double mass, Profile profile)
    : c_(dom.center()), eps_(eps), profile_(profile) {
  const int n = 4096;
  for (int i = 0; i < n; ++i) rmax_ = i ? std::max(rmax_, dom.radius(kTwoPi * i / n).r) : dom.radius(0).r;
  double s = 0;
  for (int i = 0; i < n; ++i) {
    double phi = kTwoPi * i / n, r = dom.radius(phi).r;
    if (profile_ == Profile::Angular)
      s += 0.5 * r * r * (1 + eps * std::cos(phi));
    else
      s += 0.5 * r * r + eps * std::cos(phi) * r * r * r / (3 * rmax_);
  }
  Z_ = mass / (s * kTwoPi / n);
}

double CosineBumpDensity::operator()(const Vec2& y) const {
  Vec2 v = y - c_;
  if (profile_ == Profile::Linear) return Z_ * (1 + eps_ * v.x() / rmax_);
  double r = v.norm();
  return Z_ * (1 + (r > 0 ? eps_ * v.x() / r : 0.0));
}

Vec2 CosineBumpDensity::grad(const Vec2& y) const {
  if (profile_ == Profile::Linear) return Vec2(Z_ * eps_ / rmax_, 0);
  Vec2 v = y - c_;
  double r = v.norm();
  if (r == 0) return Vec2::Zero();
  // d/dy (v_x/r) = e_x/r - v_x v/r^3
  return Z_ * eps_ * (Vec2(1, 0) / r - v.x() * v / (r * r * r));
}

DensityPtr make_uniform(const Domain& dom, double mass) {
  return std::make_shared<UniformDensity>(mass / dom.area());
}

namespace {
void gauss_legendre01(int n, std::vector<double>& x, std::vector<double>& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    double b = i / std::sqrt(4.0 * i * i - 1.0);
    J(i, i - 1) = J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 0.5 * (es.eigenvalues()[i] + 1.0);
    double v0 = es.eigenvectors()(0, i);
    w[i] = v0 * v0;  // weights on [-1,1] are 2 v0^2; halved for [0,1]
  }
}
}  // namespace

double integrate_domain(const Domain& dom, const DensityOracle& f, int nr, int nphi) {
  std::vector<double> xr, wr;
  gauss_legendre01(nr, xr, wr);
  double total = 0;
  for (int j = 0; j < nphi; ++j) {
    double phi = kTwoPi * j / nphi, R = dom.radius(phi).r;
    double s = 0;
    for (int i = 0; i < nr; ++i) s += wr[i] * f(dom.polar_map(xr[i], phi)) * xr[i];
    total += s * R * R;
  }
  return total * kTwoPi / nphi;
}

namespace {
double radical_inverse(int i, int b) {
  double f = 1, r = 0;
  while (i > 0) {
    f /= b;
    r += f * (i % b);
    i /= b;
  }
  return r;
}
}  // namespace

Vec2 halton2(int index, int b1, int b2) {
  return Vec2(radical_inverse(index, b1), radical_inverse(index, b2));
}

Vec2 sample_domain(const Domain& dom, const Vec2& u) {
  return dom.polar_map(std::sqrt(u[0]), kTwoPi * u[1]);
}

BitwistReport check_bitwist(const ProblemSpec& spec, int n) {
  BitwistReport rep;
  rep.min_abs_det = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= n; ++i) {
    Vec2 x = sample_domain(*spec.source, halton2(i, 2, 3));
    Vec2 y = sample_domain(*spec.target, halton2(i, 5, 7));
    double d = std::abs(spec.cost->cross(x, y).determinant());
    if (d < rep.min_abs_det) {
      rep.min_abs_det = d;
      rep.argmin_x = x;
      rep.argmin_y = y;
    }
  }
  rep.samples = n;
  rep.ok = rep.min_abs_det >= 1e-8;
  return rep;
}

double c_convexity_form(const CostModel& c, const Domain& src, double phi, const Vec2& y) {
  Vec2 x = src.boundary_at_angle(phi);
  Vec2 tau = src.boundary_dphi(phi).normalized();
  Vec2 nu = src.grad_h(x);
  Vec2 m = c.cross(x, y).inverse() * nu;  // (C^{-1} nu)_r
  Tensor3 t = c.d_xxy(x, y);
  double corr = m[0] * tau.dot(t[0] * tau) + m[1] * tau.dot(t[1] * tau);
  return tau.dot(src.hess_h(x) * tau) - corr;
}

double cstar_convexity_form(const CostModel& c, const Domain& tgt, double phi, const Vec2& x) {
  Vec2 y = tgt.boundary_at_angle(phi);
  Vec2 tau = tgt.boundary_dphi(phi).normalized();
  Vec2 nu = tgt.grad_h(y);
  Vec2 m = c.cross(x, y).transpose().inverse() * nu;  // (C^{-T} nu)_l
  Tensor3 t = c.d_xyy(x, y);
  double corr = m[0] * tau.dot(t[0] * tau) + m[1] * tau.dot(t[1] * tau);
  return tau.dot(tgt.hess_h(y) * tau) - corr;
}

namespace {
template <class Form>
ConvexityReport sweep(const Domain& bdom, const Domain& odom, int nb, int no, int b1, int b2,
                      Form form) {
  ConvexityReport rep;
  rep.min_value = std::numeric_limits<double>::infinity();
  rep.n_boundary = nb;
  rep.n_other = no;
  bool all_indep = true;
  for (int i = 0; i < nb; ++i) {
    double phi = kTwoPi * i / nb;
    // probe a few points first; if the form ignores them, one evaluation stands for all
    const int probe = std::min(no, 4);
    std::vector<double> vals;
    for (int k = 1; k <= probe; ++k) vals.push_back(form(phi, sample_domain(odom, halton2(k, b1, b2))));
    double mean = 0, var = 0;
    for (double v : vals) mean += v / vals.size();
    for (double v : vals) var += (v - mean) * (v - mean) / vals.size();
    bool indep = var < 1e-12 * 1e-12 + 1e-24;
    all_indep = all_indep && indep;
    int upto = indep ? probe : no;
    for (int k = 1; k <= upto; ++k) {
      Vec2 o = sample_domain(odom, halton2(k, b1, b2));
      double v = k <= probe ? vals[k - 1] : form(phi, o);
      ++rep.evaluations;
      if (v < rep.min_value) {
        rep.min_value = v;
        rep.argmin_boundary = bdom.boundary_at_angle(phi);
        rep.argmin_other = o;
        rep.argmin_tangent = bdom.boundary_dphi(phi).normalized();
      }
    }
  }
  rep.other_independent = all_indep;
  return rep;
}
}  // namespace

ConvexityReport check_c_convexity(const ProblemSpec& spec, int n_boundary, int n_target) {
  const CostModel& c = *spec.cost;
  const Domain& s = *spec.source;
  return sweep(s, *spec.target, n_boundary, n_target, 5, 7,
               [&](double phi, const Vec2& y) { return c_convexity_form(c, s, phi, y); });
}

ConvexityReport check_cstar_convexity(const ProblemSpec& spec, int n_boundary, int n_source) {
  const CostModel& c = *spec.cost;
  const Domain& t = *spec.target;
  return sweep(t, *spec.source, n_boundary, n_source, 2, 3,
               [&](double phi, const Vec2& x) { return cstar_convexity_form(c, t, phi, x); });
}

std::vector<Violation> validate_spec(const ProblemSpec& spec) {
  std::vector<Violation> out;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto probe = [&](const DensityOracle& f, const Domain& d) {
    for (int i = 1; i <= 2000; ++i) {
      double v = f(sample_domain(d, halton2(i, 2, 3)));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (int i = 0; i < 256; ++i) {
      double v = f(d.boundary_point(i / 256.0));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  };
  probe(*spec.rho, *spec.source);
  probe(*spec.rho_star, *spec.target);
  if (lo < spec.lambda || hi > spec.Lambda)
    out.push_back({ErrorKind::DensityOutOfBounds,
                   "density range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]",
                   lo < spec.lambda ? lo : hi});
  double m1 = integrate_domain(*spec.source, *spec.rho, spec.quad_r, spec.quad_phi);
  double m2 = integrate_domain(*spec.target, *spec.rho_star, spec.quad_r, spec.quad_phi);
  if (std::abs(m1 - m2) > spec.mass_tol)
    out.push_back({ErrorKind::MassImbalance,
                   "source mass " + std::to_string(m1) + " vs target mass " + std::to_string(m2),
                   m2 - m1});
  BitwistReport b = check_bitwist(spec, 2000);
  if (!b.ok)
    out.push_back({ErrorKind::BitwistFailure, "min |det D2xy c| = " + std::to_string(b.min_abs_det),
                   b.min_abs_det});
  return out;
}

void require_valid(const ProblemSpec& spec) {
  auto v = validate_spec(spec);
  if (!v.empty()) throw FlowError(v.front().kind, v.front().message);
}

}  // namespace potflow
