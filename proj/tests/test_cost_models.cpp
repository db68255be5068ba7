#include <cmath>
#include <random>

#include "doctest.h"
#include "potflow/cost_models.hpp"
#include "potflow/domains.hpp"

using namespace potflow;

namespace {
Vec2 e(int k) { return k == 0 ? Vec2(1, 0) : Vec2(0, 1); }

struct Fixture {
  CostPtr ip = make_cost("inner_product");
  CostPtr sh = make_cost("neg_half_sq_dist");
  CostPtr sq = make_cost("sqrt_one_plus_sq_dist");
  std::mt19937 rng{7};
  Vec2 rnd(double s) {
    std::uniform_real_distribution<double> u(-s, s);
    return Vec2(u(rng), u(rng));
  }
};
}  // namespace

TEST_CASE("twist inverse Y") {
  Fixture f;
  Vec2 p(0.3, -0.1);
  CHECK((invert_Y(*f.ip, Vec2(0.4, 0.7), p) - p).norm() < 1e-15);
  CHECK((invert_Y(*f.sh, Vec2(0.1, 0.2), Vec2(0.5, 0)) - Vec2(0.6, 0.2)).norm() < 1e-15);
  for (int i = 0; i < 50; ++i) {
    Vec2 x = f.rnd(1.0), p = f.rnd(0.6);
    Vec2 y = invert_Y(*f.sq, x, p);
    CHECK((f.sq->grad_x(x, y) - p).norm() <= 1e-12);
    // plain damped Newton from a distant seed reaches the same point
    Vec2 seed = x;
    Vec2 y2 = invert_Y(*f.sq, x, p, &seed);
    CHECK((y2 - y).norm() < 1e-10);
  }
}

TEST_CASE("twist inverse X and round trip") {
  Fixture f;
  Vec2 q(0.2, 0.5), y(1.0, -1.0);
  CHECK((invert_X(*f.ip, q, y) - q).norm() < 1e-15);
  CHECK((invert_X(*f.sh, q, y) - (y + q)).norm() < 1e-15);
  for (const CostPtr& c : {f.ip, f.sh, f.sq}) {
    for (int i = 0; i < 30; ++i) {
      Vec2 x = f.rnd(1.0), yy = f.rnd(1.0) + Vec2(3, 0);
      Vec2 xr = invert_X(*c, c->grad_y(x, yy), yy);
      CHECK((xr - x).norm() <= 1e-12);
      Vec2 p = c->grad_x(x, yy);
      Vec2 yr = invert_Y(*c, x, p);
      CHECK((invert_X(*c, c->grad_y(x, yr), yr) - x).norm() <= 1e-12);
    }
  }
}

TEST_CASE("twist inverse errors") {
  Fixture f;
  // |p| >= 1 is outside the gradient image of the sqrt cost
  CHECK_THROWS_AS(invert_Y(*f.sq, Vec2(0, 0), Vec2(1.5, 0)), FlowError);
  auto disk = make_disk(1.0);
  try {
    invert_Y(*f.ip, Vec2(0, 0), Vec2(2, 0), nullptr, disk.get());
    FAIL("expected OutsideTarget");
  } catch (const FlowError& err) {
    CHECK(err.kind() == ErrorKind::OutsideTarget);
  }
}

TEST_CASE("matrix A") {
  Fixture f;
  Vec2 x(0.2, -0.3), p(0.4, 0.1);
  CHECK(matrix_A(*f.ip, x, p).norm() == 0.0);
  CHECK((matrix_A(*f.sh, x, p) + Mat2::Identity()).norm() < 1e-15);
  for (const CostPtr& c : {f.ip, f.sh, f.sq}) {
    for (int i = 0; i < 20; ++i) {
      Vec2 xx = f.rnd(1.0), pp = f.rnd(0.6);
      Mat2 A = matrix_A(*c, xx, pp);
      CHECK((A - A.transpose()).norm() <= 1e-10);
      CHECK((A - matrix_A_alt(*c, xx, pp)).norm() <= 1e-6);
    }
  }
}

TEST_CASE("scalar B") {
  Fixture f;
  UniformDensity r1(1 / M_PI), r2(1 / (4 * M_PI));
  for (int i = 0; i < 10; ++i) CHECK(std::abs(scalar_B(*f.ip, r1, r2, f.rnd(0.7), f.rnd(1.4)) - 4) < 1e-13);
  UniformDensity a(0.3);
  CHECK(std::abs(scalar_B(*f.sh, a, a, Vec2(0.1, 0.1), Vec2(3, 0)) - 1) < 1e-15);
  auto big = make_disk(2.0);
  CosineBumpDensity bump(*big, 0.1, 1.0);
  for (int i = 0; i < 20; ++i) {
    Vec2 x = f.rnd(0.7), p = f.rnd(0.5);
    Vec2 y = p / std::sqrt(1 - p.squaredNorm()) + x;
    // D^2 sqrt(1+|z|^2) has eigenvalues 1/phi and 1/phi^3
    double phi = std::sqrt(1 + (x - y).squaredNorm());
    double expect = std::pow(phi, -4) * (1 / M_PI) / bump(y);
    CHECK(std::abs(scalar_B(*f.sq, r1, bump, x, p) - expect) <= 1e-12);
  }
}

TEST_CASE("boundary G and oblique beta") {
  Fixture f;
  auto t = make_disk(2.0);
  CHECK(std::abs(boundary_G(*f.ip, *t, Vec2(0.3, 0), Vec2(0, 2))) < 1e-15);
  CHECK(std::abs(boundary_G(*f.ip, *t, Vec2(0.3, 0), Vec2(0.6, 0.8)) + 1) < 1e-15);
  Vec2 p(1.2, -0.7);
  CHECK((oblique_beta(*f.ip, *t, Vec2(0.1, 0.1), p) - t->grad_h(p)).norm() < 1e-15);
  Vec2 x(0.1, 0.2);
  CHECK((oblique_beta(*f.sh, *t, x, p) - t->grad_h(x + p)).norm() < 1e-15);
  auto t2 = make_disk(1.0, Vec2(3, 0));
  int agree = 0;
  for (int i = 0; i < 100; ++i) {
    Vec2 xx = f.rnd(0.7), pp = f.rnd(0.65);
    Vec2 y = invert_Y(*f.sq, xx, pp);
    double G = boundary_G(*f.sq, *t2, xx, pp);
    agree += (G < 0) == ((y - Vec2(3, 0)).norm() < 1.0);
  }
  CHECK(agree == 100);
  for (const CostPtr& c : {f.ip, f.sh, f.sq}) {
    for (int i = 0; i < 20; ++i) {
      Vec2 xx = f.rnd(0.7), pp = f.rnd(0.6);
      Vec2 g;
      double h = 1e-4;
      for (int k = 0; k < 2; ++k)
        g[k] = (boundary_G(*c, *t2, xx, pp + h * e(k)) - boundary_G(*c, *t2, xx, pp - h * e(k))) / (2 * h);
      CHECK((g - oblique_beta(*c, *t2, xx, pp)).norm() <= 1e-6);
    }
  }
}

TEST_CASE("analytic third derivatives match differences") {
  Fixture f;
  for (int i = 0; i < 10; ++i) {
    Vec2 x = f.rnd(1.0), y = f.rnd(1.0) + Vec2(2, 0);
    Tensor3 a = f.sq->d_xxy(x, y), b = f.sq->CostModel::d_xxy(x, y);
    Tensor3 c = f.sq->d_xyy(x, y), d = f.sq->CostModel::d_xyy(x, y);
    for (int r = 0; r < 2; ++r) {
      CHECK((a[r] - b[r]).norm() < 1e-7);
      CHECK((c[r] - d[r]).norm() < 1e-7);
    }
  }
}

TEST_CASE("second p-derivatives of Y and G") {
  Fixture f;
  auto t = make_disk(1.0, Vec2(3, 0));
  Vec2 x(0.2, 0.1), p(0.5, 0.2);
  Vec2 y = invert_Y(*f.sq, x, p);
  Tensor3 Ypp = DppY(*f.sq, x, y);
  double h = 1e-4;
  for (int k = 0; k < 2; ++k) {
    Vec2 yp = invert_Y(*f.sq, x, p + h * e(k)), ym = invert_Y(*f.sq, x, p - h * e(k));
    Mat2 dD = (DpY(*f.sq, x, yp) - DpY(*f.sq, x, ym)) / (2 * h);
    // dD(l,s) = Y^l_{s k}
    for (int s = 0; s < 2; ++s)
      for (int l = 0; l < 2; ++l) CHECK(std::abs(dD(l, s) - Ypp[k](l, s)) < 1e-6);
  }
  Mat2 G = G_pp(*f.sq, *t, x, p), Gfd;
  double hh = 1e-4;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      Gfd(a, b) = (boundary_G(*f.sq, *t, x, p + hh * e(a) + hh * e(b)) -
                   boundary_G(*f.sq, *t, x, p + hh * e(a) - hh * e(b)) -
                   boundary_G(*f.sq, *t, x, p - hh * e(a) + hh * e(b)) +
                   boundary_G(*f.sq, *t, x, p - hh * e(a) - hh * e(b))) /
                  (4 * hh * hh);
  CHECK((G - Gfd).norm() < 1e-6);
}

TEST_CASE("MTW tensor") {
  Fixture f;
  Vec2 x(0.1, 0.3), p(0.2, -0.4), xi(1, 0.5), eta(0.3, 1);
  CHECK(std::abs(mtw_tensor(*f.ip, x, p, xi, eta)) < 1e-12);
  CHECK(std::abs(mtw_tensor(*f.sh, x, p, xi, eta)) < 1e-12);
  double m1 = mtw_tensor(*f.sq, x, p, xi, eta, 0.1);
  double m2 = mtw_tensor(*f.sq, x, p, xi, eta, 0.05);
  double m3 = mtw_tensor(*f.sq, x, p, xi, eta, 0.025);
  double ratio = (m1 - m2) / (m2 - m3);
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("sign convention converts once") {
  Fixture f;
  CostPtr n = with_convention(f.sq, SignConvention::Minimization);
  CHECK(n->convention == SignConvention::Minimization);
  Vec2 x(0.1, 0.2), y(2.5, 0.3);
  CHECK(n->value(x, y) == -f.sq->value(x, y));
  CHECK((n->cross(x, y) + f.sq->cross(x, y)).norm() == 0.0);
  CHECK(with_convention(n, SignConvention::Maximization) == f.sq);
  CHECK(with_convention(f.sq, SignConvention::Maximization) == f.sq);
  Vec2 p = n->grad_x(x, y);
  CHECK((invert_Y(*n, x, p) - y).norm() < 1e-12);
}
