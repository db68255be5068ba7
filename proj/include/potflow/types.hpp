#pragma once
#include <Eigen/Dense>

namespace potflow {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// T[r] is the 2x2 slice obtained by fixing the third index to r.
struct Tensor3 {
  Mat2 s[2];
  Mat2& operator[](int r) { return s[r]; }
  const Mat2& operator[](int r) const { return s[r]; }
};

inline Vec2 perp(const Vec2& v) { return Vec2(-v.y(), v.x()); }

inline double min_eig(const Mat2& m) {
  double tr = m.trace(), d = m.determinant();
  double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - d));
  return 0.5 * tr - disc;
}

}  // namespace potflow
