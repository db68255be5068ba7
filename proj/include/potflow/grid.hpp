#pragma once
#include <cstdint>
#include <vector>

#include "potflow/domains.hpp"

namespace potflow {

enum class NodeKind { Interior, Boundary, NearCenter };

template <class T>
struct Field {
  std::vector<T> data;
  std::uint64_t stamp = 0;  // generation of the grid it lives on
  T& operator[](std::size_t k) { return data[k]; }
  const T& operator[](std::size_t k) const { return data[k]; }
  std::size_t size() const { return data.size(); }
};

using ScalarField = Field<double>;
using VectorField = Field<Vec2>;
using MatrixField = Field<Mat2>;

// Logical derivatives in (r, phi) at a node.
struct LogicalDerivs {
  double fr, fp, frr, frp, fpp;
};

// Boundary-fitted polar grid: ring i at r_i = (i + 1/2) dr, the last ring on r = 1;
// no node at the star center, the inward neighbour of ring 0 is the antipodal node.
// Map: x = c + P(r,phi) e(phi), P = r R0 + r^3 (Re - R0) + r^2 Ro with Re, Ro the
// even/odd parts of the boundary radius under phi -> phi + pi and R0 = min Re, so
// the grid is exactly polar near the center.
class CurvilinearGrid {
 public:
  CurvilinearGrid(DomainPtr dom, int nr, int ns);

  int nr() const { return nr_; }
  int ns() const { return ns_; }
  int size() const { return nr_ * ns_; }
  int idx(int i, int j) const { return i * ns_ + ((j % ns_) + ns_) % ns_; }
  int ring(int k) const { return k / ns_; }
  int col(int k) const { return k % ns_; }
  double dr() const { return dr_; }
  double dphi() const { return dphi_; }
  double r(int i) const { return (i + 0.5) * dr_; }
  double phi(int j) const { return j * dphi_; }
  NodeKind kind(int k) const;
  bool is_boundary(int k) const { return k >= (nr_ - 1) * ns_; }
  int boundary_node(int j) const { return (nr_ - 1) * ns_ + j; }
  std::uint64_t stamp() const { return stamp_; }
  const Domain& domain() const { return *dom_; }
  const DomainPtr& domain_ptr() const { return dom_; }

  const Vec2& x(int k) const { return x_[k]; }
  // physical gradient = K * (f_r, f_phi)
  const Mat2& K(int k) const { return K_[k]; }
  // D^2 f = K L K^T - sum_m g_m M_m
  const Mat2& M(int k, int m) const { return M_[2 * k + m]; }
  double jac_det(int k) const { return jdet_[k]; }
  double weight(int k) const { return w_[k]; }
  // outward unit normal and unit tangent (counter-clockwise) at boundary column j
  const Vec2& normal(int j) const { return nu_[j]; }
  const Vec2& tangent(int j) const { return tan_[j]; }
  // mapping derivatives at a node: x_r, x_phi, x_rr, x_rphi, x_phiphi
  void map_derivs(int k, Vec2 out[5]) const;
  // smallest physical radial spacing over the grid
  double h_min() const { return hmin_; }

  ScalarField scalar(double v = 0.0) const { return {std::vector<double>(size(), v), stamp_}; }
  template <class F>
  ScalarField sample(F f) const {
    ScalarField s = scalar();
    for (int k = 0; k < size(); ++k) s[k] = f(x_[k]);
    return s;
  }

  LogicalDerivs logical(const double* f, int k) const;
  Vec2 grad_at(const double* f, int k) const;
  void grad_hess_at(const double* f, int k, Vec2& g, Mat2& H) const;
  // r-derivative weight of the node's own value in its radial stencil
  double dr_self_weight(int k) const;

 private:
  DomainPtr dom_;
  int nr_, ns_;
  double dr_, dphi_, s1_, c2_, hmin_, R0_;
  std::uint64_t stamp_;
  std::vector<Vec2> x_, nu_, tan_;
  std::vector<Mat2> K_, M_;
  std::vector<double> jdet_, w_;
  std::vector<double> Re_, Ro_, Re1_, Ro1_, Re2_, Ro2_;  // per column
};

VectorField gradient(const CurvilinearGrid& g, const ScalarField& f);
MatrixField hessian(const CurvilinearGrid& g, const ScalarField& f);
double integrate(const CurvilinearGrid& g, const ScalarField& f);
// derivative along d at boundary column j; d must not be tangent to the boundary
double directional_derivative_at_boundary(const CurvilinearGrid& g, const ScalarField& f, int j,
                                          const Vec2& d, double floor = 1e-3);

}  // namespace potflow
