#pragma once

#include <functional>

#include "dbo/problem.hpp"

namespace dbotest {

using dbo::Batch;
using dbo::Matrix;
using dbo::Vector;

// Single-agent, single-sample scalar instance:
//   g = 0.5 a y^2 - y (b x + c),  f = 0.5 (cc x)^2 + 0.5 (y - e)^2 + gamma sin(x)
inline dbo::SyntheticQuadratic scalar_instance(double a, double b, double c, double cc, double e,
                                               double mu, double l, double gamma = 0.0) {
  dbo::SyntheticQuadratic::Sample s;
  s.a = Matrix::Constant(1, 1, a);
  s.b = Matrix::Constant(1, 1, b);
  s.c = Vector::Constant(1, c);
  s.cc = Matrix::Constant(1, 1, cc);
  s.e = Vector::Constant(1, e);
  return dbo::SyntheticQuadratic(mu, l, gamma, {{s}});
}

// Central finite differences with per-coordinate steps h (1 + |x_k|).
inline Vector fd_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                      double h = 1e-5) {
  Vector g(x.size());
  for (int k = 0; k < x.size(); ++k) {
    const double step = h * (1.0 + std::abs(x(k)));
    Vector hi = x, lo = x;
    hi(k) += step;
    lo(k) -= step;
    g(k) = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

// Forwards every oracle of a SyntheticQuadratic but keeps the base-class
// iterative inner solve, to exercise the generic path.
class GenericView : public dbo::BilevelProblem {
 public:
  explicit GenericView(const dbo::SyntheticQuadratic& p)
      : BilevelProblem(p.num_agents(), p.num_samples(), p.outer_dim(), p.inner_dim(),
                       p.mu_strong(), p.inner_lip()),
        p_(p) {}
  double outer_value(int a, const Vector& x, const Vector& y, Batch b) const override {
    return p_.outer_value(a, x, y, b);
  }
  double inner_value(int a, const Vector& x, const Vector& y, Batch b) const override {
    return p_.inner_value(a, x, y, b);
  }
  void outer_grads(int a, const Vector& x, const Vector& y, Batch b, Vector& gx,
                   Vector& gy) const override {
    p_.outer_grads(a, x, y, b, gx, gy);
  }
  Vector inner_grad(int a, const Vector& x, const Vector& y, Batch b) const override {
    return p_.inner_grad(a, x, y, b);
  }
  Matrix hess_yy(int a, const Vector& x, const Vector& y, Batch b) const override {
    return p_.hess_yy(a, x, y, b);
  }
  Vector hvp_xy(int a, const Vector& x, const Vector& y, Batch b, const Vector& v) const override {
    return p_.hvp_xy(a, x, y, b, v);
  }
  dbo::ProblemConstants constants(double r) const override { return p_.constants(r); }

 private:
  const dbo::SyntheticQuadratic& p_;
};

}  // namespace dbotest
