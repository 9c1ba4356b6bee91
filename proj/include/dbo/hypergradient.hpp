#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dbo/problem.hpp"
#include "dbo/rng.hpp"

namespace dbo {

// Constants derived from ProblemConstants:
//   l_f   = (l_fx + l_fy*c_gxy/mu + c_fy*(l_gxy/mu + l_gyy*c_gxy/mu^2))^2
//   l_ell = (sqrt(l_f) + sqrt(l_f)*c_gxy/mu)^2
//   l_y   = (c_gxy/mu)^2
//   l_kd^2 = 2*l_fx^2 + 6*c_gxy^2*l_fy^2/mu^2 + 6*c_fy^2*l_gxy^2/mu^2
//            + 6*c_gxy^2*c_fy^2*l_gyy^2/mu^4
//   l_ks^2(K) = 2*l_fx^2 + (6*c_gxy^2*l_fy^2 + 6*c_fy^2*l_gxy^2)*K/(2*mu*L - mu^2)
//               + 6*c_gxy^2*c_fy^2*l_gyy^2*K^4/L^4
// l_k is l_kd in deterministic mode and max(l_kd, l_ks(K)) when a Neumann
// depth K is supplied.
struct DerivedConstants {
  double l_f = 0, l_ell = 0, l_y = 0;
  double l_kd = 0;
  double l_ks = 0;  // 0 when no K was supplied
  double l_k = 0;
};

DerivedConstants derived_constants(const ProblemConstants& c, std::optional<int> neumann_k = {});

// (c_gxy*c_fy/mu) * (1 - mu/L)^K: how far the expectation of the randomized
// estimator below can sit from the exact correction term.
double bias_bound(const ProblemConstants& c, int neumann_k);

// grad_x f_i - hess_xy g_i * hess_yy g_i^{-1} * grad_y f_i with full-batch
// oracles and a dense Cholesky solve for the inverse.
Vector hypergrad_full(const BilevelProblem& problem, int agent, const Vector& x, const Vector& y);

// (1/m) * sum_i of the exact local gradient at the inner optimum:
// hypergrad_full evaluated at y = y*_i(xbar).
Vector true_global_grad(const BilevelProblem& problem, const Vector& xbar);
Vector true_local_grad(const BilevelProblem& problem, int agent, const Vector& x);

// One draw of the randomized truncated-inverse estimator, reusable at several
// iterates (the variance-reduced updates difference two evaluations under the
// same draw). depth is uniform on {0, .., K-1}; curvature_samples holds the
// depth indices actually consumed.
struct HypergradSample {
  int outer_sample = 0;              // xi^0: grad_x f and grad_y f
  int cross_sample = 0;              // zeta^0: cross Hessian
  int depth = 0;                     // k(K)
  std::vector<int> curvature_samples;  // zeta^1 .. zeta^k
};

// Draw order per call: xi^0, zeta^0, k, then zeta^1..zeta^k.
HypergradSample draw_hypergrad_sample(int n, int neumann_k, CounterRng& rng);

// grad_x f(xi^0) - (K/L) * hess_xy g(zeta^0) * prod_{j=1..k} (I - hess_yy g(zeta^j)/L)
//   * grad_y f(xi^0); the product is empty when k = 0.
Vector eval_hypergrad_sample(const BilevelProblem& problem, int agent, const Vector& x,
                             const Vector& y, int neumann_k, const HypergradSample& sample);

Vector hypergrad_stoch(const BilevelProblem& problem, int agent, const Vector& x, const Vector& y,
                       int neumann_k, CounterRng& rng);

// Analytic step-size bounds. Each clause of the published conditions is
// evaluated verbatim and individually inspectable; the returned step sizes
// take the min over clauses that evaluate to a finite positive number (the
// lists are dimensionally heterogeneous, so degenerate constants can produce
// 0, inf or nan entries, which cannot bind).
enum class StepsizeRule { gradient_tracking, variance_reduced };

struct Clause {
  std::string expr;
  double value;
};

struct StepSizes {
  double alpha = 0, beta = 0;
  double r = 0;  // (1/3) * beta * mu*L/(mu+L)
};

std::vector<Clause> beta_clauses(const DerivedConstants& dc, const ProblemConstants& c,
                                 double lambda, int m, StepsizeRule rule);
std::vector<Clause> alpha_clauses(const DerivedConstants& dc, const ProblemConstants& c,
                                  double lambda, int m, StepsizeRule rule, double beta, double r);
StepSizes stepsize_bounds(const DerivedConstants& dc, const ProblemConstants& c, double lambda,
                          int m, StepsizeRule rule);

}  // namespace dbo
