#include "dbo/hypergradient.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "dbo/errors.hpp"

namespace dbo {

DerivedConstants derived_constants(const ProblemConstants& c, std::optional<int> neumann_k) {
  const double mu = c.mu_g;
  DerivedConstants dc;
  const double lf_lin =
      c.l_fx + c.l_fy * c.c_gxy / mu + c.c_fy * (c.l_gxy / mu + c.l_gyy * c.c_gxy / (mu * mu));
  dc.l_f = lf_lin * lf_lin;
  const double lell_lin = lf_lin + lf_lin * c.c_gxy / mu;
  dc.l_ell = lell_lin * lell_lin;
  dc.l_y = (c.c_gxy / mu) * (c.c_gxy / mu);
  dc.l_kd = std::sqrt(2.0 * c.l_fx * c.l_fx + 6.0 * c.c_gxy * c.c_gxy * c.l_fy * c.l_fy / (mu * mu) +
                      6.0 * c.c_fy * c.c_fy * c.l_gxy * c.l_gxy / (mu * mu) +
                      6.0 * c.c_gxy * c.c_gxy * c.c_fy * c.c_fy * c.l_gyy * c.l_gyy /
                          (mu * mu * mu * mu));
  dc.l_k = dc.l_kd;
  if (neumann_k) {
    const double k = static_cast<double>(*neumann_k);
    const double geo = k / (2.0 * mu * c.l_g - mu * mu);
    const double l4 = c.l_g * c.l_g * c.l_g * c.l_g;
    dc.l_ks = std::sqrt(2.0 * c.l_fx * c.l_fx +
                        (6.0 * c.c_gxy * c.c_gxy * c.l_fy * c.l_fy +
                         6.0 * c.c_fy * c.c_fy * c.l_gxy * c.l_gxy) *
                            geo +
                        6.0 * c.c_gxy * c.c_gxy * c.c_fy * c.c_fy * c.l_gyy * c.l_gyy * k * k * k *
                            k / l4);
    dc.l_k = std::max(dc.l_kd, dc.l_ks);
  }
  return dc;
}

double bias_bound(const ProblemConstants& c, int neumann_k) {
  if (neumann_k < 0) throw ConfigError("bias_bound: K must be nonnegative");
  return c.c_gxy * c.c_fy / c.mu_g * std::pow(1.0 - c.mu_g / c.l_g, neumann_k);
}

Vector hypergrad_full(const BilevelProblem& problem, int agent, const Vector& x, const Vector& y) {
  const Batch all = problem.full_batch();
  Vector gx, gy;
  problem.outer_grads(agent, x, y, all, gx, gy);
  Eigen::LLT<Matrix> llt(problem.hess_yy(agent, x, y, all));
  if (llt.info() != Eigen::Success)
    throw OracleError("hypergrad_full: inner Hessian is not positive definite");
  const Vector w = llt.solve(gy);
  return gx - problem.hvp_xy(agent, x, y, all, w);
}

Vector true_local_grad(const BilevelProblem& problem, int agent, const Vector& x) {
  return hypergrad_full(problem, agent, x, problem.inner_opt(agent, x));
}

Vector true_global_grad(const BilevelProblem& problem, const Vector& xbar) {
  Vector g = Vector::Zero(problem.outer_dim());
  for (int i = 0; i < problem.num_agents(); ++i) g += true_local_grad(problem, i, xbar);
  return g / static_cast<double>(problem.num_agents());
}

HypergradSample draw_hypergrad_sample(int n, int neumann_k, CounterRng& rng) {
  if (neumann_k < 1) throw ConfigError("Neumann depth K must be at least 1");
  HypergradSample s;
  s.outer_sample = static_cast<int>(rng.uniform_index(n));
  s.cross_sample = static_cast<int>(rng.uniform_index(n));
  s.depth = static_cast<int>(rng.uniform_index(neumann_k));
  s.curvature_samples.reserve(s.depth);
  for (int j = 0; j < s.depth; ++j)
    s.curvature_samples.push_back(static_cast<int>(rng.uniform_index(n)));
  return s;
}

Vector eval_hypergrad_sample(const BilevelProblem& problem, int agent, const Vector& x,
                             const Vector& y, int neumann_k, const HypergradSample& sample) {
  const double l_g = problem.inner_lip();
  const int one[1] = {sample.outer_sample};
  Vector gx, gy;
  problem.outer_grads(agent, x, y, Batch(one), gx, gy);
  Vector prod = gy;
  for (int zeta : sample.curvature_samples) {
    const int idx[1] = {zeta};
    prod -= problem.hvp_yy(agent, x, y, Batch(idx), prod) / l_g;
  }
  const int cross[1] = {sample.cross_sample};
  return gx - (static_cast<double>(neumann_k) / l_g) *
                  problem.hvp_xy(agent, x, y, Batch(cross), prod);
}

Vector hypergrad_stoch(const BilevelProblem& problem, int agent, const Vector& x, const Vector& y,
                       int neumann_k, CounterRng& rng) {
  const HypergradSample s = draw_hypergrad_sample(problem.num_samples(), neumann_k, rng);
  return eval_hypergrad_sample(problem, agent, x, y, neumann_k, s);
}

namespace {

// Entries that are not finite positive numbers cannot bind the min.
double min_over(const std::vector<Clause>& clauses) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& cl : clauses)
    if (std::isfinite(cl.value) && cl.value > 0.0) best = std::min(best, cl.value);
  return best;
}

}  // namespace

std::vector<Clause> beta_clauses(const DerivedConstants& dc, const ProblemConstants& c,
                                 double lambda, int /*m*/, StepsizeRule rule) {
  const double mu = c.mu_g, L = c.l_g, lk = dc.l_k, ly = dc.l_y;
  if (rule == StepsizeRule::gradient_tracking) {
    return {
        {"3(mu+L)/(mu L)", 3.0 * (mu + L) / (mu * L)},
        {"1/(mu+L)", 1.0 / (mu + L)},
    };
  }
  return {
      {"(1-lambda) mu L / (768 L_K^2 (mu+L))", (1.0 - lambda) * mu * L / (768.0 * lk * lk * (mu + L))},
      {"(1-lambda)(mu+L) / (4096 L_K^2)", (1.0 - lambda) * (mu + L) / (4096.0 * lk * lk)},
      {"3(mu+L)/(mu L)", 3.0 * (mu + L) / (mu * L)},
      {"L_y^2 mu L / (24 L_K^2 (mu+L))", ly * ly * mu * L / (24.0 * lk * lk * (mu + L))},
      {"(1-lambda)(mu+L) / (512 L_K^2)", (1.0 - lambda) * (mu + L) / (512.0 * lk * lk)},
      {"1/(2(mu+L))", 1.0 / (2.0 * (mu + L))},
      {"16/((1-lambda)(mu+L))", 16.0 / ((1.0 - lambda) * (mu + L))},
  };
}

std::vector<Clause> alpha_clauses(const DerivedConstants& dc, const ProblemConstants& c,
                                  double lambda, int m, StepsizeRule rule, double beta, double r) {
  const double mu = c.mu_g, L = c.l_g;
  const double lk = dc.l_k, ly = dc.l_y, lf = dc.l_f, lell = dc.l_ell;
  const double md = static_cast<double>(m);
  const double gap = 1.0 - lambda;
  if (rule == StepsizeRule::gradient_tracking) {
    return {
        {"1/(4 L_ell)", 1.0 / (4.0 * lell)},
        {"(1/(4 L_K)) sqrt((1-lambda)/(2m))", std::sqrt(gap / (2.0 * md)) / (4.0 * lk)},
        {"1/(m(1-lambda))", 1.0 / (md * gap)},
        {"(1-lambda)^2/(32 L_K^2)", gap * gap / (32.0 * lk * lk)},
        {"m(1-lambda)/(4 L_ell)", md * gap / (4.0 * lell)},
        {"9 r^2 m (1-lambda) / (32 L_y^2 (1+1/r) L_f^2)",
         9.0 * r * r * md * gap / (32.0 * ly * ly * (1.0 + 1.0 / r) * lf * lf)},
        {"(1-r)(1+r) r (1-lambda)^2 / (32 L_y^2 (mu+L) L_K^2 beta)",
         (1.0 - r) * (1.0 + r) * r * gap * gap / (32.0 * ly * ly * (mu + L) * lk * lk * beta)},
        {"(1-lambda)/(4 L_K)", gap / (4.0 * lk)},
        {"1", 1.0},
    };
  }
  return {
      {"1/(8 L_ell)", 1.0 / (8.0 * lell)},
      {"r/(16 m L_y^2 (r+1))", r / (16.0 * md * ly * ly * (r + 1.0))},
      {"1/(8 L_K sqrt(m))", 1.0 / (8.0 * lk * std::sqrt(md))},
      {"1/(m(1-lambda))", 1.0 / (md * gap)},
      {"(1-lambda)^2/(128 L_K^2)", gap * gap / (128.0 * lk * lk)},
      {"((1-lambda)/4) m/(L_ell + 16 L_K^2 m)", gap / 4.0 * md / (lell + 16.0 * lk * lk * md)},
      {"(1/(16 L_K)) sqrt((1-lambda)/m)", std::sqrt(gap / md) / (16.0 * lk)},
      {"288 r (1+r) m L_y^2 / ((1-lambda) L_f^2)",
       288.0 * r * (1.0 + r) * md * ly * ly / (gap * lf * lf)},
      {"r(1+r)(1-lambda) / (256 L_y^2 (mu+L) L_K^2 beta)",
       r * (1.0 + r) * gap / (256.0 * ly * ly * (mu + L) * lk * lk * beta)},
      {"r(1+r)(1-lambda)^2 / (512 L_y^2 (mu+L) L_K^2 beta)",
       r * (1.0 + r) * gap * gap / (512.0 * ly * ly * (mu + L) * lk * lk * beta)},
      {"sqrt(1-lambda)/(8 L_K)", std::sqrt(gap) / (8.0 * lk)},
      {"(1-lambda)^2/4", gap * gap / 4.0},
      {"32 L_y^2 / (16 (1+1/r) L_y^2)", 32.0 * ly * ly / (16.0 * (1.0 + 1.0 / r) * ly * ly)},
      {"sqrt((1-lambda)/(64 L_K^2))", std::sqrt(gap / (64.0 * lk * lk))},
      {"32 L_y^2 / (1-lambda)", 32.0 * ly * ly / gap},
  };
}

StepSizes stepsize_bounds(const DerivedConstants& dc, const ProblemConstants& c, double lambda,
                          int m, StepsizeRule rule) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in [0, 1)");
  StepSizes s;
  s.beta = min_over(beta_clauses(dc, c, lambda, m, rule));
  s.r = s.beta * c.mu_g * c.l_g / (3.0 * (c.mu_g + c.l_g));
  s.alpha = min_over(alpha_clauses(dc, c, lambda, m, rule, s.beta, s.r));
  if (!(s.alpha > 0.0) || !(s.beta > 0.0) || !std::isfinite(s.alpha) || !std::isfinite(s.beta))
    throw OracleError("step-size bounds degenerated to zero");
  return s;
}

}  // namespace dbo
