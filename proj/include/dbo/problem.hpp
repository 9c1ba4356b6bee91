#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Batch = std::span<const int>;

// Smoothness/curvature constants of a problem instance. mu_g/l_g bound the
// inner Hessian spectrum; c_gxy bounds the cross second derivative norm
// (stored unsquared, as it enters every derived constant linearly); c_fy is a
// region-restricted bound on the inner gradient of the outer objective.
struct ProblemConstants {
  double mu_g = 0, l_g = 0;
  double c_gxy = 0, c_fy = 0;
  double l_fx = 0, l_fy = 0;
  double l_gxy = 0, l_gyy = 0;
};

// Per-agent, per-sample bilevel problem: outer objective f_i(x, y; xi_ij) and
// inner objective g_i(x, y; xi_ij), the latter mu_g-strongly convex in y for
// every sample. All oracles take a batch of sample indices and return the
// batch mean; passing all n indices gives the full local quantity.
//
// Instances are immutable after construction and every oracle is const and
// re-entrant, so agents may call them concurrently.
class BilevelProblem {
 public:
  BilevelProblem(int m, int n, int d1, int d2, double mu_g, double l_g);
  virtual ~BilevelProblem() = default;

  int num_agents() const { return m_; }
  int num_samples() const { return n_; }
  int outer_dim() const { return d1_; }
  int inner_dim() const { return d2_; }
  double mu_strong() const { return mu_g_; }
  double inner_lip() const { return l_g_; }
  Batch full_batch() const { return Batch(all_samples_); }

  virtual double outer_value(int agent, const Vector& x, const Vector& y, Batch batch) const = 0;
  virtual double inner_value(int agent, const Vector& x, const Vector& y, Batch batch) const = 0;
  virtual void outer_grads(int agent, const Vector& x, const Vector& y, Batch batch, Vector& gx,
                           Vector& gy) const = 0;
  virtual Vector inner_grad(int agent, const Vector& x, const Vector& y, Batch batch) const = 0;
  // Batch-mean inner Hessian in y, as a dense matrix (factored by callers).
  virtual Matrix hess_yy(int agent, const Vector& x, const Vector& y, Batch batch) const = 0;
  virtual Vector hvp_yy(int agent, const Vector& x, const Vector& y, Batch batch,
                        const Vector& v) const;
  // Batch-mean cross Hessian times an inner vector; outputs live in outer
  // space. Orientation: d/dx of the inner gradient, transposed.
  virtual Vector hvp_xy(int agent, const Vector& x, const Vector& y, Batch batch,
                        const Vector& v) const = 0;

  // argmin_y g_i(x, y). Default: gradient descent with step 2/(mu+L) down to
  // |grad| <= 1e-10; concrete families may override with a closed form.
  virtual Vector inner_opt(int agent, const Vector& x) const;

  virtual ProblemConstants constants(double region_radius) const = 0;

 protected:
  void check_agent(int agent) const;
  void check_batch(Batch batch) const;

 private:
  int m_, n_, d1_, d2_;
  double mu_g_, l_g_;
  std::vector<int> all_samples_;
};

// Quadratic inner / quadratic-plus-sine outer family with closed-form inner
// solutions:
//   g_i(x, y; xi_ij) = 0.5 y'A_ij y - y'(B_ij x + c_ij)
//   f_i(x, y; xi_ij) = 0.5 |C_ij x|^2 + 0.5 |y - e_ij|^2 + gamma * sum_k sin(x_k)
// Every A_ij is symmetric with spectrum inside [mu_g, l_g] (validated at
// construction), so y*_i(x) = Abar_i^{-1} (Bbar_i x + cbar_i) with agent means
// Abar/Bbar/cbar. gamma > 0 makes the outer objective genuinely nonconvex
// while keeping its gradient Lipschitz.
class SyntheticQuadratic : public BilevelProblem {
 public:
  struct Sample {
    Matrix a;  // d2 x d2, symmetric, spectrum in [mu_g, l_g]
    Matrix b;  // d2 x d1
    Vector c;  // d2
    Matrix cc; // d1 x d1 (outer curvature factor)
    Vector e;  // d2
  };

  SyntheticQuadratic(double mu_g, double l_g, double gamma,
                     std::vector<std::vector<Sample>> samples);

  // Deterministic generation from (seed, m, n, d1, d2, mu_g, l_g, gamma).
  // Per sample: A = Q' diag(u) Q with u ~ U[mu_g, l_g] and Q a sign-fixed
  // orthogonal factor; B/c/e are an agent-level base plus per-sample noise
  // (agents are heterogeneous on purpose); C = I + small noise. Draw order is
  // fixed, so the tuple above replays the instance exactly.
  static SyntheticQuadratic random(std::uint64_t seed, int m, int n, int d1, int d2, double mu_g,
                                   double l_g, double gamma);

  double outer_value(int agent, const Vector& x, const Vector& y, Batch batch) const override;
  double inner_value(int agent, const Vector& x, const Vector& y, Batch batch) const override;
  void outer_grads(int agent, const Vector& x, const Vector& y, Batch batch, Vector& gx,
                   Vector& gy) const override;
  Vector inner_grad(int agent, const Vector& x, const Vector& y, Batch batch) const override;
  Matrix hess_yy(int agent, const Vector& x, const Vector& y, Batch batch) const override;
  Vector hvp_yy(int agent, const Vector& x, const Vector& y, Batch batch,
                const Vector& v) const override;
  Vector hvp_xy(int agent, const Vector& x, const Vector& y, Batch batch,
                const Vector& v) const override;
  Vector inner_opt(int agent, const Vector& x) const override;
  ProblemConstants constants(double region_radius) const override;

  double gamma() const { return gamma_; }
  const Sample& sample(int agent, int j) const { return samples_[agent][j]; }
  const Matrix& mean_a(int agent) const { return mean_a_[agent]; }
  const Matrix& mean_b(int agent) const { return mean_b_[agent]; }
  const Vector& mean_c(int agent) const { return mean_c_[agent]; }

  // Structured-text snapshot of the generation key, for exact replay. Only
  // generator-produced instances carry one.
  bool has_snapshot() const { return has_key_; }
  std::string snapshot() const;
  static SyntheticQuadratic from_snapshot(const std::string& text);

 private:
  double gamma_;
  std::vector<std::vector<Sample>> samples_;
  std::vector<Matrix> mean_a_, mean_b_;
  std::vector<Vector> mean_c_;
  std::vector<Eigen::LLT<Matrix>> mean_a_llt_;
  bool has_key_ = false;
  std::uint64_t key_seed_ = 0;
};

}  // namespace dbo
