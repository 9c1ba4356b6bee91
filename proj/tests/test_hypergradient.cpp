#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dbo/errors.hpp"
#include "dbo/hypergradient.hpp"
#include "dbo/problem.hpp"
#include "dbo/rng.hpp"
#include "helpers.hpp"

using namespace dbo;
using dbotest::fd_grad;
using dbotest::scalar_instance;

namespace {

Vector random_vec(int d, CounterRng& rng, double scale = 1.0) {
  Vector v(d);
  for (int k = 0; k < d; ++k) v(k) = scale * rng.normal();
  return v;
}

// Expectation of the randomized estimator on a single-sample problem, by
// enumerating the truncation index k = 0..K-1 (each with probability 1/K):
//   E = gx - (K/L) * Hxy * (1/K) * sum_k (I - A/L)^k * gy
Vector enumerate_expectation(const SyntheticQuadratic& p, const Vector& x, const Vector& y,
                             int K) {
  REQUIRE(p.num_samples() == 1);
  const double L = p.inner_lip();
  const auto batch = p.full_batch();
  Vector gx, gy;
  p.outer_grads(0, x, y, batch, gx, gy);
  const Matrix a = p.hess_yy(0, x, y, batch);
  const Matrix shrink = Matrix::Identity(a.rows(), a.cols()) - a / L;
  Vector sum = Vector::Zero(y.size());
  Vector term = gy;
  for (int k = 0; k < K; ++k) {
    sum += term;
    term = shrink * term;
  }
  return gx - (1.0 / L) * p.hvp_xy(0, x, y, batch, sum);
}

}  // namespace

TEST_CASE("scalar sanity: estimate at the inner optimum equals the exact gradient") {
  // g = y^2/2 - xy, f = (x^2 + y^2)/2 has y*(x) = x and d/dx f(x, y*(x)) = 2x
  auto p = scalar_instance(1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0);
  for (const double x : {-2.0, 0.3, 1.7}) {
    const Vector xv = Vector::Constant(1, x);
    const Vector ystar = p.inner_opt(0, xv);
    CHECK(ystar(0) == doctest::Approx(x).epsilon(1e-14));
    CHECK(hypergrad_full(p, 0, xv, ystar)(0) == doctest::Approx(2.0 * x).epsilon(1e-13));
    CHECK(true_global_grad(p, xv)(0) == doctest::Approx(2.0 * x).epsilon(1e-13));
  }
}

TEST_CASE("correction term vanishes when grad_y f = 0") {
  auto p = scalar_instance(1.5, 0.8, 0.2, 2.0, 0.6, 1.0, 2.0);
  const Vector x = Vector::Constant(1, 0.9);
  const Vector y = Vector::Constant(1, 0.6);  // y = e
  Vector gx, gy;
  p.outer_grads(0, x, y, p.full_batch(), gx, gy);
  CHECK(gy.norm() == 0.0);
  CHECK((hypergrad_full(p, 0, x, y) - gx).norm() == 0.0);
}

TEST_CASE("full estimate at y*(x) matches finite differences of the local objective") {
  auto p = SyntheticQuadratic::random(21, 2, 6, 5, 5, 1.0, 2.0, 0.2);
  CounterRng rng(90, RngDomain::harness, 0);
  for (int agent = 0; agent < 2; ++agent) {
    const Vector x = random_vec(5, rng);
    const Vector grad = hypergrad_full(p, agent, x, p.inner_opt(agent, x));
    const Vector fd = fd_grad(
        [&](const Vector& xx) {
          return p.outer_value(agent, xx, p.inner_opt(agent, xx), p.full_batch());
        },
        x);
    CHECK((grad - fd).norm() / fd.norm() <= 1e-5);
    CHECK((grad - true_local_grad(p, agent, x)).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("global gradient vanishes at the analytic minimizer (gamma = 0)") {
  auto p = SyntheticQuadratic::random(22, 3, 5, 4, 4, 1.0, 2.0, 0.0);
  // Normal equations assembled independently of the gradient code:
  //   grad ell_i(x) = (Q_i + S_i' S_i) x + S_i'(Abar^{-1} cbar_i - ebar_i)
  Matrix h = Matrix::Zero(4, 4);
  Vector b = Vector::Zero(4);
  for (int i = 0; i < 3; ++i) {
    Matrix q = Matrix::Zero(4, 4);
    Vector ebar = Vector::Zero(4);
    for (int j = 0; j < 5; ++j) {
      q += p.sample(i, j).cc.transpose() * p.sample(i, j).cc;
      ebar += p.sample(i, j).e;
    }
    q /= 5.0;
    ebar /= 5.0;
    const Matrix s = p.mean_a(i).ldlt().solve(p.mean_b(i));
    h += q + s.transpose() * s;
    b += s.transpose() * (p.mean_a(i).ldlt().solve(p.mean_c(i)) - ebar);
  }
  const Vector xstar = h.ldlt().solve(-b);
  CHECK(true_global_grad(p, xstar).norm() <= 1e-8);
}

TEST_CASE("estimate error is controlled by the inner error (L_f bound)") {
  auto p = SyntheticQuadratic::random(23, 2, 4, 3, 4, 1.0, 2.0, 0.3);
  const auto c = p.constants(50.0);
  const auto dc = derived_constants(c);
  CounterRng rng(91, RngDomain::harness, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const int agent = static_cast<int>(rng.uniform_index(2));
    const Vector x = random_vec(3, rng), y = random_vec(4, rng, 2.0);
    const Vector ystar = p.inner_opt(agent, x);
    const double lhs = (hypergrad_full(p, agent, x, y) - true_local_grad(p, agent, x)).squaredNorm();
    CHECK(lhs <= dc.l_f * (ystar - y).squaredNorm() * (1.0 + 1e-9) + 1e-12);
  }
}

TEST_CASE("K = 1 draws are the depth-0 formula") {
  auto p = scalar_instance(1.0, 0.7, 0.4, 1.0, -0.3, 1.0, 2.0);
  const Vector x = Vector::Constant(1, 0.5), y = Vector::Constant(1, 1.1);
  CounterRng rng(92, RngDomain::harness, 0);
  Vector gx, gy;
  p.outer_grads(0, x, y, p.full_batch(), gx, gy);
  const Vector expect = gx - (1.0 / 2.0) * p.hvp_xy(0, x, y, p.full_batch(), gy);
  for (int i = 0; i < 5; ++i)
    CHECK((hypergrad_stoch(p, 0, x, y, 1, rng) - expect).norm() == 0.0);
}

TEST_CASE("enumerated expectation: exact inverse when A = L, geometric bias otherwise") {
  const Vector x = Vector::Constant(1, 0.8), y = Vector::Constant(1, -0.4);
  // A = L: the shrink factor is zero, so truncation is exact for every K
  auto exact = scalar_instance(2.0, 1.0, 0.1, 1.0, 0.9, 1.0, 2.0);
  for (int K = 1; K <= 6; ++K)
    CHECK((enumerate_expectation(exact, x, y, K) - hypergrad_full(exact, 0, x, y)).norm() <=
          1e-15);

  // mu <= A < L: bias shrinks geometrically with ratio exactly (1 - A/L)
  auto biased = scalar_instance(1.25, 1.0, 0.1, 1.0, 0.9, 1.0, 2.0);
  const Vector full = hypergrad_full(biased, 0, x, y);
  double prev = 0.0;
  for (int K = 1; K <= 8; ++K) {
    const double bias = (enumerate_expectation(biased, x, y, K) - full).norm();
    const auto c = biased.constants(2.0);
    CHECK(bias <= bias_bound(c, K) + 1e-15);
    if (K > 1) CHECK(bias / prev == doctest::Approx(1.0 - 1.25 / 2.0).epsilon(1e-12));
    prev = bias;
  }
}

TEST_CASE("monte carlo mean stays within three standard errors of the enumeration") {
  auto p = scalar_instance(1.25, 1.0, 0.3, 1.0, 0.9, 1.0, 2.0);
  const Vector x = Vector::Constant(1, 0.8), y = Vector::Constant(1, -0.4);
  const int K = 4, n_draws = 100000;
  CounterRng rng(93, RngDomain::harness, 0);
  double mean = 0, m2 = 0;
  for (int i = 0; i < n_draws; ++i) {
    const double v = hypergrad_stoch(p, 0, x, y, K, rng)(0);
    mean += v;
    m2 += v * v;
  }
  mean /= n_draws;
  const double var = m2 / n_draws - mean * mean;
  const double se = std::sqrt(var / n_draws);
  const double expect = enumerate_expectation(p, x, y, K)(0);
  CHECK(std::abs(mean - expect) <= 3.0 * se);
  CHECK(std::abs(expect - hypergrad_full(p, 0, x, y)(0)) <=
        bias_bound(p.constants(2.0), K));
  CHECK_THROWS_AS(hypergrad_stoch(p, 0, x, y, 0, rng), ConfigError);
}

TEST_CASE("bias bound closed forms") {
  ProblemConstants c{1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  CHECK(bias_bound(c, 3) == doctest::Approx(0.125).epsilon(1e-15));
  c.c_gxy = 0.0;
  for (int k = 0; k < 5; ++k) CHECK(bias_bound(c, k) == 0.0);
  ProblemConstants tight{2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  CHECK(bias_bound(tight, 1) == 0.0);
  CHECK(bias_bound(tight, 5) == 0.0);
}

TEST_CASE("derived constants closed forms") {
  ProblemConstants c{1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  const auto dc = derived_constants(c);
  CHECK(dc.l_f == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(dc.l_y == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(dc.l_kd * dc.l_kd == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(dc.l_ell == doctest::Approx(16.0).epsilon(1e-14));  // (sqrt(4) + sqrt(4)*1)^2
  CHECK(dc.l_k == dc.l_kd);

  ProblemConstants uncoupled = c;
  uncoupled.c_gxy = 0.0;
  const auto dcu = derived_constants(uncoupled);
  CHECK(dcu.l_f == doctest::Approx(1.0).epsilon(1e-15));  // l_fx^2
  CHECK(dcu.l_y == 0.0);

  // the stochastic constant grows with K and dominates via max
  double prev = 0.0;
  for (int k = 1; k <= 10; ++k) {
    const auto d = derived_constants(c, k);
    CHECK(d.l_ks >= prev);
    CHECK(d.l_k == std::max(d.l_kd, d.l_ks));
    prev = d.l_ks;
  }
}

TEST_CASE("step-size bounds: membership and limiting behavior") {
  ProblemConstants c{1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  const auto dc = derived_constants(c);
  const auto s = stepsize_bounds(dc, c, 1.0 / 3.0, 5, StepsizeRule::gradient_tracking);
  CHECK(s.alpha <= 1.0);  // "1" is itself a clause
  CHECK(s.alpha > 0.0);
  CHECK(s.beta > 0.0);
  CHECK(s.r > 0.0);
  CHECK(s.r <= 1.0);
  const auto tight = stepsize_bounds(dc, c, 0.999999, 5, StepsizeRule::gradient_tracking);
  CHECK(tight.alpha < s.alpha);
  CHECK(tight.alpha < 1e-10);
}

TEST_CASE("step-size fixture, cross-checked clause by clause") {
  // mu=1, L=2, m=5, lambda=1/3, synthetic constants as above.
  ProblemConstants c{1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  const auto dc = derived_constants(c);
  const double mu = 1.0, L = 2.0, lam = 1.0 / 3.0, m = 5.0;
  const double l_f = 4.0, l_ell = 16.0, l_y = 1.0, l_k = std::sqrt(8.0);
  const double gap = 1.0 - lam;

  const double beta = std::min(3.0 * (mu + L) / (mu * L), 1.0 / (mu + L));
  const double r = beta * mu * L / (3.0 * (mu + L));
  double alpha = std::min({1.0 / (4.0 * l_ell),
                           std::sqrt(gap / (2.0 * m)) / (4.0 * l_k),
                           1.0 / (m * gap),
                           gap * gap / (32.0 * l_k * l_k),
                           m * gap / (4.0 * l_ell),
                           9.0 * r * r * m * gap / (32.0 * l_y * l_y * (1.0 + 1.0 / r) * l_f * l_f),
                           (1.0 - r) * (1.0 + r) * r * gap * gap /
                               (32.0 * l_y * l_y * (mu + L) * l_k * l_k * beta),
                           gap / (4.0 * l_k),
                           1.0});

  const auto s = stepsize_bounds(dc, c, lam, 5, StepsizeRule::gradient_tracking);
  CHECK(s.beta == doctest::Approx(beta).epsilon(1e-15));
  CHECK(s.r == doctest::Approx(r).epsilon(1e-15));
  CHECK(s.alpha == doctest::Approx(alpha).epsilon(1e-15));
  // Frozen values of the fixture.
  CHECK(s.beta == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(s.r == doctest::Approx(2.0 / 27.0).epsilon(1e-15));
  CHECK(s.alpha == doctest::Approx(2.21725556974599107e-05).epsilon(1e-12));

  // The variance-reduced rule needs K through l_k; it evaluates and stays
  // positive, including the dimensionally odd clauses.
  const auto dcs = derived_constants(c, 6);
  const auto sv = stepsize_bounds(dcs, c, lam, 5, StepsizeRule::variance_reduced);
  CHECK(sv.alpha > 0.0);
  CHECK(sv.beta > 0.0);
  CHECK(alpha_clauses(dcs, c, lam, 5, StepsizeRule::variance_reduced, sv.beta, sv.r).size() == 15);
  CHECK(beta_clauses(dcs, c, lam, 5, StepsizeRule::variance_reduced).size() == 7);
}

TEST_CASE("degenerate coupling leaves the bounds usable") {
  // c_gxy = 0 makes L_y = 0; clauses with L_y^2 denominators blow up to inf
  // and clauses that vanish are skipped, so the min stays positive.
  ProblemConstants c{1.0, 2.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  const auto dc = derived_constants(c, 4);
  const auto s1 = stepsize_bounds(dc, c, 0.25, 4, StepsizeRule::gradient_tracking);
  CHECK(s1.alpha > 0.0);
  const auto s2 = stepsize_bounds(dc, c, 0.25, 4, StepsizeRule::variance_reduced);
  CHECK(s2.alpha > 0.0);
}
