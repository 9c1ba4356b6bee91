#include "dbo/problem.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "dbo/errors.hpp"
#include "dbo/rng.hpp"

namespace dbo {

BilevelProblem::BilevelProblem(int m, int n, int d1, int d2, double mu_g, double l_g)
    : m_(m), n_(n), d1_(d1), d2_(d2), mu_g_(mu_g), l_g_(l_g) {
  if (m < 1 || n < 1 || d1 < 1 || d2 < 1) throw ConfigError("problem dimensions must be positive");
  if (!(mu_g > 0.0)) throw ConfigError("mu_g must be positive");
  if (l_g < mu_g) throw ConfigError("l_g must be at least mu_g");
  all_samples_.resize(n);
  std::iota(all_samples_.begin(), all_samples_.end(), 0);
}

void BilevelProblem::check_agent(int agent) const {
  if (agent < 0 || agent >= m_) throw std::out_of_range("agent index out of range");
}

void BilevelProblem::check_batch(Batch batch) const {
  if (batch.empty()) throw std::out_of_range("empty sample batch");
  for (int j : batch)
    if (j < 0 || j >= n_) throw std::out_of_range("sample index out of range");
}

Vector BilevelProblem::hvp_yy(int agent, const Vector& x, const Vector& y, Batch batch,
                              const Vector& v) const {
  return hess_yy(agent, x, y, batch) * v;
}

Vector BilevelProblem::inner_opt(int agent, const Vector& x) const {
  // Plain gradient descent; the inner problem is strongly convex so the step
  // 2/(mu+L) contracts with factor (L-mu)/(L+mu).
  const double step = 2.0 / (mu_strong() + inner_lip());
  Vector y = Vector::Zero(inner_dim());
  for (int it = 0; it < 100000; ++it) {
    const Vector grad = inner_grad(agent, x, y, full_batch());
    if (grad.norm() <= 1e-10) return y;
    y -= step * grad;
  }
  throw OracleError("inner solve did not reach |grad| <= 1e-10; strong convexity violated?");
}

// ---------------------------------------------------------------------------
// SyntheticQuadratic

SyntheticQuadratic::SyntheticQuadratic(double mu_g, double l_g, double gamma,
                                       std::vector<std::vector<Sample>> samples)
    : BilevelProblem(static_cast<int>(samples.size()),
                     samples.empty() ? 0 : static_cast<int>(samples.front().size()),
                     samples.empty() || samples.front().empty()
                         ? 0
                         : static_cast<int>(samples.front().front().b.cols()),
                     samples.empty() || samples.front().empty()
                         ? 0
                         : static_cast<int>(samples.front().front().a.rows()),
                     mu_g, l_g),
      gamma_(gamma),
      samples_(std::move(samples)) {
  if (gamma_ < 0.0) throw ConfigError("gamma must be nonnegative");
  const int d1 = outer_dim(), d2 = inner_dim(), n = num_samples();
  for (const auto& agent : samples_) {
    if (static_cast<int>(agent.size()) != n) throw ConfigError("ragged sample lists");
    for (const auto& s : agent) {
      if (s.a.rows() != d2 || s.a.cols() != d2 || s.b.rows() != d2 || s.b.cols() != d1 ||
          s.c.size() != d2 || s.cc.rows() != d1 || s.cc.cols() != d1 || s.e.size() != d2)
        throw ConfigError("sample matrix dimensions are inconsistent");
      if ((s.a - s.a.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw ConfigError("inner curvature matrix is not symmetric");
      Eigen::SelfAdjointEigenSolver<Matrix> es(s.a);
      if (es.eigenvalues()(0) < mu_g - 1e-8 || es.eigenvalues()(d2 - 1) > l_g + 1e-8)
        throw ConfigError("inner curvature spectrum leaves [mu_g, l_g]");
    }
  }
  mean_a_.reserve(num_agents());
  mean_b_.reserve(num_agents());
  mean_c_.reserve(num_agents());
  for (const auto& agent : samples_) {
    Matrix a = Matrix::Zero(d2, d2), b = Matrix::Zero(d2, d1);
    Vector c = Vector::Zero(d2);
    for (const auto& s : agent) {
      a += s.a;
      b += s.b;
      c += s.c;
    }
    mean_a_.push_back(a / n);
    mean_b_.push_back(b / n);
    mean_c_.push_back(c / n);
    mean_a_llt_.emplace_back(mean_a_.back());
    if (mean_a_llt_.back().info() != Eigen::Success)
      throw OracleError("mean inner curvature is not positive definite");
  }
}

namespace {

Matrix random_orthogonal(int d, CounterRng& rng) {
  Matrix g(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  // Fix signs so the factorization (hence the draw) is unique.
  for (int c = 0; c < d; ++c)
    if (qr.matrixQR()(c, c) < 0.0) q.col(c) = -q.col(c);
  return q;
}

Matrix gaussian(int rows, int cols, double scale, CounterRng& rng) {
  Matrix g(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g(r, c) = scale * rng.normal();
  return g;
}

}  // namespace

SyntheticQuadratic SyntheticQuadratic::random(std::uint64_t seed, int m, int n, int d1, int d2,
                                              double mu_g, double l_g, double gamma) {
  CounterRng rng(seed, RngDomain::problem, 0);
  const double b_base_scale = 0.8 / std::sqrt(static_cast<double>(d2));
  const double b_noise_scale = 0.2 / std::sqrt(static_cast<double>(d2));
  const double c_scale = 1.0 / std::sqrt(static_cast<double>(d1));
  std::vector<std::vector<Sample>> samples(m);
  for (int i = 0; i < m; ++i) {
    const Matrix b_base = gaussian(d2, d1, b_base_scale, rng);
    const Vector c_base = gaussian(d2, 1, 1.0, rng);
    const Vector e_base = gaussian(d2, 1, 1.0, rng);
    samples[i].reserve(n);
    for (int j = 0; j < n; ++j) {
      Sample s;
      const Matrix q = random_orthogonal(d2, rng);
      Vector lam(d2);
      for (int k = 0; k < d2; ++k) lam(k) = rng.uniform(mu_g, l_g);
      s.a = q.transpose() * lam.asDiagonal() * q;
      s.a = 0.5 * (s.a + s.a.transpose()).eval();
      s.b = b_base + gaussian(d2, d1, b_noise_scale, rng);
      s.c = c_base + gaussian(d2, 1, 0.3, rng);
      s.e = e_base + gaussian(d2, 1, 0.3, rng);
      s.cc = Matrix::Identity(d1, d1) + gaussian(d1, d1, 0.2 * c_scale, rng);
      samples[i].push_back(std::move(s));
    }
  }
  SyntheticQuadratic problem(mu_g, l_g, gamma, std::move(samples));
  if (problem.num_agents() != m || problem.num_samples() != n || problem.outer_dim() != d1 ||
      problem.inner_dim() != d2)
    throw ConfigError("generator dimensions are inconsistent");
  problem.has_key_ = true;
  problem.key_seed_ = seed;
  return problem;
}

double SyntheticQuadratic::outer_value(int agent, const Vector& x, const Vector& y,
                                       Batch batch) const {
  check_agent(agent);
  check_batch(batch);
  double acc = 0.0;
  for (int j : batch) {
    const Sample& s = samples_[agent][j];
    acc += 0.5 * (s.cc * x).squaredNorm() + 0.5 * (y - s.e).squaredNorm();
  }
  acc /= static_cast<double>(batch.size());
  return acc + gamma_ * x.array().sin().sum();
}

double SyntheticQuadratic::inner_value(int agent, const Vector& x, const Vector& y,
                                       Batch batch) const {
  check_agent(agent);
  check_batch(batch);
  double acc = 0.0;
  for (int j : batch) {
    const Sample& s = samples_[agent][j];
    acc += 0.5 * y.dot(s.a * y) - y.dot(s.b * x + s.c);
  }
  return acc / static_cast<double>(batch.size());
}

void SyntheticQuadratic::outer_grads(int agent, const Vector& x, const Vector& y, Batch batch,
                                     Vector& gx, Vector& gy) const {
  check_agent(agent);
  check_batch(batch);
  gx = Vector::Zero(outer_dim());
  gy = Vector::Zero(inner_dim());
  for (int j : batch) {
    const Sample& s = samples_[agent][j];
    gx += s.cc.transpose() * (s.cc * x);
    gy += y - s.e;
  }
  gx /= static_cast<double>(batch.size());
  gy /= static_cast<double>(batch.size());
  gx += gamma_ * x.array().cos().matrix();
}

Vector SyntheticQuadratic::inner_grad(int agent, const Vector& x, const Vector& y,
                                      Batch batch) const {
  check_agent(agent);
  check_batch(batch);
  Vector g = Vector::Zero(inner_dim());
  for (int j : batch) {
    const Sample& s = samples_[agent][j];
    g += s.a * y - s.b * x - s.c;
  }
  return g / static_cast<double>(batch.size());
}

Matrix SyntheticQuadratic::hess_yy(int agent, const Vector&, const Vector&, Batch batch) const {
  check_agent(agent);
  check_batch(batch);
  if (batch.size() == static_cast<std::size_t>(num_samples())) return mean_a_[agent];
  Matrix h = Matrix::Zero(inner_dim(), inner_dim());
  for (int j : batch) h += samples_[agent][j].a;
  return h / static_cast<double>(batch.size());
}

Vector SyntheticQuadratic::hvp_yy(int agent, const Vector&, const Vector&, Batch batch,
                                  const Vector& v) const {
  check_agent(agent);
  check_batch(batch);
  if (v.size() != inner_dim()) throw std::invalid_argument("hvp_yy: vector dimension mismatch");
  Vector out = Vector::Zero(inner_dim());
  for (int j : batch) out += samples_[agent][j].a * v;
  return out / static_cast<double>(batch.size());
}

Vector SyntheticQuadratic::hvp_xy(int agent, const Vector&, const Vector&, Batch batch,
                                  const Vector& v) const {
  check_agent(agent);
  check_batch(batch);
  if (v.size() != inner_dim()) throw std::invalid_argument("hvp_xy: vector dimension mismatch");
  Vector out = Vector::Zero(outer_dim());
  for (int j : batch) out -= samples_[agent][j].b.transpose() * v;
  return out / static_cast<double>(batch.size());
}

Vector SyntheticQuadratic::inner_opt(int agent, const Vector& x) const {
  check_agent(agent);
  if (x.size() != outer_dim()) throw std::invalid_argument("inner_opt: x dimension mismatch");
  return mean_a_llt_[agent].solve(mean_b_[agent] * x + mean_c_[agent]);
}

ProblemConstants SyntheticQuadratic::constants(double region_radius) const {
  if (!(region_radius > 0.0)) throw ConfigError("region_radius must be positive");
  ProblemConstants c;
  c.mu_g = mu_strong();
  c.l_g = inner_lip();
  c.l_gxy = 0.0;  // cross Hessian is constant in (x, y)
  c.l_gyy = 0.0;
  c.l_fy = 1.0;
  for (int i = 0; i < num_agents(); ++i)
    c.c_gxy = std::max(c.c_gxy, mean_b_[i].operatorNorm());
  double e_max = 0.0, cc_max = 0.0;
  for (const auto& agent : samples_)
    for (const auto& s : agent) {
      e_max = std::max(e_max, s.e.norm());
      cc_max = std::max(cc_max, (s.cc.transpose() * s.cc).operatorNorm());
    }
  c.c_fy = region_radius + e_max;
  c.l_fx = cc_max + gamma_;
  return c;
}

std::string SyntheticQuadratic::snapshot() const {
  if (!has_key_) throw ConfigError("only generator-produced instances can be snapshotted");
  nlohmann::json j{{"family", "synthetic_quadratic"},
                   {"seed", key_seed_},
                   {"m", num_agents()},
                   {"n", num_samples()},
                   {"d1", outer_dim()},
                   {"d2", inner_dim()},
                   {"mu_g", mu_strong()},
                   {"l_g", inner_lip()},
                   {"gamma", gamma_}};
  return j.dump(2);
}

SyntheticQuadratic SyntheticQuadratic::from_snapshot(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("family", "") != std::string("synthetic_quadratic"))
    throw ConfigError("snapshot: unknown problem family");
  return random(j.at("seed").get<std::uint64_t>(), j.at("m").get<int>(), j.at("n").get<int>(),
                j.at("d1").get<int>(), j.at("d2").get<int>(), j.at("mu_g").get<double>(),
                j.at("l_g").get<double>(), j.at("gamma").get<double>());
}

}  // namespace dbo
