#include "dbo/metrics.hpp"

#include <algorithm>
#include <limits>

#include "dbo/hypergradient.hpp"
#include "dbo/optimizers.hpp"

namespace dbo {

Vector mean_x(const NetworkState& state) {
  Vector xbar = Vector::Zero(state.x.front().size());
  for (const auto& xi : state.x) xbar += xi;
  return xbar / static_cast<double>(state.num_agents());
}

MetricsRecord convergence_metric(const NetworkState& state, const BilevelProblem& problem) {
  MetricsRecord rec;
  rec.t = state.round;
  rec.ifo_per_agent = state.ifo_per_agent;
  rec.comm_rounds = state.comm_rounds;
  const int m = state.num_agents();
  const Vector xbar = mean_x(state);
  rec.stationarity = true_global_grad(problem, xbar).squaredNorm();
  for (int i = 0; i < m; ++i) {
    rec.consensus += (state.x[i] - xbar).squaredNorm();
    rec.lower_error += (problem.inner_opt(i, state.x[i]) - state.y[i]).squaredNorm();
  }
  rec.consensus_normalized = rec.consensus / static_cast<double>(m);
  rec.metric_total = rec.stationarity + rec.consensus + rec.lower_error;
  return rec;
}

double global_objective(const BilevelProblem& problem, const Vector& xbar) {
  double acc = 0.0;
  for (int i = 0; i < problem.num_agents(); ++i)
    acc += problem.outer_value(i, xbar, problem.inner_opt(i, xbar), problem.full_batch());
  return acc / static_cast<double>(problem.num_agents());
}

double potential(const NetworkState& state, const BilevelProblem& problem, double alpha, double r,
                 double lambda, double l_y) {
  const int m = state.num_agents();
  const Vector xbar = mean_x(state);
  double lower = 0.0, consensus = 0.0, tracking = 0.0;
  Vector ubar = Vector::Zero(state.tracker.front().size());
  for (const auto& ui : state.tracker) ubar += ui;
  ubar /= static_cast<double>(m);
  for (int i = 0; i < m; ++i) {
    lower += (state.y[i] - problem.inner_opt(i, state.x[i])).squaredNorm();
    consensus += (state.x[i] - xbar).squaredNorm();
    tracking += (state.tracker[i] - ubar).squaredNorm();
  }
  const double weight =
      l_y > 0.0 ? (1.0 - lambda) / (32.0 * (1.0 + 1.0 / r) * l_y * l_y) : 1.0;
  return global_objective(problem, xbar) + weight * lower + consensus + alpha * tracking;
}

double tracking_gap(const NetworkState& state) {
  Vector ubar = Vector::Zero(state.tracker.front().size());
  Vector pbar = Vector::Zero(state.outer_est.front().size());
  for (const auto& ui : state.tracker) ubar += ui;
  for (const auto& pi : state.outer_est) pbar += pi;
  const double m = static_cast<double>(state.num_agents());
  return (ubar / m - pbar / m).norm();
}

std::vector<double> running_mean(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    out[i] = acc / static_cast<double>(i + 1);
  }
  return out;
}

std::vector<double> running_min(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    best = std::min(best, v[i]);
    out[i] = best;
  }
  return out;
}

}  // namespace dbo
