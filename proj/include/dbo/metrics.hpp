#pragma once

#include <vector>

#include "dbo/problem.hpp"

namespace dbo {

struct NetworkState;  // optimizers.hpp

// One sampled row of a run. `consensus` is the unnormalized stacked norm
// |x - 1 (x) xbar|^2, the form the convergence analysis tracks; the
// (1/m)-normalized variant that appears in the stationarity target is kept
// alongside. metric_total = stationarity + consensus + lower_error.
struct MetricsRecord {
  long t = 0;
  double stationarity = 0;          // |grad ell(xbar)|^2
  double consensus = 0;             // sum_i |x_i - xbar|^2
  double consensus_normalized = 0;  // consensus / m
  double lower_error = 0;           // sum_i |y*_i(x_i) - y_i|^2
  double metric_total = 0;
  double potential = 0;
  long ifo_per_agent = 0;
  long comm_rounds = 0;
};

Vector mean_x(const NetworkState& state);

// Metric terms at the current state; exact inner solves supply y*_i(x_i).
MetricsRecord convergence_metric(const NetworkState& state, const BilevelProblem& problem);

// ell(xbar) + (1-lambda)/(32 (1+1/r) L_y^2) * lower_error + consensus
//   + alpha * |u - 1 (x) ubar|^2.
// When l_y = 0 the lower-error weight degenerates (division by zero); the
// weight is then replaced by 1 so the diagnostic stays finite.
double potential(const NetworkState& state, const BilevelProblem& problem, double alpha, double r,
                 double lambda, double l_y);

// Global objective at a consensus point, via exact inner solves.
double global_objective(const BilevelProblem& problem, const Vector& xbar);

// |mean_i u_i - mean_i p_i|: how far gradient tracking has drifted from its
// conservation law.
double tracking_gap(const NetworkState& state);

std::vector<double> running_mean(const std::vector<double>& v);
std::vector<double> running_min(const std::vector<double>& v);

}  // namespace dbo
