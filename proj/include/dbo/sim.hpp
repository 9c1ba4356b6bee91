#pragma once

#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dbo/metrics.hpp"
#include "dbo/optimizers.hpp"

namespace dbo {

// One experiment. Field defaults follow the usual small-network setup
// (p_edge = 0.5, q = ceil(sqrt(n)), batch = q); alpha/beta fall back to the
// analytic bounds for the chosen algorithm when not set.
struct RunConfig {
  Algo algo = Algo::interact;
  int m = 5;
  int n = 1000;
  int d1 = 8;
  int d2 = 8;
  double p_edge = 0.5;
  std::uint64_t seed = 1;
  long rounds = 1000;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<int> q;
  std::optional<int> batch;
  int neumann_k = 10;
  double gamma = 0.1;
  double mu_g = 1.0;
  double l_g = 2.0;
  double region_radius = 10.0;
  long metric_every = 1;
  int threads = 1;
  int seeds = 1;  // > 1 runs a sweep over seed .. seed+seeds-1
  std::string out_path = "run.csv";
  std::optional<double> fit_t_min;
  std::optional<double> fit_t_max;

  int resolved_q() const;
  int resolved_batch() const;
  void validate() const;
};

// Strict parse: unknown keys are rejected with the offending name.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_file(const std::string& path);

// Least-squares slope of log(v) against log(t) over records with
// t in [t_min, t_max]. Requires at least 10 points in the window. Callers
// hand in the series they want fitted (for convergence rates: the running
// mean of metric_total).
double rate_fit(const std::vector<double>& t, const std::vector<double>& v, double t_min,
                double t_max);

// CSV schema, in column order:
//   t,stationarity,consensus,consensus_normalized,lower_error,metric_total,
//   potential,ifo_per_agent,comm_rounds
// UTF-8, '.' decimal point, shortest round-trip formatting; fully
// locale-independent so equal runs produce byte-equal files.
std::string to_csv(const std::vector<MetricsRecord>& records);
void write_csv(const std::string& path, const std::vector<MetricsRecord>& records);

struct SeedResult {
  std::uint64_t seed = 0;
  std::string csv_path;
  Trajectory trajectory;
};

struct ExecuteSummary {
  std::vector<SeedResult> per_seed;
  std::string aggregate_csv_path;  // empty unless seeds > 1
  double final_running_mean_metric = 0;  // cross-seed mean at the last record
  long total_ifo_per_agent = 0;
  long comm_rounds = 0;
  double slope = 0;  // log-log rate fit of the running-mean metric
  double alpha = 0, beta = 0;  // step sizes actually used
};

// Builds topology and problem from the config, runs every seed, writes one
// CSV per seed (plus a cross-seed aggregate of metric_total for sweeps) and
// prints a one-line summary per seed. Deterministic: equal configs produce
// byte-identical files.
ExecuteSummary execute(const RunConfig& config);

}  // namespace dbo
