#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbo/metrics.hpp"
#include "dbo/problem.hpp"
#include "dbo/rng.hpp"
#include "dbo/runtime.hpp"
#include "dbo/topology.hpp"

namespace dbo {

enum class Algo { interact, svr_interact, gt_dsgd, dsgd };

Algo algo_from_name(const std::string& name);
std::string algo_name(Algo algo);

struct AlgoConfig {
  Algo algo = Algo::interact;
  double alpha = 0.0;
  double beta = 0.0;
  long rounds = 0;     // T
  int q = 1;           // full-gradient period (svr_interact)
  int batch = 1;       // |S| (stochastic variants)
  int neumann_k = 1;   // K (stochastic variants)
  int threads = 1;     // per-round worker count; 1 = serial
};

// Round-t snapshot of every agent. Step functions consume a state and return
// the next one; nothing is mutated in place, so a failed round leaves the
// trajectory untouched and cross-agent reads always target the previous
// round.
struct NetworkState {
  std::vector<Vector> x;          // outer iterates
  std::vector<Vector> y;          // inner iterates
  std::vector<Vector> tracker;    // u: tracked global outer gradient
  std::vector<Vector> inner_dir;  // v: direction used by the next y update
  std::vector<Vector> outer_est;  // p: latest local outer gradient estimate
  std::vector<Vector> inner_est;  // d: latest local inner gradient estimate
  std::vector<CounterRng> agent_rng;
  long round = 0;
  long ifo_per_agent = 0;
  long comm_rounds = 0;

  int num_agents() const { return static_cast<int>(x.size()); }
};

// All agents start from the shared pair (x0, y0); p/d (and u = p, v = d) are
// the full local gradients there, which costs 2n oracle calls per agent.
NetworkState init_state(const BilevelProblem& problem, const Vector& x0, const Vector& y0,
                        std::uint64_t seed, int threads = 1);

// One synchronous round of the selected algorithm. Inside a round: mix (x, u)
// from the previous state, descend, evaluate the new local gradient
// estimates, then update the tracker with the estimate difference.
NetworkState step(const NetworkState& state, const BilevelProblem& problem,
                  const ExchangePlan& plan, double lambda, const AlgoConfig& config);

// Per-agent oracle cost of a whole run, by construction of the updates:
//   interact                      2n (T+1)
//   svr_interact                  2n (floor(T/q)+1) + (T - floor(T/q)) |S| (K+3)
//   gt_dsgd / dsgd                2n + T |S| (K+3)
// A stochastic outer estimate costs K+2 samples and its inner companion 1;
// the variance-reduced difference reuses one draw at both iterates.
long expected_ifo_per_agent(const AlgoConfig& config, int n, long rounds);

struct RunDiagnostics {
  double max_tracking_gap = 0;    // max_t |ubar_t - pbar_t|
  double max_mean_residual = 0;   // max_t |xbar_t - (xbar_{t-1} - alpha ubar_{t-1})|
};

struct Trajectory {
  std::vector<MetricsRecord> records;
  RunDiagnostics diagnostics;
};

// Executes config.rounds rounds from the shared zero start (or the given
// pair), recording metrics at t = 0 and every metric_every rounds.
// Deterministic given (seed, config, problem): all randomness flows through
// per-agent counter streams derived from seed.
Trajectory run(const BilevelProblem& problem, const Graph& graph, const ConsensusMatrix& cm,
               const AlgoConfig& config, long metric_every, std::uint64_t seed,
               double region_radius = 10.0);
Trajectory run(const BilevelProblem& problem, const Graph& graph, const ConsensusMatrix& cm,
               const AlgoConfig& config, long metric_every, std::uint64_t seed,
               double region_radius, const Vector& x0, const Vector& y0);

}  // namespace dbo
