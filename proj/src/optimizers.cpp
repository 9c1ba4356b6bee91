#include "dbo/optimizers.hpp"

#include <cmath>
#include <utility>

#include "dbo/errors.hpp"
#include "dbo/hypergradient.hpp"

namespace dbo {

Algo algo_from_name(const std::string& name) {
  if (name == "interact") return Algo::interact;
  if (name == "svr-interact" || name == "svr_interact" || name == "svr") return Algo::svr_interact;
  if (name == "gt-dsgd" || name == "gt_dsgd") return Algo::gt_dsgd;
  if (name == "dsgd" || name == "d-sgd") return Algo::dsgd;
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected interact, svr-interact, gt-dsgd or dsgd)");
}

std::string algo_name(Algo algo) {
  switch (algo) {
    case Algo::interact: return "interact";
    case Algo::svr_interact: return "svr-interact";
    case Algo::gt_dsgd: return "gt-dsgd";
    case Algo::dsgd: return "dsgd";
  }
  return "?";
}

namespace {

void local_full_gradients(const BilevelProblem& problem, int agent, const Vector& x,
                          const Vector& y, Vector& p, Vector& d) {
  p = hypergrad_full(problem, agent, x, y);
  d = problem.inner_grad(agent, x, y, problem.full_batch());
}

void guard_iterates(const Vector& x, const Vector& y, long round) {
  if (!x.allFinite() || !y.allFinite())
    throw DivergenceError(round, "iterates are no longer finite");
  if (x.norm() > 1e8 || y.norm() > 1e8)
    throw DivergenceError(round, "iterate norm exceeded 1e8; step sizes too large?");
}

bool uses_tracking(Algo algo) { return algo != Algo::dsgd; }

}  // namespace

NetworkState init_state(const BilevelProblem& problem, const Vector& x0, const Vector& y0,
                        std::uint64_t seed, int threads) {
  if (x0.size() != problem.outer_dim() || y0.size() != problem.inner_dim())
    throw ConfigError("initial point dimensions do not match the problem");
  const int m = problem.num_agents();
  NetworkState st;
  st.x.assign(m, x0);
  st.y.assign(m, y0);
  st.outer_est.resize(m);
  st.inner_est.resize(m);
  st.agent_rng.reserve(m);
  for (int i = 0; i < m; ++i)
    st.agent_rng.emplace_back(seed, RngDomain::agent, static_cast<std::uint32_t>(i));
  run_round(m, threads, [&](int i) {
    local_full_gradients(problem, i, st.x[i], st.y[i], st.outer_est[i], st.inner_est[i]);
  });
  st.tracker = st.outer_est;
  st.inner_dir = st.inner_est;
  st.ifo_per_agent = 2L * problem.num_samples();
  return st;
}

NetworkState step(const NetworkState& state, const BilevelProblem& problem,
                  const ExchangePlan& plan, double /*lambda*/, const AlgoConfig& config) {
  const int m = state.num_agents();
  const int n = problem.num_samples();
  const long t = state.round + 1;
  if (plan.m != m) throw ConfigError("exchange plan does not match the state");
  if (config.q < 1 || config.batch < 1 || config.neumann_k < 1)
    throw ConfigError("q, batch and K must be at least 1");

  const bool tracking = uses_tracking(config.algo);
  const bool svr_full = config.algo == Algo::svr_interact && t % config.q == 0;
  const std::vector<Vector> mixed_x = mix(plan, state.x);
  const std::vector<Vector> mixed_u = tracking ? mix(plan, state.tracker) : std::vector<Vector>{};

  NetworkState next;
  next.round = t;
  next.comm_rounds = state.comm_rounds + 1;
  next.agent_rng = state.agent_rng;
  next.x.resize(m);
  next.y.resize(m);
  next.tracker.resize(m);
  next.inner_dir.resize(m);
  next.outer_est.resize(m);
  next.inner_est.resize(m);

  switch (config.algo) {
    case Algo::interact:
      next.ifo_per_agent = state.ifo_per_agent + 2L * n;
      break;
    case Algo::svr_interact:
      next.ifo_per_agent = state.ifo_per_agent +
                           (svr_full ? 2L * n : 1L * config.batch * (config.neumann_k + 3));
      break;
    case Algo::gt_dsgd:
    case Algo::dsgd:
      next.ifo_per_agent = state.ifo_per_agent + 1L * config.batch * (config.neumann_k + 3);
      break;
  }

  run_round(m, config.threads, [&](int i) {
    const Vector& descent = tracking ? state.tracker[i] : state.outer_est[i];
    next.x[i] = mixed_x[i] - config.alpha * descent;
    next.y[i] = state.y[i] - config.beta * state.inner_dir[i];
    guard_iterates(next.x[i], next.y[i], t);

    CounterRng& rng = next.agent_rng[i];
    switch (config.algo) {
      case Algo::interact:
        local_full_gradients(problem, i, next.x[i], next.y[i], next.outer_est[i],
                             next.inner_est[i]);
        break;
      case Algo::svr_interact: {
        if (svr_full) {
          local_full_gradients(problem, i, next.x[i], next.y[i], next.outer_est[i],
                               next.inner_est[i]);
        } else {
          // Recursive estimator: difference two evaluations under the same
          // draw, so the update telescopes back to the last full gradient.
          Vector dp = Vector::Zero(problem.outer_dim());
          Vector dd = Vector::Zero(problem.inner_dim());
          for (int s = 0; s < config.batch; ++s) {
            const HypergradSample draw = draw_hypergrad_sample(n, config.neumann_k, rng);
            dp += eval_hypergrad_sample(problem, i, next.x[i], next.y[i], config.neumann_k, draw);
            dp -= eval_hypergrad_sample(problem, i, state.x[i], state.y[i], config.neumann_k, draw);
            const int inner_sample[1] = {static_cast<int>(rng.uniform_index(n))};
            dd += problem.inner_grad(i, next.x[i], next.y[i], Batch(inner_sample));
            dd -= problem.inner_grad(i, state.x[i], state.y[i], Batch(inner_sample));
          }
          next.outer_est[i] = state.outer_est[i] + dp / static_cast<double>(config.batch);
          next.inner_est[i] = state.inner_est[i] + dd / static_cast<double>(config.batch);
        }
        break;
      }
      case Algo::gt_dsgd:
      case Algo::dsgd: {
        Vector p = Vector::Zero(problem.outer_dim());
        Vector d = Vector::Zero(problem.inner_dim());
        for (int s = 0; s < config.batch; ++s) {
          const HypergradSample draw = draw_hypergrad_sample(n, config.neumann_k, rng);
          p += eval_hypergrad_sample(problem, i, next.x[i], next.y[i], config.neumann_k, draw);
          const int inner_sample[1] = {static_cast<int>(rng.uniform_index(n))};
          d += problem.inner_grad(i, next.x[i], next.y[i], Batch(inner_sample));
        }
        next.outer_est[i] = p / static_cast<double>(config.batch);
        next.inner_est[i] = d / static_cast<double>(config.batch);
        break;
      }
    }

    next.tracker[i] = tracking ? Vector(mixed_u[i] + next.outer_est[i] - state.outer_est[i])
                               : next.outer_est[i];
    // The inner direction needs no tracking: the inner problem is local.
    next.inner_dir[i] = next.inner_est[i];
  });

  return next;
}

long expected_ifo_per_agent(const AlgoConfig& config, int n, long rounds) {
  switch (config.algo) {
    case Algo::interact:
      return 2L * n * (rounds + 1);
    case Algo::svr_interact: {
      const long full = rounds / config.q;
      return 2L * n * (full + 1) +
             (rounds - full) * static_cast<long>(config.batch) * (config.neumann_k + 3);
    }
    case Algo::gt_dsgd:
    case Algo::dsgd:
      return 2L * n + rounds * static_cast<long>(config.batch) * (config.neumann_k + 3);
  }
  return 0;
}

namespace {

double stacked_deviation(const std::vector<Vector>& blocks) {
  Vector mean = Vector::Zero(blocks.front().size());
  for (const auto& b : blocks) mean += b;
  mean /= static_cast<double>(blocks.size());
  double acc = 0.0;
  for (const auto& b : blocks) acc += (b - mean).squaredNorm();
  return std::sqrt(acc);
}

}  // namespace

Trajectory run(const BilevelProblem& problem, const Graph& graph, const ConsensusMatrix& cm,
               const AlgoConfig& config, long metric_every, std::uint64_t seed,
               double region_radius) {
  return run(problem, graph, cm, config, metric_every, seed, region_radius,
             Vector::Zero(problem.outer_dim()), Vector::Zero(problem.inner_dim()));
}

Trajectory run(const BilevelProblem& problem, const Graph& graph, const ConsensusMatrix& cm,
               const AlgoConfig& config, long metric_every, std::uint64_t seed,
               double region_radius, const Vector& x0, const Vector& y0) {
  if (config.rounds < 0) throw ConfigError("rounds must be nonnegative");
  if (metric_every < 1) throw ConfigError("metric_every must be at least 1");
  if (!(config.alpha >= 0.0) || !(config.beta >= 0.0))
    throw ConfigError("step sizes must be nonnegative");
  if (graph.m != problem.num_agents()) throw ConfigError("graph and problem disagree on m");

  const ExchangePlan plan = make_exchange_plan(graph, cm);
  const ProblemConstants pc = problem.constants(region_radius);
  const DerivedConstants dc = derived_constants(pc);
  const double r = config.beta * pc.mu_g * pc.l_g / (3.0 * (pc.mu_g + pc.l_g));

  Trajectory traj;
  const auto record = [&](const NetworkState& s) {
    MetricsRecord rec = convergence_metric(s, problem);
    rec.potential = potential(s, problem, config.alpha, r, cm.lambda, dc.l_y);
    traj.records.push_back(rec);
  };

  NetworkState state = init_state(problem, x0, y0, seed, config.threads);
  record(state);
  for (long t = 1; t <= config.rounds; ++t) {
    NetworkState next;
    try {
      next = step(state, problem, plan, cm.lambda, config);
    } catch (const DivergenceError&) {
      throw;
    } catch (const OracleError& err) {
      throw OracleError("round " + std::to_string(t) + ": " + err.what());
    }

    // Conservation and contraction self-checks; these hold by construction
    // and only trip on implementation bugs, so the slack is tiny.
    const Vector xbar_prev = mean_x(state);
    const Vector xbar_next = mean_x(next);
    Vector dirbar = Vector::Zero(problem.outer_dim());
    const auto& dirs = uses_tracking(config.algo) ? state.tracker : state.outer_est;
    for (const auto& d : dirs) dirbar += d;
    dirbar /= static_cast<double>(graph.m);
    const double residual = (xbar_next - (xbar_prev - config.alpha * dirbar)).norm();
    traj.diagnostics.max_mean_residual = std::max(traj.diagnostics.max_mean_residual, residual);
    if (residual > 1e-9 * (1.0 + xbar_prev.norm() + config.alpha * dirbar.norm()))
      throw std::logic_error("mean dynamics identity violated");

    const double x_dev_next = stacked_deviation(next.x);
    const double x_dev_prev = stacked_deviation(state.x);
    const double dir_dev_prev = stacked_deviation(dirs);
    const double contraction_rhs = cm.lambda * x_dev_prev + config.alpha * dir_dev_prev;
    if (x_dev_next > contraction_rhs + 1e-9 * (1.0 + contraction_rhs))
      throw std::logic_error("consensus contraction bound violated");

    traj.diagnostics.max_tracking_gap =
        std::max(traj.diagnostics.max_tracking_gap, tracking_gap(next));

    state = std::move(next);
    if (t % metric_every == 0) record(state);
  }
  return traj;
}

}  // namespace dbo
