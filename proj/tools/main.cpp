// dbosim: decentralized bilevel optimization simulator.
//
// Subcommands:
//   run       execute one experiment (or a seed sweep) and write metric CSVs
//   clauses   print every analytic step-size clause for given constants
//   topology  generate a connected random graph and dump its edge list

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "dbo/errors.hpp"
#include "dbo/hypergradient.hpp"
#include "dbo/sim.hpp"
#include "dbo/topology.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitOracle = 4;

int run_command(const std::string& config_path, const nlohmann::json& flag_values) {
  nlohmann::json merged = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw dbo::ConfigError("cannot open config file " + config_path);
    try {
      in >> merged;
    } catch (const nlohmann::json::exception& e) {
      throw dbo::ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
  }
  // Flags given on the command line win over file values.
  for (const auto& item : flag_values.items()) merged[item.key()] = item.value();
  const dbo::RunConfig config = dbo::parse_config(merged);
  dbo::execute(config);
  return 0;
}

int clauses_command(const dbo::ProblemConstants& c, double lambda, int m, int neumann_k,
                    const std::string& rule_name) {
  const dbo::StepsizeRule rule = rule_name == "svr" ? dbo::StepsizeRule::variance_reduced
                                                    : dbo::StepsizeRule::gradient_tracking;
  const auto dc = dbo::derived_constants(
      c, rule == dbo::StepsizeRule::variance_reduced ? std::optional<int>(neumann_k)
                                                     : std::nullopt);
  std::printf("derived: L_f=%.9g L_ell=%.9g L_y=%.9g L_Kd=%.9g L_Ks=%.9g L_K=%.9g\n", dc.l_f,
              dc.l_ell, dc.l_y, dc.l_kd, dc.l_ks, dc.l_k);
  const auto betas = dbo::beta_clauses(dc, c, lambda, m, rule);
  const dbo::StepSizes s = dbo::stepsize_bounds(dc, c, lambda, m, rule);
  std::printf("beta clauses:\n");
  for (const auto& cl : betas) std::printf("  %-55s = %.9g\n", cl.expr.c_str(), cl.value);
  std::printf("beta = %.9g, r = %.9g\n", s.beta, s.r);
  std::printf("alpha clauses:\n");
  for (const auto& cl : dbo::alpha_clauses(dc, c, lambda, m, rule, s.beta, s.r))
    std::printf("  %-55s = %.9g\n", cl.expr.c_str(), cl.value);
  std::printf("alpha = %.9g\n", s.alpha);
  return 0;
}

int topology_command(int m, double p, std::uint64_t seed, const std::string& out) {
  const dbo::Graph g = dbo::generate_er_graph(m, p, seed);
  const dbo::ConsensusMatrix cm = dbo::build_consensus_matrix(g);
  if (out.empty()) {
    dbo::write_edge_list(std::cout, g);
  } else {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw dbo::ConfigError("cannot open output file " + out);
    dbo::write_edge_list(os, g);
  }
  std::fprintf(stderr, "m=%d edges=%zu lambda=%.9g\n", g.m, g.edges.size(), cm.lambda);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized bilevel optimization simulator"};
  app.require_subcommand(1);

  // --- run
  auto* run = app.add_subcommand("run", "run one experiment and write metric CSVs");
  std::string config_path;
  run->add_option("--config", config_path, "JSON config file; flags override its values");
  std::string algo;
  int m = 0, n = 0, d1 = 0, d2 = 0, q = 0, batch = 0, neumann_k = 0, threads = 0, seeds = 0;
  long rounds = -1, metric_every = 0;
  double p_edge = 0, alpha = 0, beta = 0, gamma = -1, mu_g = 0, l_g = 0, region_radius = 0;
  double fit_t_min = 0, fit_t_max = 0;
  std::uint64_t seed = 0;
  std::string out;
  auto* o_algo = run->add_option("--algo", algo, "interact | svr-interact | gt-dsgd | dsgd");
  auto* o_m = run->add_option("--m", m, "number of agents");
  auto* o_n = run->add_option("--n", n, "samples per agent");
  auto* o_d1 = run->add_option("--d1", d1, "outer dimension");
  auto* o_d2 = run->add_option("--d2", d2, "inner dimension");
  auto* o_p = run->add_option("--p-edge", p_edge, "edge probability");
  auto* o_seed = run->add_option("--seed", seed, "base seed");
  auto* o_rounds = run->add_option("--rounds,--T", rounds, "rounds to run");
  auto* o_alpha = run->add_option("--alpha", alpha, "outer step size (default: analytic bound)");
  auto* o_beta = run->add_option("--beta", beta, "inner step size (default: analytic bound)");
  auto* o_q = run->add_option("--q", q, "full-gradient period (default ceil(sqrt(n)))");
  auto* o_batch = run->add_option("--batch", batch, "minibatch size (default q)");
  auto* o_k = run->add_option("--K", neumann_k, "truncation depth of the inverse estimator");
  auto* o_gamma = run->add_option("--gamma", gamma, "outer nonconvexity weight");
  auto* o_mu = run->add_option("--mu-g", mu_g, "inner strong convexity");
  auto* o_lg = run->add_option("--L-g", l_g, "inner smoothness");
  auto* o_rr = run->add_option("--region-radius", region_radius, "radius for the C_fy bound");
  auto* o_me = run->add_option("--metric-every", metric_every, "metric sampling period");
  auto* o_threads = run->add_option("--threads", threads, "per-round workers (1 = serial)");
  auto* o_seeds = run->add_option("--seeds", seeds, "sweep width: seeds seed..seed+k-1");
  auto* o_out = run->add_option("--out", out, "output CSV path");
  auto* o_fmin = run->add_option("--fit-t-min", fit_t_min, "rate-fit window start");
  auto* o_fmax = run->add_option("--fit-t-max", fit_t_max, "rate-fit window end");

  // --- clauses
  auto* clauses = app.add_subcommand("clauses", "print analytic step-size clauses");
  dbo::ProblemConstants pc{1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  double lambda = 1.0 / 3.0;
  int cl_m = 5, cl_k = 10;
  std::string rule = "interact";
  clauses->add_option("--mu-g", pc.mu_g);
  clauses->add_option("--L-g", pc.l_g);
  clauses->add_option("--c-gxy", pc.c_gxy);
  clauses->add_option("--c-fy", pc.c_fy);
  clauses->add_option("--l-fx", pc.l_fx);
  clauses->add_option("--l-fy", pc.l_fy);
  clauses->add_option("--l-gxy", pc.l_gxy);
  clauses->add_option("--l-gyy", pc.l_gyy);
  clauses->add_option("--lambda", lambda);
  clauses->add_option("--m", cl_m);
  clauses->add_option("--K", cl_k);
  clauses->add_option("--rule", rule, "interact | svr");

  // --- topology
  auto* topo = app.add_subcommand("topology", "generate a connected random graph");
  int t_m = 5;
  double t_p = 0.5;
  std::uint64_t t_seed = 1;
  std::string t_out;
  topo->add_option("--m", t_m);
  topo->add_option("--p-edge", t_p);
  topo->add_option("--seed", t_seed);
  topo->add_option("--out", t_out, "edge list path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      nlohmann::json flags = nlohmann::json::object();
      if (*o_algo) flags["algo"] = algo;
      if (*o_m) flags["m"] = m;
      if (*o_n) flags["n"] = n;
      if (*o_d1) flags["d1"] = d1;
      if (*o_d2) flags["d2"] = d2;
      if (*o_p) flags["p_edge"] = p_edge;
      if (*o_seed) flags["seed"] = seed;
      if (*o_rounds) flags["rounds"] = rounds;
      if (*o_alpha) flags["alpha"] = alpha;
      if (*o_beta) flags["beta"] = beta;
      if (*o_q) flags["q"] = q;
      if (*o_batch) flags["batch"] = batch;
      if (*o_k) flags["neumann_k"] = neumann_k;
      if (*o_gamma) flags["gamma"] = gamma;
      if (*o_mu) flags["mu_g"] = mu_g;
      if (*o_lg) flags["l_g"] = l_g;
      if (*o_rr) flags["region_radius"] = region_radius;
      if (*o_me) flags["metric_every"] = metric_every;
      if (*o_threads) flags["threads"] = threads;
      if (*o_seeds) flags["seeds"] = seeds;
      if (*o_out) flags["out"] = out;
      if (*o_fmin) flags["fit_t_min"] = fit_t_min;
      if (*o_fmax) flags["fit_t_max"] = fit_t_max;
      return run_command(config_path, flags);
    }
    if (clauses->parsed()) return clauses_command(pc, lambda, cl_m, cl_k, rule);
    if (topo->parsed()) return topology_command(t_m, t_p, t_seed, t_out);
  } catch (const dbo::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const dbo::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return kExitDivergence;
  } catch (const dbo::OracleError& e) {
    std::fprintf(stderr, "oracle failure: %s\n", e.what());
    return kExitOracle;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
