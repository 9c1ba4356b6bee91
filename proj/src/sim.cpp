#include "dbo/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dbo/errors.hpp"
#include "dbo/hypergradient.hpp"
#include "dbo/topology.hpp"

namespace dbo {

int RunConfig::resolved_q() const {
  if (q) return *q;
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
}

int RunConfig::resolved_batch() const { return batch ? *batch : resolved_q(); }

void RunConfig::validate() const {
  if (m < 1) throw ConfigError("m must be at least 1");
  if (n < 1) throw ConfigError("n must be at least 1");
  if (d1 < 1 || d2 < 1) throw ConfigError("d1 and d2 must be at least 1");
  if (!(p_edge > 0.0 && p_edge <= 1.0)) throw ConfigError("p_edge must lie in (0, 1]");
  if (rounds < 0) throw ConfigError("rounds must be nonnegative");
  if (alpha && !(*alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (beta && !(*beta > 0.0)) throw ConfigError("beta must be positive");
  if (q && *q < 1) throw ConfigError("q must be at least 1");
  if (batch && *batch < 1) throw ConfigError("batch must be at least 1");
  if (neumann_k < 1) throw ConfigError("neumann_k must be at least 1");
  if (gamma < 0.0) throw ConfigError("gamma must be nonnegative");
  if (!(mu_g > 0.0)) throw ConfigError("mu_g must be positive");
  if (l_g < mu_g) throw ConfigError("l_g must be at least mu_g");
  if (!(region_radius > 0.0)) throw ConfigError("region_radius must be positive");
  if (metric_every < 1) throw ConfigError("metric_every must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (seeds < 1) throw ConfigError("seeds must be at least 1");
  if (out_path.empty()) throw ConfigError("out path must not be empty");
}

RunConfig parse_config(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "algo",   "m",         "n",     "d1",         "d2",           "p_edge",
      "seed",   "rounds",    "alpha", "beta",       "q",            "batch",
      "neumann_k", "gamma",  "mu_g",  "l_g",        "region_radius", "metric_every",
      "threads", "seeds",    "out",   "fit_t_min",  "fit_t_max"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw ConfigError("unknown config key '" + item.key() + "'");
  }
  RunConfig c;
  try {
    if (j.contains("algo")) c.algo = algo_from_name(j.at("algo").get<std::string>());
    if (j.contains("m")) c.m = j.at("m").get<int>();
    if (j.contains("n")) c.n = j.at("n").get<int>();
    if (j.contains("d1")) c.d1 = j.at("d1").get<int>();
    if (j.contains("d2")) c.d2 = j.at("d2").get<int>();
    if (j.contains("p_edge")) c.p_edge = j.at("p_edge").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("rounds")) c.rounds = j.at("rounds").get<long>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("q")) c.q = j.at("q").get<int>();
    if (j.contains("batch")) c.batch = j.at("batch").get<int>();
    if (j.contains("neumann_k")) c.neumann_k = j.at("neumann_k").get<int>();
    if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
    if (j.contains("mu_g")) c.mu_g = j.at("mu_g").get<double>();
    if (j.contains("l_g")) c.l_g = j.at("l_g").get<double>();
    if (j.contains("region_radius")) c.region_radius = j.at("region_radius").get<double>();
    if (j.contains("metric_every")) c.metric_every = j.at("metric_every").get<long>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<int>();
    if (j.contains("out")) c.out_path = j.at("out").get<std::string>();
    if (j.contains("fit_t_min")) c.fit_t_min = j.at("fit_t_min").get<double>();
    if (j.contains("fit_t_max")) c.fit_t_max = j.at("fit_t_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value error: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

double rate_fit(const std::vector<double>& t, const std::vector<double>& v, double t_min,
                double t_max) {
  if (t.size() != v.size()) throw ConfigError("rate_fit: series lengths differ");
  std::vector<double> lt, lv;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= t_min && t[i] <= t_max && t[i] > 0.0 && v[i] > 0.0) {
      lt.push_back(std::log(t[i]));
      lv.push_back(std::log(v[i]));
    }
  }
  if (lt.size() < 10) throw ConfigError("rate_fit: fewer than 10 usable records in the window");
  double mt = 0, mv = 0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    mt += lt[i];
    mv += lv[i];
  }
  mt /= static_cast<double>(lt.size());
  mv /= static_cast<double>(lt.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    num += (lt[i] - mt) * (lv[i] - mv);
    den += (lt[i] - mt) * (lt[i] - mt);
  }
  return num / den;
}

namespace {

void append_double(std::string& out, double v) {
  if (!std::isfinite(v)) throw OracleError("non-finite value in CSV output");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::pair<std::string, std::string> split_extension(const std::string& path) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return {path, ""};
  return {path.substr(0, dot), path.substr(dot)};
}

}  // namespace

std::string to_csv(const std::vector<MetricsRecord>& records) {
  std::string out =
      "t,stationarity,consensus,consensus_normalized,lower_error,metric_total,potential,"
      "ifo_per_agent,comm_rounds\n";
  for (const auto& r : records) {
    out += std::to_string(r.t);
    out.push_back(',');
    append_double(out, r.stationarity);
    out.push_back(',');
    append_double(out, r.consensus);
    out.push_back(',');
    append_double(out, r.consensus_normalized);
    out.push_back(',');
    append_double(out, r.lower_error);
    out.push_back(',');
    append_double(out, r.metric_total);
    out.push_back(',');
    append_double(out, r.potential);
    out.push_back(',');
    out += std::to_string(r.ifo_per_agent);
    out.push_back(',');
    out += std::to_string(r.comm_rounds);
    out.push_back('\n');
  }
  return out;
}

void write_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file " + path);
  out << to_csv(records);
}

ExecuteSummary execute(const RunConfig& config) {
  config.validate();
  ExecuteSummary summary;

  const auto [stem, ext] = split_extension(config.out_path);
  std::vector<std::vector<double>> mean_series;  // running mean per seed
  std::vector<double> times;

  for (int k = 0; k < config.seeds; ++k) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
    const Graph graph = generate_er_graph(config.m, config.p_edge, seed);
    const ConsensusMatrix cm = build_consensus_matrix(graph);
    const SyntheticQuadratic problem = SyntheticQuadratic::random(
        seed, config.m, config.n, config.d1, config.d2, config.mu_g, config.l_g, config.gamma);

    AlgoConfig ac;
    ac.algo = config.algo;
    ac.rounds = config.rounds;
    ac.q = config.resolved_q();
    ac.batch = config.resolved_batch();
    ac.neumann_k = config.neumann_k;
    ac.threads = config.threads;
    if (config.alpha && config.beta) {
      ac.alpha = *config.alpha;
      ac.beta = *config.beta;
    } else {
      const bool stochastic = config.algo != Algo::interact;
      const ProblemConstants pc = problem.constants(config.region_radius);
      const DerivedConstants dc = derived_constants(
          pc, stochastic ? std::optional<int>(config.neumann_k) : std::nullopt);
      const StepSizes bounds =
          stepsize_bounds(dc, pc, cm.lambda, config.m,
                          config.algo == Algo::svr_interact ? StepsizeRule::variance_reduced
                                                            : StepsizeRule::gradient_tracking);
      ac.alpha = config.alpha.value_or(bounds.alpha);
      ac.beta = config.beta.value_or(bounds.beta);
    }
    summary.alpha = ac.alpha;
    summary.beta = ac.beta;

    SeedResult result;
    result.seed = seed;
    result.trajectory =
        run(problem, graph, cm, ac, config.metric_every, seed, config.region_radius);
    result.csv_path = config.seeds == 1 ? config.out_path
                                        : stem + "_seed" + std::to_string(seed) + ext;
    write_csv(result.csv_path, result.trajectory.records);

    const auto& recs = result.trajectory.records;
    if (k == 0) {
      times.reserve(recs.size());
      for (const auto& r : recs) times.push_back(static_cast<double>(r.t));
    }
    std::vector<double> totals;
    totals.reserve(recs.size());
    for (const auto& r : recs) totals.push_back(r.metric_total);
    mean_series.push_back(running_mean(totals));

    summary.total_ifo_per_agent = recs.back().ifo_per_agent;
    summary.comm_rounds = recs.back().comm_rounds;
    summary.per_seed.push_back(std::move(result));
  }

  // Cross-seed mean of the running-mean metric approximates its expectation.
  std::vector<double> mean_of_means(times.size(), 0.0);
  for (const auto& series : mean_series)
    for (std::size_t i = 0; i < series.size(); ++i) mean_of_means[i] += series[i];
  for (auto& v : mean_of_means) v /= static_cast<double>(config.seeds);
  summary.final_running_mean_metric = mean_of_means.empty() ? 0.0 : mean_of_means.back();

  if (config.seeds > 1) {
    std::vector<double> raw_mean(times.size(), 0.0);
    for (const auto& sr : summary.per_seed)
      for (std::size_t i = 0; i < sr.trajectory.records.size(); ++i)
        raw_mean[i] += sr.trajectory.records[i].metric_total;
    std::string agg = "t,metric_total_mean\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
      agg += std::to_string(static_cast<long>(times[i]));
      agg.push_back(',');
      append_double(agg, raw_mean[i] / static_cast<double>(config.seeds));
      agg.push_back('\n');
    }
    summary.aggregate_csv_path = stem + "_mean" + (ext.empty() ? std::string(".csv") : ext);
    std::ofstream out(summary.aggregate_csv_path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file " + summary.aggregate_csv_path);
    out << agg;
  }

  const double t_min = config.fit_t_min.value_or(
      std::max(10.0, static_cast<double>(config.rounds) / 100.0));
  const double t_max = config.fit_t_max.value_or(static_cast<double>(config.rounds));
  try {
    summary.slope = rate_fit(times, mean_of_means, t_min, t_max);
  } catch (const ConfigError&) {
    summary.slope = std::numeric_limits<double>::quiet_NaN();  // short run; slope undefined
  }

  std::printf("algo=%s seeds=%d final_metric_running_mean=%.6g total_ifo_per_agent=%ld "
              "comm_rounds=%ld rate_slope=%.4f alpha=%.6g beta=%.6g\n",
              algo_name(config.algo).c_str(), config.seeds, summary.final_running_mean_metric,
              summary.total_ifo_per_agent, summary.comm_rounds, summary.slope, summary.alpha,
              summary.beta);
  return summary;
}

}  // namespace dbo
