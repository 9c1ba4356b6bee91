#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "dbo/errors.hpp"
#include "dbo/hypergradient.hpp"
#include "dbo/metrics.hpp"
#include "dbo/optimizers.hpp"
#include "dbo/problem.hpp"
#include "dbo/rng.hpp"
#include "dbo/sim.hpp"
#include "dbo/topology.hpp"

namespace py = pybind11;
using namespace dbo;

namespace {

std::vector<int> resolve_batch(const BilevelProblem& p, const std::optional<std::vector<int>>& b) {
  if (b) return *b;
  std::vector<int> all(p.num_samples());
  for (int j = 0; j < p.num_samples(); ++j) all[j] = j;
  return all;
}

nlohmann::json dict_to_json(const py::dict& d) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& item : d) {
    const std::string key = py::str(item.first);
    const py::handle v = item.second;
    if (py::isinstance<py::bool_>(v))
      j[key] = v.cast<bool>();
    else if (py::isinstance<py::int_>(v))
      j[key] = v.cast<long long>();
    else if (py::isinstance<py::float_>(v))
      j[key] = v.cast<double>();
    else
      j[key] = std::string(py::str(v));
  }
  return j;
}

py::dict records_to_dict(const std::vector<MetricsRecord>& records) {
  const auto n = static_cast<py::ssize_t>(records.size());
  py::array_t<double> t(n), stationarity(n), consensus(n), consensus_normalized(n),
      lower_error(n), metric_total(n), potential(n);
  py::array_t<long> ifo(n), comm(n);
  auto* tp = t.mutable_data();
  auto* sp = stationarity.mutable_data();
  auto* cp = consensus.mutable_data();
  auto* cn = consensus_normalized.mutable_data();
  auto* lp = lower_error.mutable_data();
  auto* mp = metric_total.mutable_data();
  auto* pp = potential.mutable_data();
  auto* ip = ifo.mutable_data();
  auto* rp = comm.mutable_data();
  for (py::ssize_t i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    tp[i] = static_cast<double>(r.t);
    sp[i] = r.stationarity;
    cp[i] = r.consensus;
    cn[i] = r.consensus_normalized;
    lp[i] = r.lower_error;
    mp[i] = r.metric_total;
    pp[i] = r.potential;
    ip[i] = r.ifo_per_agent;
    rp[i] = r.comm_rounds;
  }
  py::dict out;
  out["t"] = t;
  out["stationarity"] = stationarity;
  out["consensus"] = consensus;
  out["consensus_normalized"] = consensus_normalized;
  out["lower_error"] = lower_error;
  out["metric_total"] = metric_total;
  out["potential"] = potential;
  out["ifo_per_agent"] = ifo;
  out["comm_rounds"] = comm;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "decentralized bilevel optimization simulator (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DivergenceError>(m, "DivergenceError");
  py::register_exception<OracleError>(m, "OracleError");

  py::class_<Graph>(m, "Graph")
      .def_readonly("m", &Graph::m)
      .def_readonly("edges", &Graph::edges)
      .def_readonly("neighbors", &Graph::neighbors)
      .def("connected", &Graph::connected)
      .def("has_edge", &Graph::has_edge)
      .def_static("from_edges", &Graph::from_edges)
      .def("__repr__", [](const Graph& g) {
        return "Graph(m=" + std::to_string(g.m) + ", edges=" + std::to_string(g.edges.size()) +
               ")";
      });

  py::class_<ConsensusMatrix>(m, "ConsensusMatrix")
      .def_readonly("entries", &ConsensusMatrix::entries)
      .def_readonly("lam", &ConsensusMatrix::lambda);

  m.def("generate_er_graph", &generate_er_graph, py::arg("m"), py::arg("p"), py::arg("seed"));
  m.def("laplacian", &laplacian);
  m.def("build_consensus_matrix", &build_consensus_matrix);
  m.def("spectral_gap", &spectral_gap);
  m.def("edge_list", [](const Graph& g) {
    std::ostringstream ss;
    write_edge_list(ss, g);
    return ss.str();
  });
  m.def("graph_from_edge_list", [](const std::string& text) {
    std::istringstream ss(text);
    return read_edge_list(ss);
  });

  py::class_<ProblemConstants>(m, "ProblemConstants")
      .def(py::init([](double mu_g, double l_g, double c_gxy, double c_fy, double l_fx,
                       double l_fy, double l_gxy, double l_gyy) {
             return ProblemConstants{mu_g, l_g, c_gxy, c_fy, l_fx, l_fy, l_gxy, l_gyy};
           }),
           py::arg("mu_g"), py::arg("l_g"), py::arg("c_gxy"), py::arg("c_fy"), py::arg("l_fx"),
           py::arg("l_fy"), py::arg("l_gxy") = 0.0, py::arg("l_gyy") = 0.0)
      .def_readwrite("mu_g", &ProblemConstants::mu_g)
      .def_readwrite("l_g", &ProblemConstants::l_g)
      .def_readwrite("c_gxy", &ProblemConstants::c_gxy)
      .def_readwrite("c_fy", &ProblemConstants::c_fy)
      .def_readwrite("l_fx", &ProblemConstants::l_fx)
      .def_readwrite("l_fy", &ProblemConstants::l_fy)
      .def_readwrite("l_gxy", &ProblemConstants::l_gxy)
      .def_readwrite("l_gyy", &ProblemConstants::l_gyy);

  py::class_<DerivedConstants>(m, "DerivedConstants")
      .def_readonly("l_f", &DerivedConstants::l_f)
      .def_readonly("l_ell", &DerivedConstants::l_ell)
      .def_readonly("l_y", &DerivedConstants::l_y)
      .def_readonly("l_kd", &DerivedConstants::l_kd)
      .def_readonly("l_ks", &DerivedConstants::l_ks)
      .def_readonly("l_k", &DerivedConstants::l_k);

  py::class_<CounterRng>(m, "Rng")
      .def(py::init([](std::uint64_t seed, std::uint32_t stream) {
             return CounterRng(seed, RngDomain::harness, stream);
           }),
           py::arg("seed"), py::arg("stream") = 0)
      .def("next_double", &CounterRng::next_double)
      .def("normal", &CounterRng::normal)
      .def("uniform_index", &CounterRng::uniform_index);

  py::class_<BilevelProblem>(m, "BilevelProblem");

  py::class_<SyntheticQuadratic, BilevelProblem>(m, "SyntheticQuadratic")
      .def_static("random", &SyntheticQuadratic::random, py::arg("seed"), py::arg("m"),
                  py::arg("n"), py::arg("d1"), py::arg("d2"), py::arg("mu_g"), py::arg("l_g"),
                  py::arg("gamma"))
      .def_property_readonly("m", &SyntheticQuadratic::num_agents)
      .def_property_readonly("n", &SyntheticQuadratic::num_samples)
      .def_property_readonly("d1", &SyntheticQuadratic::outer_dim)
      .def_property_readonly("d2", &SyntheticQuadratic::inner_dim)
      .def_property_readonly("mu_g", &SyntheticQuadratic::mu_strong)
      .def_property_readonly("l_g", &SyntheticQuadratic::inner_lip)
      .def_property_readonly("gamma", &SyntheticQuadratic::gamma)
      .def(
          "outer_value",
          [](const SyntheticQuadratic& p, int agent, const Vector& x, const Vector& y,
             std::optional<std::vector<int>> batch) {
            const auto b = resolve_batch(p, batch);
            return p.outer_value(agent, x, y, Batch(b));
          },
          py::arg("agent"), py::arg("x"), py::arg("y"), py::arg("batch") = py::none())
      .def(
          "inner_value",
          [](const SyntheticQuadratic& p, int agent, const Vector& x, const Vector& y,
             std::optional<std::vector<int>> batch) {
            const auto b = resolve_batch(p, batch);
            return p.inner_value(agent, x, y, Batch(b));
          },
          py::arg("agent"), py::arg("x"), py::arg("y"), py::arg("batch") = py::none())
      .def(
          "outer_grads",
          [](const SyntheticQuadratic& p, int agent, const Vector& x, const Vector& y,
             std::optional<std::vector<int>> batch) {
            const auto b = resolve_batch(p, batch);
            Vector gx, gy;
            p.outer_grads(agent, x, y, Batch(b), gx, gy);
            return py::make_tuple(gx, gy);
          },
          py::arg("agent"), py::arg("x"), py::arg("y"), py::arg("batch") = py::none())
      .def(
          "inner_grad",
          [](const SyntheticQuadratic& p, int agent, const Vector& x, const Vector& y,
             std::optional<std::vector<int>> batch) {
            const auto b = resolve_batch(p, batch);
            return p.inner_grad(agent, x, y, Batch(b));
          },
          py::arg("agent"), py::arg("x"), py::arg("y"), py::arg("batch") = py::none())
      .def(
          "hess_yy",
          [](const SyntheticQuadratic& p, int agent, const Vector& x, const Vector& y,
             std::optional<std::vector<int>> batch) {
            const auto b = resolve_batch(p, batch);
            return p.hess_yy(agent, x, y, Batch(b));
          },
          py::arg("agent"), py::arg("x"), py::arg("y"), py::arg("batch") = py::none())
      .def(
          "hvp_yy",
          [](const SyntheticQuadratic& p, int agent, const Vector& x, const Vector& y,
             const Vector& v, std::optional<std::vector<int>> batch) {
            const auto b = resolve_batch(p, batch);
            return p.hvp_yy(agent, x, y, Batch(b), v);
          },
          py::arg("agent"), py::arg("x"), py::arg("y"), py::arg("v"),
          py::arg("batch") = py::none())
      .def(
          "hvp_xy",
          [](const SyntheticQuadratic& p, int agent, const Vector& x, const Vector& y,
             const Vector& v, std::optional<std::vector<int>> batch) {
            const auto b = resolve_batch(p, batch);
            return p.hvp_xy(agent, x, y, Batch(b), v);
          },
          py::arg("agent"), py::arg("x"), py::arg("y"), py::arg("v"),
          py::arg("batch") = py::none())
      .def("inner_opt", &SyntheticQuadratic::inner_opt, py::arg("agent"), py::arg("x"))
      .def("constants", &SyntheticQuadratic::constants, py::arg("region_radius") = 10.0)
      .def("snapshot", &SyntheticQuadratic::snapshot)
      .def_static("from_snapshot", &SyntheticQuadratic::from_snapshot);

  m.def("hypergrad_full", &hypergrad_full, py::arg("problem"), py::arg("agent"), py::arg("x"),
        py::arg("y"));
  m.def("true_local_grad", &true_local_grad, py::arg("problem"), py::arg("agent"), py::arg("x"));
  m.def("true_global_grad", &true_global_grad, py::arg("problem"), py::arg("xbar"));
  m.def(
      "hypergrad_stoch",
      [](const BilevelProblem& p, int agent, const Vector& x, const Vector& y, int k,
         CounterRng& rng) { return hypergrad_stoch(p, agent, x, y, k, rng); },
      py::arg("problem"), py::arg("agent"), py::arg("x"), py::arg("y"), py::arg("neumann_k"),
      py::arg("rng"));
  m.def("bias_bound", &bias_bound, py::arg("constants"), py::arg("neumann_k"));
  m.def("derived_constants", &derived_constants, py::arg("constants"),
        py::arg("neumann_k") = py::none());
  m.def(
      "stepsize_bounds",
      [](const DerivedConstants& dc, const ProblemConstants& c, double lambda, int m_agents,
         const std::string& rule) {
        const auto r = rule == "svr" || rule == "svr-interact"
                           ? StepsizeRule::variance_reduced
                           : StepsizeRule::gradient_tracking;
        const StepSizes s = stepsize_bounds(dc, c, lambda, m_agents, r);
        return py::make_tuple(s.alpha, s.beta, s.r);
      },
      py::arg("derived"), py::arg("constants"), py::arg("lam"), py::arg("m"),
      py::arg("rule") = "interact");
  m.def(
      "stepsize_clauses",
      [](const DerivedConstants& dc, const ProblemConstants& c, double lambda, int m_agents,
         const std::string& rule) {
        const auto r = rule == "svr" || rule == "svr-interact"
                           ? StepsizeRule::variance_reduced
                           : StepsizeRule::gradient_tracking;
        const StepSizes s = stepsize_bounds(dc, c, lambda, m_agents, r);
        py::list betas, alphas;
        for (const auto& cl : beta_clauses(dc, c, lambda, m_agents, r))
          betas.append(py::make_tuple(cl.expr, cl.value));
        for (const auto& cl : alpha_clauses(dc, c, lambda, m_agents, r, s.beta, s.r))
          alphas.append(py::make_tuple(cl.expr, cl.value));
        return py::make_tuple(betas, alphas);
      },
      py::arg("derived"), py::arg("constants"), py::arg("lam"), py::arg("m"),
      py::arg("rule") = "interact");

  m.def("rate_fit", &rate_fit, py::arg("t"), py::arg("v"), py::arg("t_min"), py::arg("t_max"));

  m.def(
      "execute",
      [](const py::dict& config) {
        const RunConfig cfg = parse_config(dict_to_json(config));
        const ExecuteSummary summary = execute(cfg);
        py::dict out;
        out["final_running_mean_metric"] = summary.final_running_mean_metric;
        out["total_ifo_per_agent"] = summary.total_ifo_per_agent;
        out["comm_rounds"] = summary.comm_rounds;
        out["slope"] = summary.slope;
        out["alpha"] = summary.alpha;
        out["beta"] = summary.beta;
        out["aggregate_csv_path"] = summary.aggregate_csv_path;
        py::list seeds;
        for (const auto& sr : summary.per_seed) {
          py::dict entry;
          entry["seed"] = sr.seed;
          entry["csv_path"] = sr.csv_path;
          entry["records"] = records_to_dict(sr.trajectory.records);
          entry["max_tracking_gap"] = sr.trajectory.diagnostics.max_tracking_gap;
          seeds.append(entry);
        }
        out["per_seed"] = seeds;
        return out;
      },
      py::arg("config"),
      "Run one experiment from a config dict (same keys as the CLI/JSON config); "
      "writes CSVs and returns the trajectories.");
}
