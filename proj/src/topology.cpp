#include "dbo/topology.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "dbo/errors.hpp"
#include "dbo/rng.hpp"

namespace dbo {

Graph Graph::from_edges(int m, std::vector<std::pair<int, int>> edges) {
  if (m < 1) throw ConfigError("graph needs at least one agent");
  Graph g;
  g.m = m;
  for (auto& [i, j] : edges) {
    if (i == j) throw ConfigError("self-loop on agent " + std::to_string(i));
    if (i < 0 || j < 0 || i >= m || j >= m) throw ConfigError("edge endpoint out of range");
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  g.neighbors.assign(m, {});
  for (const auto& [i, j] : g.edges) {
    g.neighbors[i].push_back(j);
    g.neighbors[j].push_back(i);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  return g;
}

bool Graph::has_edge(int i, int j) const {
  if (i > j) std::swap(i, j);
  return std::binary_search(edges.begin(), edges.end(), std::make_pair(i, j));
}

bool Graph::connected() const {
  if (m <= 1) return true;
  std::vector<char> seen(m, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : neighbors[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        stack.push_back(w);
      }
    }
  }
  return count == m;
}

Graph generate_er_graph(int m, double p, std::uint64_t seed) {
  if (m < 2) throw ConfigError("generate_er_graph needs m >= 2");
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("edge probability must lie in (0, 1]");
  for (std::uint32_t attempt = 0; attempt < 1000; ++attempt) {
    CounterRng rng(seed, RngDomain::topology, attempt);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (rng.next_double() < p) edges.emplace_back(i, j);
    Graph g = Graph::from_edges(m, std::move(edges));
    if (g.connected()) return g;
  }
  std::ostringstream msg;
  msg << "no connected graph after 1000 draws (m=" << m << ", p=" << p
      << "); p is too small for this m";
  throw ConfigError(msg.str());
}

Eigen::MatrixXd laplacian(const Graph& g) {
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(g.m, g.m);
  for (const auto& [i, j] : g.edges) {
    lap(i, i) += 1.0;
    lap(j, j) += 1.0;
    lap(i, j) -= 1.0;
    lap(j, i) -= 1.0;
  }
  return lap;
}

ConsensusMatrix build_consensus_matrix(const Graph& g) {
  if (!g.connected()) throw ConfigError("graph is disconnected; mixing would not contract");
  ConsensusMatrix cm;
  if (g.m == 1) {
    cm.entries = Eigen::MatrixXd::Ones(1, 1);
    cm.lambda = 0.0;
    return cm;
  }
  const Eigen::MatrixXd lap = laplacian(g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
  const double lap_max = es.eigenvalues()(g.m - 1);
  cm.entries = Eigen::MatrixXd::Identity(g.m, g.m) - (2.0 / (3.0 * lap_max)) * lap;
  cm.lambda = spectral_gap(cm.entries);
  return cm;
}

double spectral_gap(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  if (n == 1) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues();  // ascending
  if (std::abs(ev(n - 1) - 1.0) > 1e-9)
    throw OracleError("mixing matrix: top eigenvalue is not 1");
  if (ev(0) <= -1.0) throw OracleError("mixing matrix: eigenvalue at or below -1");
  const double gap = std::max(std::abs(ev(n - 2)), std::abs(ev(0)));
  if (gap >= 1.0 - 1e-12)
    throw OracleError("mixing matrix: unit eigenvalue has multiplicity > 1 (disconnected graph)");
  return gap;
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << g.m << "\n";
  for (const auto& [i, j] : g.edges) out << i << " " << j << "\n";
}

Graph read_edge_list(std::istream& in) {
  int m = 0;
  if (!(in >> m)) throw ConfigError("edge list: missing agent count");
  std::vector<std::pair<int, int>> edges;
  int i, j;
  while (in >> i >> j) edges.emplace_back(i, j);
  return Graph::from_edges(m, std::move(edges));
}

}  // namespace dbo
