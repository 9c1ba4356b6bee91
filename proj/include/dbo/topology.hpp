#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace dbo {

// Undirected communication graph over m agents. No self-loops; neighbor lists
// are kept sorted ascending so every per-agent reduction has a fixed order.
struct Graph {
  int m = 0;
  std::vector<std::pair<int, int>> edges;       // (i, j) with i < j, sorted
  std::vector<std::vector<int>> neighbors;      // per agent, ascending

  static Graph from_edges(int m, std::vector<std::pair<int, int>> edges);
  bool has_edge(int i, int j) const;
  bool connected() const;
};

// Symmetric doubly stochastic mixing matrix together with its second-largest
// eigenvalue magnitude, the quantity that controls consensus contraction.
struct ConsensusMatrix {
  Eigen::MatrixXd entries;
  double lambda = 0.0;
};

// Erdos-Renyi draw conditioned on connectivity: each pair is included with
// probability p; disconnected draws are rejected and redrawn on a fresh
// sub-stream, up to 1000 attempts.
Graph generate_er_graph(int m, double p, std::uint64_t seed);

// L = D - A. Rows sum to zero.
Eigen::MatrixXd laplacian(const Graph& g);

// M = I - 2 L / (3 lambda_max(L)) for a connected graph; the single agent
// graph maps to M = [1]. Fails if the graph is disconnected.
ConsensusMatrix build_consensus_matrix(const Graph& g);

// max(|lambda_2|, |lambda_m|) over the sorted real spectrum. Fails when the
// spectrum leaves (-1, 1], when the top eigenvalue is not 1 (tolerance 1e-9),
// or when the gap closes (lambda = 1, i.e. a disconnected graph).
double spectral_gap(const Eigen::MatrixXd& m);

// Plain text edge list: `m` on the first line, one `i j` pair per line after.
void write_edge_list(std::ostream& out, const Graph& g);
Graph read_edge_list(std::istream& in);

}  // namespace dbo
