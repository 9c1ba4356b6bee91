#pragma once

#include <functional>
#include <vector>

#include "dbo/problem.hpp"
#include "dbo/topology.hpp"

namespace dbo {

// Who talks to whom, with which weight. Built once from the mixing matrix
// sparsity; links are (peer, weight) in ascending peer order with the self
// weight included, so each agent's reduction has one fixed float order and
// results cannot depend on the execution schedule.
struct ExchangePlan {
  struct Link {
    int peer;
    double weight;
  };
  int m = 0;
  std::vector<std::vector<Link>> links;
};

ExchangePlan make_exchange_plan(const Graph& g, const ConsensusMatrix& cm);

// out_i = sum over links of w * values_peer. Touches only graph neighbors
// plus self; preserves the cross-agent mean (double stochasticity).
std::vector<Vector> mix(const ExchangePlan& plan, const std::vector<Vector>& values);

// Runs body(agent) for every agent of one round, serially or on an OpenMP
// team, and returns only after all complete (the barrier). Agents must write
// disjoint slots; any failure is rethrown (lowest agent id wins) after the
// round drains, so a caller that writes into scratch state commits nothing.
void run_round(int m, int threads, const std::function<void(int)>& body);

}  // namespace dbo
