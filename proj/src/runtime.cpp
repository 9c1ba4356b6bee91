#include "dbo/runtime.hpp"

#include <exception>

#include "dbo/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dbo {

ExchangePlan make_exchange_plan(const Graph& g, const ConsensusMatrix& cm) {
  if (cm.entries.rows() != g.m || cm.entries.cols() != g.m)
    throw ConfigError("mixing matrix size does not match the graph");
  ExchangePlan plan;
  plan.m = g.m;
  plan.links.resize(g.m);
  for (int i = 0; i < g.m; ++i) {
    for (int j : g.neighbors[i])
      if (j < i) plan.links[i].push_back({j, cm.entries(i, j)});
    plan.links[i].push_back({i, cm.entries(i, i)});
    for (int j : g.neighbors[i])
      if (j > i) plan.links[i].push_back({j, cm.entries(i, j)});
  }
  return plan;
}

std::vector<Vector> mix(const ExchangePlan& plan, const std::vector<Vector>& values) {
  if (static_cast<int>(values.size()) != plan.m)
    throw std::invalid_argument("mix: wrong number of agent blocks");
  const auto dim = values.empty() ? 0 : values.front().size();
  for (const auto& v : values)
    if (v.size() != dim) throw std::invalid_argument("mix: agent blocks have mixed dimensions");
  std::vector<Vector> out(plan.m);
  for (int i = 0; i < plan.m; ++i) {
    Vector acc = Vector::Zero(dim);
    for (const auto& link : plan.links[i]) acc += link.weight * values[link.peer];
    out[i] = std::move(acc);
  }
  return out;
}

void run_round(int m, int threads, const std::function<void(int)>& body) {
  if (threads <= 1) {
    for (int i = 0; i < m; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(m);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads)
  for (int i = 0; i < m; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
#else
  for (int i = 0; i < m; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
#endif
  for (int i = 0; i < m; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
}

}  // namespace dbo
