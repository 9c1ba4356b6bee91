#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <stdexcept>

#include "dbo/rng.hpp"
#include "dbo/runtime.hpp"
#include "dbo/topology.hpp"

using namespace dbo;

namespace {

std::vector<Vector> random_blocks(int m, int d, std::uint64_t seed) {
  CounterRng rng(seed, RngDomain::harness, 9);
  std::vector<Vector> blocks(m, Vector(d));
  for (auto& b : blocks)
    for (int k = 0; k < d; ++k) b(k) = rng.normal();
  return blocks;
}

}  // namespace

TEST_CASE("two-agent mix by hand") {
  const Graph g = Graph::from_edges(2, {{0, 1}});
  const auto cm = build_consensus_matrix(g);
  const auto plan = make_exchange_plan(g, cm);
  const auto out = mix(plan, {Vector::Constant(1, 0.0), Vector::Constant(1, 3.0)});
  CHECK(out[0](0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(out[1](0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("identical inputs are a fixed point") {
  const Graph g = generate_er_graph(6, 0.5, 3);
  const auto plan = make_exchange_plan(g, build_consensus_matrix(g));
  const Vector v = Vector::LinSpaced(4, -1.0, 2.0);
  const auto out = mix(plan, std::vector<Vector>(6, v));
  for (const auto& o : out) CHECK((o - v).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("mix preserves the mean, is linear, and respects sparsity") {
  const Graph g = generate_er_graph(7, 0.4, 5);
  const auto cm = build_consensus_matrix(g);
  const auto plan = make_exchange_plan(g, cm);
  const auto x = random_blocks(7, 5, 1);
  const auto y = random_blocks(7, 5, 2);

  const auto mx = mix(plan, x);
  Vector mean_in = Vector::Zero(5), mean_out = Vector::Zero(5);
  for (int i = 0; i < 7; ++i) {
    mean_in += x[i];
    mean_out += mx[i];
  }
  CHECK((mean_in - mean_out).cwiseAbs().maxCoeff() / 7.0 <= 1e-12);

  // linearity
  std::vector<Vector> combo(7);
  for (int i = 0; i < 7; ++i) combo[i] = 2.0 * x[i] - 0.5 * y[i];
  const auto mc = mix(plan, combo);
  const auto my = mix(plan, y);
  for (int i = 0; i < 7; ++i)
    CHECK((mc[i] - (2.0 * mx[i] - 0.5 * my[i])).cwiseAbs().maxCoeff() <= 1e-12);

  // neighbor-only plan agrees with the dense multiply, so non-edges carry 0
  for (int i = 0; i < 7; ++i) {
    Vector dense = Vector::Zero(5);
    for (int j = 0; j < 7; ++j) dense += cm.entries(i, j) * x[j];
    CHECK((mx[i] - dense).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("zero-mean blocks contract through the plan") {
  const Graph g = generate_er_graph(9, 0.5, 8);
  const auto cm = build_consensus_matrix(g);
  const auto plan = make_exchange_plan(g, cm);
  auto x = random_blocks(9, 3, 4);
  Vector mean = Vector::Zero(3);
  for (const auto& b : x) mean += b;
  mean /= 9.0;
  for (auto& b : x) b -= mean;
  double in2 = 0, out2 = 0;
  const auto mx = mix(plan, x);
  for (int i = 0; i < 9; ++i) {
    in2 += x[i].squaredNorm();
    out2 += mx[i].squaredNorm();
  }
  CHECK(std::sqrt(out2) <= cm.lambda * std::sqrt(in2) * (1.0 + 1e-12));
}

TEST_CASE("mix input validation") {
  const Graph g = Graph::from_edges(2, {{0, 1}});
  const auto plan = make_exchange_plan(g, build_consensus_matrix(g));
  CHECK_THROWS_AS(mix(plan, {Vector::Zero(1)}), std::invalid_argument);
  CHECK_THROWS_AS(mix(plan, {Vector::Zero(1), Vector::Zero(2)}), std::invalid_argument);
}

TEST_CASE("round bodies run once per agent on any schedule") {
  for (const int threads : {1, 2, 4}) {
    std::vector<double> out(16, 0.0);
    std::atomic<int> calls{0};
    run_round(16, threads, [&](int i) {
      out[i] = 3.0 * i + 1.0;
      calls.fetch_add(1);
    });
    CHECK(calls.load() == 16);
    for (int i = 0; i < 16; ++i) CHECK(out[i] == 3.0 * i + 1.0);
  }
}

TEST_CASE("serial and parallel schedules produce identical floats") {
  auto compute = [](int threads) {
    std::vector<double> out(12);
    run_round(12, threads, [&](int i) {
      CounterRng rng(99, RngDomain::agent, static_cast<std::uint32_t>(i));
      double acc = 0;
      for (int k = 0; k < 100; ++k) acc += rng.normal() * 1e-3 + std::sin(acc);
      out[i] = acc;
    });
    return out;
  };
  const auto serial = compute(1);
  const auto parallel = compute(4);
  for (int i = 0; i < 12; ++i) CHECK(serial[i] == parallel[i]);
}

TEST_CASE("a failing agent aborts the round") {
  for (const int threads : {1, 3}) {
    CHECK_THROWS_AS(run_round(8, threads,
                              [&](int i) {
                                if (i == 5) throw std::runtime_error("boom");
                              }),
                    std::runtime_error);
  }
}
