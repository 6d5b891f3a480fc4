#include "braess/equilibrium.hpp"

#include <cmath>
#include <doctest.h>
#include <random>

#include "braess/errors.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace braess;
using fixtures::physical_link;
using fixtures::plain_node;
using oracles::grid_search_min;
using oracles::random_problem;

namespace {

EquilibriumProblem two_parallel_linear(double demand) {
  std::vector<Node> nodes = {plain_node("A"), plain_node("B")};
  std::vector<Link> links = {physical_link("p1", "A", "B"), physical_link("p2", "A", "B")};
  std::vector<ODPair> ods = {{"k", "A", "B", demand}};
  std::vector<Route> routes = {{"r1", "k", {"p1"}}, {"r2", "k", {"p2"}}};
  Network net = Network::build(nodes, links, ods, routes);
  DelayMap delays;
  // phi(z) ~= z: slope t0*a/cap = 1.
  delays["p1"] = BprDelay{1e-9, 1e9, 1.0, 1.0};
  delays["p2"] = BprDelay{1e-9, 1e9, 1.0, 1.0};
  return EquilibriumProblem::from_network(net, delays);
}

}  // namespace

TEST_CASE("two identical parallel links split evenly") {
  auto p = two_parallel_linear(2.0);
  auto result = solve(p);
  CHECK(result.converged);
  CHECK(result.route_flows_vph[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(result.route_flows_vph[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(result.route_times_h[0] == doctest::Approx(result.route_times_h[1]));
}

TEST_CASE("single route carries all demand") {
  std::vector<Node> nodes = {plain_node("A"), plain_node("B")};
  std::vector<Link> links = {physical_link("e", "A", "B")};
  std::vector<ODPair> ods = {{"k", "A", "B", 700.0}};
  std::vector<Route> routes = {{"r", "k", {"e"}}};
  Network net = Network::build(nodes, links, ods, routes);
  DelayMap delays;
  delays["e"] = BprDelay{0.01, 0.15, 4.0, 1000.0};
  auto p = EquilibriumProblem::from_network(net, delays);
  auto result = solve(p);
  CHECK(result.route_flows_vph[0] == doctest::Approx(700.0));
  const double phi = eval(delays["e"], 700.0);
  CHECK(result.total_delay == doctest::Approx(700.0 * phi).epsilon(1e-9));
}

TEST_CASE("classic diamond sends everything over the cross route") {
  auto diamond = fixtures::classic_diamond(4000.0);
  auto p = EquilibriumProblem::from_network(diamond.net, diamond.delays);
  auto result = solve(p);
  CHECK(result.converged);
  CHECK(result.delay_per_vehicle_h == doctest::Approx(80.0).epsilon(1e-3));
  const int cross = p.routing.route_index.at("r_cross");
  CHECK(result.route_flows_vph[static_cast<size_t>(cross)] ==
        doctest::Approx(4000.0).epsilon(1e-6));
  CHECK(result.total_delay == doctest::Approx(320000.0).epsilon(1e-3));

  Network reduced = remove_routes(diamond.net, {"r_cross"});
  auto p2 = EquilibriumProblem::from_network(reduced, diamond.delays);
  auto r2 = solve(p2);
  CHECK(r2.delay_per_vehicle_h == doctest::Approx(65.0).epsilon(1e-3));
  CHECK(r2.total_delay == doctest::Approx(260000.0).epsilon(1e-3));
  CHECK(r2.route_flows_vph[0] == doctest::Approx(2000.0).epsilon(1e-4));
}

TEST_CASE("zero demand gives zero delay") {
  auto diamond = fixtures::classic_diamond(0.0);
  auto p = EquilibriumProblem::from_network(diamond.net, diamond.delays);
  auto result = solve(p);
  CHECK(result.total_delay == doctest::Approx(0.0));
}

TEST_CASE("wardrop residual behaves") {
  auto diamond = fixtures::classic_diamond(4000.0);
  auto p = EquilibriumProblem::from_network(diamond.net, diamond.delays);
  auto result = solve(p);
  CHECK(max_relative_wardrop_residual(result, p) <= 1e-4);

  // Deliberately unbalanced flows show a positive residual.
  EquilibriumResult perturbed = result;
  const int cross = p.routing.route_index.at("r_cross");
  const int upper = p.routing.route_index.at("r_upper");
  perturbed.route_flows_vph[static_cast<size_t>(cross)] = 3000.0;
  perturbed.route_flows_vph[static_cast<size_t>(upper)] = 1000.0;
  std::fill(perturbed.link_flows_vph.begin(), perturbed.link_flows_vph.end(), 0.0);
  for (size_t j = 0; j < perturbed.route_flows_vph.size(); ++j)
    for (int i : p.routing.rows[j])
      perturbed.link_flows_vph[static_cast<size_t>(i)] += perturbed.route_flows_vph[j];
  for (size_t j = 0; j < perturbed.route_flows_vph.size(); ++j) {
    double t = 0.0;
    for (int i : p.routing.rows[j])
      t += eval(p.link_delays[static_cast<size_t>(i)],
                perturbed.link_flows_vph[static_cast<size_t>(i)]);
    perturbed.route_times_h[j] = t;
  }
  const auto residual = wardrop_residual(perturbed, p);
  CHECK(residual[0] > 0.0);
}

TEST_CASE("missing route for demand raises") {
  std::vector<Node> nodes = {plain_node("A"), plain_node("B"), plain_node("C")};
  std::vector<Link> links = {physical_link("e", "A", "B")};
  std::vector<ODPair> ods = {{"k", "A", "B", 10.0}, {"k2", "A", "C", 5.0}};
  std::vector<Route> routes = {{"r", "k", {"e"}}};
  Network net = Network::build(nodes, links, ods, routes);
  DelayMap delays;
  delays["e"] = BprDelay{0.01, 0.15, 4.0, 1000.0};
  CHECK_THROWS_AS(EquilibriumProblem::from_network(net, delays), NoRouteForDemand);
}

TEST_CASE("missing delay function raises") {
  auto diamond = fixtures::classic_diamond();
  DelayMap incomplete = diamond.delays;
  incomplete.erase("bc");
  CHECK_THROWS_AS(EquilibriumProblem::from_network(diamond.net, incomplete), InputError);
}

TEST_CASE("objective decreases monotonically and feasibility is exact") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    auto p = random_problem(rng, 10, 6, 3);
    p.options.record_objective = true;
    auto result = solve(p);
    for (size_t i = 1; i < result.objective_trace.size(); ++i)
      CHECK(result.objective_trace[i] <=
            result.objective_trace[i - 1] * (1.0 + 1e-12) + 1e-12);
    for (size_t k = 0; k < p.od_routes.size(); ++k) {
      double sum = 0.0;
      for (int j : p.od_routes[k]) sum += result.route_flows_vph[static_cast<size_t>(j)];
      CHECK(sum == doctest::Approx(p.od_demand_vph[k]).epsilon(1e-10));
      for (int j : p.od_routes[k]) CHECK(result.route_flows_vph[static_cast<size_t>(j)] >= 0.0);
    }
  }
}

TEST_CASE("grid search never beats the solver meaningfully") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 6; ++trial) {
    auto p = random_problem(rng, 8, 3, 2);
    REQUIRE(p.routing.route_count() <= 3);
    auto result = solve(p);
    const double grid = grid_search_min(p, 1000);
    CHECK(grid >= result.objective - 1e-4 * std::abs(result.objective));
  }
}

TEST_CASE("link flows are unique across starting points") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_problem(rng, 10, 6, 3);
    auto r1 = solve(p);

    // Start from an extreme feasible point instead of the equal split.
    std::vector<double> start(static_cast<size_t>(p.routing.route_count()), 0.0);
    for (size_t k = 0; k < p.od_routes.size(); ++k)
      start[static_cast<size_t>(p.od_routes[k].back())] = p.od_demand_vph[k];
    p.options.start = start;
    auto r2 = solve(p);

    for (int i = 0; i < p.routing.link_count(); ++i) {
      const double a = r1.link_flows_vph[static_cast<size_t>(i)];
      const double b = r2.link_flows_vph[static_cast<size_t>(i)];
      CHECK(std::abs(a - b) <= 1e-4 * std::max({std::abs(a), std::abs(b), 1.0}));
    }
  }
}

TEST_CASE("non-convergence is reported, not thrown") {
  auto diamond = fixtures::classic_diamond(4000.0);
  SolverOptions opts;
  opts.max_iters = 1;
  opts.rel_gap_tol = 1e-14;
  auto p = EquilibriumProblem::from_network(diamond.net, diamond.delays, opts);
  auto result = solve(p);
  CHECK_FALSE(result.converged);
  CHECK(result.iterations == 1);
}
