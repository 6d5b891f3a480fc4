#pragma once

#include <optional>
#include <string>
#include <vector>

#include "braess/delay.hpp"
#include "braess/network.hpp"

namespace braess {

struct SolverOptions {
  double rel_gap_tol = 1e-6;
  int max_iters = 100000;
  double flow_tol_rel = 1e-6;     // a route is "used" when x > flow_tol_rel * d_k
  double wardrop_tol_rel = 1e-4;  // used-route excess time, relative to OD minimum
  bool record_objective = false;
  std::optional<std::vector<double>> start;  // route flows; default: equal split per OD
};

/// Route-flow formulation of the equilibrium program: minimize the sum of
/// link potentials subject to per-OD demand conservation and nonnegativity.
struct EquilibriumProblem {
  RoutingMatrix routing;
  std::vector<DelayFunction> link_delays;   // one per matrix column
  std::vector<std::string> od_ids;
  std::vector<double> od_demand_vph;        // one per OD group
  std::vector<std::vector<int>> od_routes;  // route indexes per OD group
  SolverOptions options;

  static EquilibriumProblem from_network(const Network& net, const DelayMap& delays,
                                         SolverOptions options = {});
  void validate() const;
  double total_demand() const;
};

struct EquilibriumResult {
  std::vector<double> route_flows_vph;
  std::vector<double> link_flows_vph;
  std::vector<double> route_times_h;
  double objective = 0.0;
  double total_delay = 0.0;      // veh.h per h, sum of z * phi(z)
  double delay_per_vehicle_h = 0.0;
  double rel_gap = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // filled when options.record_objective
};

/// Minimizes the potential objective with Frank-Wolfe steps (closed-form
/// all-or-nothing oracle, exact bisection line search) plus per-OD pairwise
/// flow transfers that resolve the active route set.
EquilibriumResult solve(const EquilibriumProblem& problem);

double total_delay(const EquilibriumResult& result, const EquilibriumProblem& problem);

/// Per-OD max excess travel time of used routes over the OD minimum (hours).
std::vector<double> wardrop_residual(const EquilibriumResult& result,
                                     const EquilibriumProblem& problem);

/// Largest per-OD residual relative to that OD's minimum route time.
double max_relative_wardrop_residual(const EquilibriumResult& result,
                                     const EquilibriumProblem& problem);

}  // namespace braess
