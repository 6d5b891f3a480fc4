#pragma once

#include <optional>
#include <string>
#include <vector>

#include "braess/equilibrium.hpp"
#include "braess/network.hpp"

namespace braess {

enum class EliminationMethod {
  greedy_link,
  link_combination,
  link_route_combination,
  greedy_route,
  route_combination,
};

std::string method_name(EliminationMethod method);
std::optional<EliminationMethod> parse_method(const std::string& name);

struct EliminationOptions {
  SolverOptions solver;
  int max_set_size = 2;
  long evaluation_budget = 10000;  // max equilibrium solves per enumeration
  double accept_rel_tol = 1e-5;    // a removal must beat Y by this fraction
  int threads = 0;                 // 0: hardware concurrency
};

struct RemovalCandidate {
  enum class Kind { link, route, link_set, route_set };
  Kind kind = Kind::route;
  std::vector<std::string> ids;
};

struct CandidateValue {
  bool feasible = false;
  double value = 0.0;  // Y_new - Y
  double y_new = 0.0;
};

/// Value of tentatively removing a candidate: solves the reduced network and
/// returns Y_new - Y. Infeasible candidates (connectivity) are reported, not
/// thrown. Pass y_base to reuse the current network's solved delay.
CandidateValue candidate_value(const Network& net, const DelayMap& delays,
                               const SolverOptions& solver, const RemovalCandidate& candidate,
                               std::optional<double> y_base = std::nullopt);

struct RemovalStep {
  std::string kind;  // "link", "route", "link_set", "route_set"
  std::vector<std::string> removed_routes;
  std::vector<std::string> removed_links;  // including orphaned ones
  double y_before = 0.0;
  double y_after = 0.0;
  double value = 0.0;
};

struct RemovalReport {
  EliminationMethod method = EliminationMethod::greedy_route;
  std::vector<RemovalStep> steps;
  Network final_network;
  double y_original = 0.0;
  double y_final = 0.0;
  double improvement = 0.0;  // (Y_orig - Y_final) / Y_orig
  bool paradox_free = false;
  bool zero_flow_shortcut = false;  // verdict via the zero-flow early exit
  long solves = 0;
};

RemovalReport greedy_link_removal(const Network& net, const DelayMap& delays,
                                  const EliminationOptions& options);
RemovalReport link_combination_removal(const Network& net, const DelayMap& delays,
                                       const EliminationOptions& options);
RemovalReport link_route_combination_removal(const Network& net, const DelayMap& delays,
                                             const EliminationOptions& options);
RemovalReport greedy_route_removal(const Network& net, const DelayMap& delays,
                                   const EliminationOptions& options);
RemovalReport route_combination_removal(const Network& net, const DelayMap& delays,
                                        const EliminationOptions& options);

RemovalReport run_elimination(EliminationMethod method, const Network& net,
                              const DelayMap& delays, const EliminationOptions& options);

}  // namespace braess
