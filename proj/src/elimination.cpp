#include "braess/elimination.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "braess/errors.hpp"

namespace braess {

std::string method_name(EliminationMethod method) {
  switch (method) {
    case EliminationMethod::greedy_link: return "greedy-link";
    case EliminationMethod::link_combination: return "link-combo";
    case EliminationMethod::link_route_combination: return "link-route";
    case EliminationMethod::greedy_route: return "greedy-route";
    case EliminationMethod::route_combination: return "route-combo";
  }
  return "?";
}

std::optional<EliminationMethod> parse_method(const std::string& name) {
  for (auto m : {EliminationMethod::greedy_link, EliminationMethod::link_combination,
                 EliminationMethod::link_route_combination, EliminationMethod::greedy_route,
                 EliminationMethod::route_combination})
    if (method_name(m) == name) return m;
  return std::nullopt;
}

namespace {

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct Context {
  const DelayMap& delays;
  const EliminationOptions& opts;
  std::atomic<long> solves{0};

  EquilibriumResult solve_network(const Network& net) {
    ++solves;
    auto problem = EquilibriumProblem::from_network(net, delays, opts.solver);
    return braess::solve(problem);
  }

  double solve_y(const Network& net) { return solve_network(net).total_delay; }

  double accept_band(double y) const {
    return std::max(1e-12, opts.accept_rel_tol * std::abs(y));
  }

  std::optional<Network> reduced(const Network& net, const RemovalCandidate& c) const {
    try {
      std::set<std::string> ids(c.ids.begin(), c.ids.end());
      if (c.kind == RemovalCandidate::Kind::link ||
          c.kind == RemovalCandidate::Kind::link_set)
        return remove_links(net, ids);
      return remove_routes(net, ids);
    } catch (const ConnectivityViolation&) {
      return std::nullopt;
    }
  }
};

std::vector<std::string> sorted_physical_links(const Network& net) {
  std::vector<std::string> out;
  for (const auto& link : net.links())
    if (link.physical()) out.push_back(link.id);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> sorted_routes(const Network& net) {
  std::vector<std::string> out;
  for (const auto& route : net.routes()) out.push_back(route.id);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> missing_ids(const Network& before, const Network& after,
                                     bool links) {
  std::vector<std::string> out;
  if (links) {
    for (const auto& link : before.links())
      if (!after.has_link(link.id)) out.push_back(link.id);
  } else {
    for (const auto& route : before.routes())
      if (!after.has_route(route.id)) out.push_back(route.id);
  }
  return out;
}

RemovalStep make_step(const std::string& kind, const Network& before, const Network& after,
                      double y_before, double y_after) {
  RemovalStep step;
  step.kind = kind;
  step.removed_routes = missing_ids(before, after, false);
  step.removed_links = missing_ids(before, after, true);
  step.y_before = y_before;
  step.y_after = y_after;
  step.value = y_after - y_before;
  return step;
}

void finish_report(RemovalReport& report, const Network& final_net, double y_orig,
                   double y_final, long solves) {
  report.final_network = final_net;
  report.y_original = y_orig;
  report.y_final = y_final;
  report.improvement = y_orig > 0.0 ? std::max(0.0, (y_orig - y_final) / y_orig) : 0.0;
  report.paradox_free = report.steps.empty();
  report.solves = solves;
}

struct Valued {
  bool feasible = false;
  double y_new = 0.0;
  Network net;
};

/// Values every candidate against the current network concurrently;
/// results keep the candidate order, so selection stays deterministic.
std::vector<Valued> value_all(Context& ctx, const Network& net,
                              const std::vector<RemovalCandidate>& candidates) {
  std::vector<Valued> out(candidates.size());
  parallel_for(static_cast<int>(candidates.size()), ctx.opts.threads, [&](int i) {
    auto reduced = ctx.reduced(net, candidates[static_cast<size_t>(i)]);
    if (!reduced) return;
    auto& slot = out[static_cast<size_t>(i)];
    slot.feasible = true;
    slot.y_new = ctx.solve_y(*reduced);
    slot.net = std::move(*reduced);
  });
  return out;
}

RemovalReport greedy_removal(const Network& base, const DelayMap& delays,
                             const EliminationOptions& opts, bool over_links) {
  Context ctx{delays, opts};
  RemovalReport report;
  report.method = over_links ? EliminationMethod::greedy_link : EliminationMethod::greedy_route;

  Network net = base;
  EquilibriumResult current = ctx.solve_network(net);
  const double y_orig = current.total_delay;
  double y = y_orig;

  for (int round = 0;; ++round) {
    const auto ids = over_links ? sorted_physical_links(net) : sorted_routes(net);
    std::vector<RemovalCandidate> candidates;
    candidates.reserve(ids.size());
    for (const auto& id : ids)
      candidates.push_back({over_links ? RemovalCandidate::Kind::link
                                       : RemovalCandidate::Kind::route,
                            {id}});
    const auto valued = value_all(ctx, net, candidates);

    int best = -1;
    for (size_t i = 0; i < valued.size(); ++i) {
      if (!valued[i].feasible) continue;
      if (best < 0 || valued[i].y_new < valued[static_cast<size_t>(best)].y_new)
        best = static_cast<int>(i);
    }
    if (best < 0) break;

    if (!over_links && round == 0) {
      // Zero initial flow on the minimal-value route settles the verdict
      // after the first valuation round.
      const auto& rid = candidates[static_cast<size_t>(best)].ids.front();
      const int j = /* route index in base problem */ [&]() {
        auto problem = EquilibriumProblem::from_network(net, delays, opts.solver);
        return problem.routing.route_index.at(rid);
      }();
      const Route& route = net.route(rid);
      const double demand = net.od_pair(route.od_pair).demand_vph;
      const double flow_tol = opts.solver.flow_tol_rel * std::max(demand, 1.0);
      if (current.route_flows_vph[static_cast<size_t>(j)] <= flow_tol) {
        report.zero_flow_shortcut = true;
        break;
      }
    }

    const double v = valued[static_cast<size_t>(best)].y_new - y;
    if (v >= -ctx.accept_band(y)) break;

    report.steps.push_back(make_step(over_links ? "link" : "route", net,
                                     valued[static_cast<size_t>(best)].net, y,
                                     valued[static_cast<size_t>(best)].y_new));
    net = valued[static_cast<size_t>(best)].net;
    y = valued[static_cast<size_t>(best)].y_new;
  }

  finish_report(report, net, y_orig, y, ctx.solves.load());
  return report;
}

void push_subsets(const std::vector<std::string>& ids, int max_size,
                  RemovalCandidate::Kind kind, std::vector<RemovalCandidate>& out) {
  const int n = static_cast<int>(ids.size());
  for (int size = 1; size <= std::min(max_size, n); ++size) {
    std::vector<int> pick(static_cast<size_t>(size));
    for (int i = 0; i < size; ++i) pick[static_cast<size_t>(i)] = i;
    while (true) {
      RemovalCandidate c;
      c.kind = kind;
      for (int i : pick) c.ids.push_back(ids[static_cast<size_t>(i)]);
      out.push_back(std::move(c));
      int pos = size - 1;
      while (pos >= 0 && pick[static_cast<size_t>(pos)] == n - size + pos) --pos;
      if (pos < 0) break;
      ++pick[static_cast<size_t>(pos)];
      for (int i = pos + 1; i < size; ++i)
        pick[static_cast<size_t>(i)] = pick[static_cast<size_t>(i - 1)] + 1;
    }
  }
}

long subset_count(int n, int max_size) {
  long total = 0;
  for (int size = 1; size <= std::min(max_size, n); ++size) {
    double c = 1.0;
    for (int i = 0; i < size; ++i) c = c * (n - i) / (i + 1);
    total += static_cast<long>(c);
    if (total < 0 || c > 1e18) return std::numeric_limits<long>::max();
  }
  return total;
}

RemovalReport combination_removal(const Network& base, const DelayMap& delays,
                                  const EliminationOptions& opts, bool over_links) {
  Context ctx{delays, opts};
  RemovalReport report;
  report.method =
      over_links ? EliminationMethod::link_combination : EliminationMethod::route_combination;

  const auto ids = over_links ? sorted_physical_links(base) : sorted_routes(base);
  const long count = subset_count(static_cast<int>(ids.size()), opts.max_set_size);
  if (count > opts.evaluation_budget)
    throw BudgetExceeded(method_name(report.method) + ": " + std::to_string(count) +
                         " subsets exceed the budget of " +
                         std::to_string(opts.evaluation_budget));

  const double y = ctx.solve_y(base);
  std::vector<RemovalCandidate> candidates;
  push_subsets(ids, opts.max_set_size,
               over_links ? RemovalCandidate::Kind::link_set
                          : RemovalCandidate::Kind::route_set,
               candidates);
  const auto valued = value_all(ctx, base, candidates);

  double y_min = y;
  for (const auto& v : valued)
    if (v.feasible) y_min = std::min(y_min, v.y_new);

  // First candidate within the tolerance band of the minimum; enumeration
  // order prefers smaller subsets, then lexicographic ids.
  const double band = ctx.accept_band(y);
  int best = -1;
  if (y_min < y - band) {
    for (size_t i = 0; i < valued.size(); ++i)
      if (valued[i].feasible && valued[i].y_new <= y_min + band) {
        best = static_cast<int>(i);
        break;
      }
  }
  if (best >= 0) {
    report.steps.push_back(make_step(over_links ? "link_set" : "route_set", base,
                                     valued[static_cast<size_t>(best)].net, y,
                                     valued[static_cast<size_t>(best)].y_new));
    finish_report(report, valued[static_cast<size_t>(best)].net, y,
                  valued[static_cast<size_t>(best)].y_new, ctx.solves.load());
  } else {
    finish_report(report, base, y, y, ctx.solves.load());
  }
  return report;
}

}  // namespace

CandidateValue candidate_value(const Network& net, const DelayMap& delays,
                               const SolverOptions& solver, const RemovalCandidate& candidate,
                               std::optional<double> y_base) {
  EliminationOptions opts;
  opts.solver = solver;
  Context ctx{delays, opts};
  auto reduced = ctx.reduced(net, candidate);
  if (!reduced) return {false, 0.0, 0.0};
  const double y = y_base ? *y_base : ctx.solve_y(net);
  const double y_new = ctx.solve_y(*reduced);
  return {true, y_new - y, y_new};
}

RemovalReport greedy_link_removal(const Network& net, const DelayMap& delays,
                                  const EliminationOptions& options) {
  return greedy_removal(net, delays, options, true);
}

RemovalReport greedy_route_removal(const Network& net, const DelayMap& delays,
                                   const EliminationOptions& options) {
  return greedy_removal(net, delays, options, false);
}

RemovalReport link_combination_removal(const Network& net, const DelayMap& delays,
                                       const EliminationOptions& options) {
  return combination_removal(net, delays, options, true);
}

RemovalReport route_combination_removal(const Network& net, const DelayMap& delays,
                                        const EliminationOptions& options) {
  return combination_removal(net, delays, options, false);
}

RemovalReport link_route_combination_removal(const Network& net, const DelayMap& delays,
                                             const EliminationOptions& options) {
  Context ctx{delays, options};
  RemovalReport report;
  report.method = EliminationMethod::link_route_combination;

  const double y = ctx.solve_y(net);
  const double band = ctx.accept_band(y);

  // Per link: the delay-minimal feasible subset of its routes to drop.
  std::set<std::string> union_removals;
  for (const auto& lid : sorted_physical_links(net)) {
    auto through = net.routes_through_link(lid);
    std::sort(through.begin(), through.end());
    if (through.empty()) continue;
    if (through.size() > 30 ||
        (1L << through.size()) > options.evaluation_budget)
      throw BudgetExceeded("link-route: link " + lid + " carries " +
                           std::to_string(through.size()) + " routes");
    if (ctx.solves.load() + (1L << through.size()) > options.evaluation_budget)
      throw BudgetExceeded("link-route: evaluation budget exhausted at link " + lid);

    std::vector<RemovalCandidate> candidates;
    push_subsets(through, static_cast<int>(through.size()),
                 RemovalCandidate::Kind::route_set, candidates);
    const auto valued = value_all(ctx, net, candidates);

    double y_min = y;
    for (const auto& v : valued)
      if (v.feasible) y_min = std::min(y_min, v.y_new);
    if (y_min >= y - band) continue;  // keeping everything is optimal here
    for (size_t i = 0; i < valued.size(); ++i) {
      if (valued[i].feasible && valued[i].y_new <= y_min + band) {
        for (const auto& rid : candidates[i].ids) union_removals.insert(rid);
        break;
      }
    }
  }

  // Apply the union, skipping routes whose removal would break connectivity.
  Network net_final = net;
  for (const auto& rid : union_removals) {
    if (!net_final.has_route(rid)) continue;
    try {
      net_final = remove_routes(net_final, {rid});
    } catch (const ConnectivityViolation&) {
    }
  }

  if (missing_ids(net, net_final, false).empty()) {
    finish_report(report, net, y, y, ctx.solves.load());
    return report;
  }
  const double y_final = ctx.solve_y(net_final);
  if (y_final >= y - band) {
    finish_report(report, net, y, y, ctx.solves.load());
    return report;
  }
  report.steps.push_back(make_step("route_set", net, net_final, y, y_final));
  finish_report(report, net_final, y, y_final, ctx.solves.load());
  return report;
}

RemovalReport run_elimination(EliminationMethod method, const Network& net,
                              const DelayMap& delays, const EliminationOptions& options) {
  switch (method) {
    case EliminationMethod::greedy_link: return greedy_link_removal(net, delays, options);
    case EliminationMethod::link_combination:
      return link_combination_removal(net, delays, options);
    case EliminationMethod::link_route_combination:
      return link_route_combination_removal(net, delays, options);
    case EliminationMethod::greedy_route: return greedy_route_removal(net, delays, options);
    case EliminationMethod::route_combination:
      return route_combination_removal(net, delays, options);
  }
  throw InputError("unknown elimination method");
}

}  // namespace braess
