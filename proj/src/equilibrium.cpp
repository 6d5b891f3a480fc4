#include "braess/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "braess/errors.hpp"

namespace braess {

EquilibriumProblem EquilibriumProblem::from_network(const Network& net,
                                                    const DelayMap& delays,
                                                    SolverOptions options) {
  EquilibriumProblem p;
  p.routing = build_routing_matrix(net);
  p.options = options;
  p.link_delays.reserve(net.links().size());
  for (const auto& link : net.links()) {
    auto it = delays.find(link.delay_ref());
    if (it == delays.end())
      throw InputError("no delay function for link " + link.id + " (ref " +
                       link.delay_ref() + ")");
    p.link_delays.push_back(it->second);
  }
  for (const auto& od : net.od_pairs()) {
    std::vector<int> group;
    for (const auto& rid : net.routes_of_od(od.id))
      group.push_back(p.routing.route_index.at(rid));
    if (group.empty()) {
      if (od.demand_vph > 0.0)
        throw NoRouteForDemand("od pair " + od.id + " has demand but no route");
      continue;
    }
    p.od_ids.push_back(od.id);
    p.od_demand_vph.push_back(od.demand_vph);
    p.od_routes.push_back(std::move(group));
  }
  p.validate();
  return p;
}

void EquilibriumProblem::validate() const {
  if (static_cast<int>(link_delays.size()) != routing.link_count())
    throw InputError("equilibrium problem: one delay function per link required");
  for (const auto& fn : link_delays) braess::validate(fn);
  for (size_t k = 0; k < od_routes.size(); ++k) {
    if (od_demand_vph[k] < 0.0) throw InputError("negative demand");
    if (od_routes[k].empty() && od_demand_vph[k] > 0.0)
      throw NoRouteForDemand("od group " + std::to_string(k) + " has no route");
  }
  if (!(options.rel_gap_tol > 0.0) || options.max_iters < 1)
    throw InputError("bad solver options");
}

double EquilibriumProblem::total_demand() const {
  double total = 0.0;
  for (double d : od_demand_vph) total += d;
  return total;
}

namespace {

// Minimizes a convex 1-D restriction given its derivative; the derivative is
// non-decreasing, so plain bisection recovers the exact step.
double exact_line_search(const std::function<double(double)>& dphi, double t_max) {
  if (t_max <= 0.0) return 0.0;
  if (dphi(0.0) >= 0.0) return 0.0;
  if (dphi(t_max) <= 0.0) return t_max;
  double lo = 0.0, hi = t_max;
  for (int i = 0; i < 64; ++i) {
    const double mid = 0.5 * (lo + hi);
    (dphi(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Workspace {
  const EquilibriumProblem& p;
  std::vector<double> x;    // route flows
  std::vector<double> z;    // link flows
  std::vector<double> phi;  // link delays at z
  std::vector<double> c;    // route times

  explicit Workspace(const EquilibriumProblem& problem)
      : p(problem),
        x(problem.routing.route_count(), 0.0),
        z(problem.routing.link_count(), 0.0),
        phi(problem.routing.link_count(), 0.0),
        c(problem.routing.route_count(), 0.0) {}

  void recompute_link_flows() {
    std::fill(z.begin(), z.end(), 0.0);
    for (size_t j = 0; j < x.size(); ++j)
      for (int i : p.routing.rows[j]) z[static_cast<size_t>(i)] += x[j];
  }

  void recompute_costs() {
    for (size_t i = 0; i < z.size(); ++i) phi[i] = eval(p.link_delays[i], std::max(z[i], 0.0));
    for (size_t j = 0; j < c.size(); ++j) {
      double t = 0.0;
      for (int i : p.routing.rows[j]) t += phi[static_cast<size_t>(i)];
      c[j] = t;
    }
  }

  double objective() const {
    double f = 0.0;
    for (size_t i = 0; i < z.size(); ++i)
      f += beckmann(p.link_delays[i], std::max(z[i], 0.0));
    return f;
  }
};

}  // namespace

EquilibriumResult solve(const EquilibriumProblem& p) {
  p.validate();
  const int n_routes = p.routing.route_count();
  const int n_links = p.routing.link_count();
  const int n_od = static_cast<int>(p.od_routes.size());

  Workspace w(p);
  if (p.options.start) {
    if (static_cast<int>(p.options.start->size()) != n_routes)
      throw InputError("start vector has wrong length");
    w.x = *p.options.start;
    for (int k = 0; k < n_od; ++k) {
      double sum = 0.0;
      for (int j : p.od_routes[k]) {
        if (w.x[static_cast<size_t>(j)] < 0.0) throw InputError("start vector is infeasible");
        sum += w.x[static_cast<size_t>(j)];
      }
      const double d = p.od_demand_vph[k];
      if (std::abs(sum - d) > 1e-6 * std::max(1.0, d))
        throw InputError("start vector violates demand conservation");
      if (sum > 0.0)
        for (int j : p.od_routes[k]) w.x[static_cast<size_t>(j)] *= d / sum;
    }
  } else {
    for (int k = 0; k < n_od; ++k) {
      const double share = p.od_demand_vph[k] / static_cast<double>(p.od_routes[k].size());
      for (int j : p.od_routes[k]) w.x[static_cast<size_t>(j)] = share;
    }
  }
  w.recompute_link_flows();

  EquilibriumResult result;
  if (p.options.record_objective) result.objective_trace.reserve(256);

  std::vector<double> dz(static_cast<size_t>(n_links), 0.0);
  std::vector<int> best_route(static_cast<size_t>(n_od), -1);
  double rel_gap = std::numeric_limits<double>::infinity();
  int iter = 0;

  for (iter = 0; iter < p.options.max_iters; ++iter) {
    w.recompute_costs();

    // All-or-nothing target and duality gap.
    double cx = 0.0, cy = 0.0;
    for (int k = 0; k < n_od; ++k) {
      int best = p.od_routes[k].front();
      for (int j : p.od_routes[k])
        if (w.c[static_cast<size_t>(j)] < w.c[static_cast<size_t>(best)]) best = j;
      best_route[static_cast<size_t>(k)] = best;
      for (int j : p.od_routes[k]) cx += w.c[static_cast<size_t>(j)] * w.x[static_cast<size_t>(j)];
      cy += w.c[static_cast<size_t>(best)] * p.od_demand_vph[k];
    }
    const double gap = cx - cy;
    rel_gap = (cx > 0.0) ? gap / cx : 0.0;
    if (rel_gap <= p.options.rel_gap_tol) break;

    // Frank-Wolfe step toward the all-or-nothing assignment.
    std::fill(dz.begin(), dz.end(), 0.0);
    for (int k = 0; k < n_od; ++k) {
      for (int j : p.od_routes[k])
        for (int i : p.routing.rows[static_cast<size_t>(j)])
          dz[static_cast<size_t>(i)] -= w.x[static_cast<size_t>(j)];
      for (int i : p.routing.rows[static_cast<size_t>(best_route[static_cast<size_t>(k)])])
        dz[static_cast<size_t>(i)] += p.od_demand_vph[k];
    }
    auto dphi_fw = [&](double t) {
      double g = 0.0;
      for (int i = 0; i < n_links; ++i) {
        const auto ii = static_cast<size_t>(i);
        if (dz[ii] == 0.0) continue;
        g += eval(p.link_delays[ii], std::max(w.z[ii] + t * dz[ii], 0.0)) * dz[ii];
      }
      return g;
    };
    const double t = exact_line_search(dphi_fw, 1.0);
    if (t > 0.0) {
      for (int k = 0; k < n_od; ++k) {
        const int best = best_route[static_cast<size_t>(k)];
        for (int j : p.od_routes[k]) {
          auto jj = static_cast<size_t>(j);
          w.x[jj] = (j == best) ? w.x[jj] + t * (p.od_demand_vph[k] - w.x[jj])
                                : w.x[jj] * (1.0 - t);
        }
      }
      for (int i = 0; i < n_links; ++i) w.z[static_cast<size_t>(i)] += t * dz[static_cast<size_t>(i)];
    }

    // Pairwise sweep: per OD, shift flow from the worst used route to the
    // best one with an exact 1-D search; hitting the bound zeroes the worst
    // route, so the support resolves exactly instead of zigzagging.
    for (int k = 0; k < n_od; ++k) {
      const auto& group = p.od_routes[k];
      if (group.size() < 2) continue;
      w.recompute_costs();
      int best = group.front();
      int worst = -1;
      for (int j : group) {
        if (w.c[static_cast<size_t>(j)] < w.c[static_cast<size_t>(best)]) best = j;
        if (w.x[static_cast<size_t>(j)] > 0.0 &&
            (worst < 0 || w.c[static_cast<size_t>(j)] > w.c[static_cast<size_t>(worst)]))
          worst = j;
      }
      if (worst < 0 || worst == best) continue;
      if (w.c[static_cast<size_t>(worst)] <= w.c[static_cast<size_t>(best)]) continue;

      // Direction +1 on links only in `best`, -1 on links only in `worst`;
      // shared links cancel.
      const auto& rb = p.routing.rows[static_cast<size_t>(best)];
      const auto& rw = p.routing.rows[static_cast<size_t>(worst)];
      std::vector<std::pair<int, double>> diff;
      {
        size_t a = 0, b = 0;
        while (a < rb.size() || b < rw.size()) {
          if (b >= rw.size() || (a < rb.size() && rb[a] < rw[b])) {
            diff.emplace_back(rb[a++], +1.0);
          } else if (a >= rb.size() || rw[b] < rb[a]) {
            diff.emplace_back(rw[b++], -1.0);
          } else {
            ++a;
            ++b;
          }
        }
      }
      if (diff.empty()) continue;
      const double t_max = w.x[static_cast<size_t>(worst)];
      auto dphi_pw = [&](double t2) {
        double g = 0.0;
        for (const auto& [i, s] : diff)
          g += eval(p.link_delays[static_cast<size_t>(i)],
                    std::max(w.z[static_cast<size_t>(i)] + t2 * s, 0.0)) *
               s;
        return g;
      };
      const double t2 = exact_line_search(dphi_pw, t_max);
      if (t2 <= 0.0) continue;
      w.x[static_cast<size_t>(best)] += t2;
      w.x[static_cast<size_t>(worst)] = (t2 >= t_max) ? 0.0 : w.x[static_cast<size_t>(worst)] - t2;
      for (const auto& [i, s] : diff) w.z[static_cast<size_t>(i)] += t2 * s;
    }

    // Periodically rebuild link flows from route flows to cancel drift.
    if ((iter & 0xff) == 0xff) w.recompute_link_flows();
    if (p.options.record_objective) result.objective_trace.push_back(w.objective());
  }

  // Exact demand conservation, then final diagnostics.
  for (int k = 0; k < n_od; ++k) {
    double sum = 0.0;
    for (int j : p.od_routes[k]) sum += w.x[static_cast<size_t>(j)];
    if (sum > 0.0) {
      const double scale = p.od_demand_vph[k] / sum;
      for (int j : p.od_routes[k]) w.x[static_cast<size_t>(j)] *= scale;
    }
  }
  w.recompute_link_flows();
  w.recompute_costs();

  result.route_flows_vph = w.x;
  result.link_flows_vph = w.z;
  result.route_times_h = w.c;
  result.objective = w.objective();
  result.iterations = iter;
  result.converged = rel_gap <= p.options.rel_gap_tol;
  {
    double cx = 0.0, cy = 0.0;
    for (int k = 0; k < n_od; ++k) {
      double best = std::numeric_limits<double>::infinity();
      for (int j : p.od_routes[k]) {
        cx += w.c[static_cast<size_t>(j)] * w.x[static_cast<size_t>(j)];
        best = std::min(best, w.c[static_cast<size_t>(j)]);
      }
      cy += best * p.od_demand_vph[k];
    }
    result.rel_gap = (cx > 0.0) ? (cx - cy) / cx : 0.0;
  }
  result.total_delay = total_delay(result, p);
  const double demand = p.total_demand();
  result.delay_per_vehicle_h = demand > 0.0 ? result.total_delay / demand : 0.0;
  return result;
}

double total_delay(const EquilibriumResult& result, const EquilibriumProblem& p) {
  double y = 0.0;
  for (int i = 0; i < p.routing.link_count(); ++i) {
    const double z = result.link_flows_vph[static_cast<size_t>(i)];
    y += z * eval(p.link_delays[static_cast<size_t>(i)], std::max(z, 0.0));
  }
  return y;
}

std::vector<double> wardrop_residual(const EquilibriumResult& result,
                                     const EquilibriumProblem& p) {
  std::vector<double> residual(p.od_routes.size(), 0.0);
  for (size_t k = 0; k < p.od_routes.size(); ++k) {
    const double flow_tol = p.options.flow_tol_rel * p.od_demand_vph[k];
    double min_time = std::numeric_limits<double>::infinity();
    for (int j : p.od_routes[k])
      min_time = std::min(min_time, result.route_times_h[static_cast<size_t>(j)]);
    double worst = 0.0;
    for (int j : p.od_routes[k])
      if (result.route_flows_vph[static_cast<size_t>(j)] > flow_tol)
        worst = std::max(worst, result.route_times_h[static_cast<size_t>(j)] - min_time);
    residual[k] = worst;
  }
  return residual;
}

double max_relative_wardrop_residual(const EquilibriumResult& result,
                                     const EquilibriumProblem& p) {
  const auto residual = wardrop_residual(result, p);
  double worst = 0.0;
  for (size_t k = 0; k < residual.size(); ++k) {
    if (p.od_demand_vph[k] <= 0.0) continue;
    double min_time = std::numeric_limits<double>::infinity();
    for (int j : p.od_routes[k])
      min_time = std::min(min_time, result.route_times_h[static_cast<size_t>(j)]);
    if (min_time > 0.0) worst = std::max(worst, residual[k] / min_time);
  }
  return worst;
}

}  // namespace braess
