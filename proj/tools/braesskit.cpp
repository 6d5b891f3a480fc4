#include <fmt/format.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <string>

#include "braess/calibration.hpp"
#include "braess/delay.hpp"
#include "braess/elimination.hpp"
#include "braess/equilibrium.hpp"
#include "braess/errors.hpp"
#include "braess/json_io.hpp"
#include "braess/mesosim.hpp"
#include "braess/network.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 ok, 1 unexpected, 2 bad input, 3 solver did not converge,
// 4 enumeration budget exceeded, 5 spillback during simulation.
constexpr int kExitOk = 0;
constexpr int kExitUnexpected = 1;
constexpr int kExitInput = 2;
constexpr int kExitNonConvergence = 3;
constexpr int kExitBudget = 4;
constexpr int kExitSpillback = 5;

struct Manifest {
  std::string network_path;
  std::string delays_path;
  std::string demand_path;
  std::string obs_dir;
  std::string detect_dir;
  std::string out_dir = "out";
  std::string method = "greedy-route";
  std::string cap_method = "network";
  std::string sat_method = "spec";
  std::string injection = "poisson";
  std::string label;
  bool synthetic = false;
  bool trace = false;
  int max_set_size = 2;
  long budget = 10000;
  double tol = 1e-6;
  int max_iters = 100000;
  std::uint64_t seed = 1;
  double horizon_s = 7200.0;
  double time_step_s = 0.5;
  int windows = 18;
  int threads = 0;
};

void require_exists(const std::string& path, const std::string& what) {
  if (path.empty()) throw braess::InputError(what + " path is required");
  if (!fs::exists(path)) throw braess::InputError(what + " not found: " + path);
}

void ensure_out_dir(const Manifest& m) { fs::create_directories(m.out_dir); }

braess::SolverOptions solver_options(const Manifest& m) {
  braess::SolverOptions opts;
  opts.rel_gap_tol = m.tol;
  opts.max_iters = m.max_iters;
  return opts;
}

braess::Network load_network_with_demand(const Manifest& m) {
  require_exists(m.network_path, "network");
  braess::Network net = braess::load_network(m.network_path);
  if (!m.demand_path.empty()) {
    require_exists(m.demand_path, "demand csv");
    net = braess::apply_demand(net, braess::load_demand_csv(m.demand_path));
  }
  return net;
}

braess::SimConfig sim_config(const Manifest& m) {
  braess::SimConfig config;
  config.horizon_s = m.horizon_s;
  config.time_step_s = m.time_step_s;
  config.seed = m.seed;
  config.injection = m.injection == "deterministic" ? braess::InjectionMode::deterministic
                                                    : braess::InjectionMode::poisson;
  return config;
}

// ---------------------------------------------------------------- calibrate

int cmd_calibrate(const Manifest& m) {
  braess::Network net = load_network_with_demand(m);
  braess::Network ext = braess::insert_phantom_links(net);
  ensure_out_dir(m);
  if (!m.synthetic && m.obs_dir.empty())
    throw braess::InputError("calibrate needs --obs-dir or --synthetic");
  if (!m.obs_dir.empty()) require_exists(m.obs_dir, "observations dir");

  // Ground-truth behaviour for synthetic data generation: the network's
  // geometry with conventional curve parameters.
  braess::DelayMap truth;
  for (const auto& link : ext.links())
    if (link.physical())
      truth[link.delay_ref()] =
          braess::BprDelay{link.free_flow_time_h(), 0.15, 4.0, link.capacity_vph};

  const std::string obs_out = m.out_dir + "/observations";
  if (m.synthetic) fs::create_directories(obs_out);

  auto observations_for = [&](const std::string& link_id,
                              bool ascending) -> std::optional<braess::ObservationSet> {
    if (m.synthetic) {
      const braess::FlowSchedule schedule =
          ascending ? braess::ascending_flow_schedule(m.windows, 3000.0)
                    : braess::random_flow_schedule(m.windows, 3000.0,
                                                   m.seed + std::hash<std::string>{}(link_id));
      braess::SimConfig config = sim_config(m);
      auto obs = braess::generate_observations(ext, truth, link_id, schedule, config);
      braess::save_observations_csv(obs, obs_out + "/" + link_id + ".csv");
      return obs;
    }
    const std::string path = m.obs_dir + "/" + link_id + ".csv";
    if (!fs::exists(path)) return std::nullopt;
    return braess::load_observations_csv(path, link_id);
  };

  braess::DelayMap delays;
  std::map<std::string, braess::BprFit> fits;
  std::map<std::string, double> caps;
  std::vector<std::string> failed;

  for (const auto& link : ext.links()) {
    if (!link.physical()) continue;
    const auto obs = observations_for(link.id, false);
    double cap = link.capacity_vph;
    if (m.cap_method != "network" && obs && obs->travel_times.size() >= 2) {
      try {
        const auto method = m.cap_method == "pwl" ? braess::CapacityMethod::pwl_intersection
                                                  : braess::CapacityMethod::max_flow;
        const auto estimate = braess::estimate_capacity(*obs, method);
        cap = estimate.cap_vph;
        if (estimate.fell_back)
          fmt::print("calibrate: {}: pwl capacity fit degenerate, using max flow\n", link.id);
      } catch (const braess::InsufficientData&) {
        fmt::print("calibrate: {}: too few samples for capacity, using network value\n",
                   link.id);
      }
    }
    caps[link.id] = cap;
    if (obs) {
      try {
        fits[link.id] = braess::fit_bpr(*obs, link.free_flow_time_h(), cap);
        continue;
      } catch (const braess::InsufficientData&) {
      }
    }
    failed.push_back(link.id);
  }

  // Failed links inherit from an upstream fitted link; chains resolve over
  // repeated passes. Anything still open falls back to (0.15, 4).
  bool progress = true;
  while (progress && !failed.empty()) {
    progress = false;
    std::vector<std::string> still_failed;
    for (const auto& lid : failed) {
      const braess::Link& link = ext.link(lid);
      std::string upstream_id;
      for (const auto& other : ext.links()) {
        if (!other.physical() || other.id == lid || !fits.count(other.id)) continue;
        if (other.to == link.from && (upstream_id.empty() || other.id < upstream_id))
          upstream_id = other.id;
      }
      if (upstream_id.empty()) {
        still_failed.push_back(lid);
        continue;
      }
      fits[lid] =
          braess::inherit_parameters(link, ext.link(upstream_id), fits.at(upstream_id));
      progress = true;
    }
    failed = std::move(still_failed);
  }
  for (const auto& lid : failed) {
    braess::BprFit fallback;
    fallback.a = 0.15;
    fallback.b = 4.0;
    fallback.source = braess::FitSource::fallback;
    fits[lid] = fallback;
  }

  int fitted = 0, inherited = 0, defaulted = 0;
  for (const auto& link : ext.links()) {
    if (!link.physical()) continue;
    const auto& fit = fits.at(link.id);
    switch (fit.source) {
      case braess::FitSource::fitted: ++fitted; break;
      case braess::FitSource::inherited: ++inherited; break;
      case braess::FitSource::fallback: ++defaulted; break;
    }
    delays[link.delay_ref()] =
        braess::BprDelay{link.free_flow_time_h(), fit.a, fit.b, caps.at(link.id)};
    fmt::print("calibrate: {:<16} {:<9} a={:.4f} b={:.4f} cap={:.0f} residual={:.3g}\n",
               link.id,
               fit.source == braess::FitSource::fitted      ? "fitted"
               : fit.source == braess::FitSource::inherited ? "inherited"
                                                            : "fallback",
               fit.a, fit.b, caps.at(link.id), fit.residual_norm);
  }

  for (const auto& link : ext.links()) {
    if (link.physical()) continue;
    const braess::Node& node = ext.node(link.at_node);
    double s = 0.0;
    double d0_h = 0.0;
    if (const auto* sig = std::get_if<braess::SignalSpec>(&*node.control)) {
      s = braess::saturation_rate(*sig);
      d0_h = braess::expected_red_delay(*sig);
    } else if (const auto* stop = std::get_if<braess::StopSpec>(&*node.control)) {
      s = braess::saturation_rate(*stop);
      d0_h = stop->stop_delay_s / 3600.0;
    } else {
      throw braess::InputError("phantom " + link.id + " at uncontrolled node");
    }
    const auto obs = observations_for(link.id, true);
    if (obs && m.sat_method == "data") {
      const auto estimate = braess::estimate_saturation_from_data(*obs);
      if (estimate.fell_back)
        fmt::print("calibrate: {}: no throughput breakpoint, keeping max flow\n", link.id);
      s = estimate.s_vph;
    }
    braess::QueueFit fit;
    if (obs) {
      fit = braess::fit_queue_delay(*obs, s, d0_h);
    } else {
      fit.fn = braess::QueueDelay::from_saturation(d0_h, 0.0, s);
    }
    delays[link.delay_ref()] = fit.fn;
    fmt::print("calibrate: {:<16} queue     d0={:.3f}s alpha={:.3g}s/vph s={:.0f}{}\n",
               link.id, fit.fn.d0_h * 3600.0, fit.fn.alpha * 3600.0, fit.fn.s_vph,
               fit.sufficient ? "" : " (constant: no over-saturation data)");
  }

  braess::save_delay_params(delays, m.out_dir + "/delays.json");
  const int total = fitted + inherited + defaulted;
  fmt::print("calibrate: {} links fitted, {} inherited, {} fallback ({:.1f}% not fitted)\n",
             fitted, inherited, defaulted,
             total > 0 ? 100.0 * (inherited + defaulted) / total : 0.0);
  fmt::print("calibrate: wrote {}/delays.json\n", m.out_dir);
  return kExitOk;
}

// -------------------------------------------------------------------- solve

int cmd_solve(const Manifest& m) {
  braess::Network net = load_network_with_demand(m);
  require_exists(m.delays_path, "delay parameters");
  const braess::DelayMap delays = braess::load_delay_params(m.delays_path);
  braess::Network ext = braess::insert_phantom_links(net);
  ensure_out_dir(m);

  auto problem = braess::EquilibriumProblem::from_network(ext, delays, solver_options(m));
  const auto result = braess::solve(problem);
  braess::save_equilibrium(result, problem, m.out_dir + "/equilibrium.json");

  fmt::print("solve: Y = {:.6g} veh.h/h, per vehicle = {:.6g} h, gap = {:.3g}, iters = {}\n",
             result.total_delay, result.delay_per_vehicle_h, result.rel_gap,
             result.iterations);
  if (!result.converged) {
    fmt::print("solve: did not reach gap {} within {} iterations\n", m.tol, m.max_iters);
    return kExitNonConvergence;
  }
  return kExitOk;
}

// ------------------------------------------------------------------- detect

int cmd_detect(const Manifest& m) {
  braess::Network net = load_network_with_demand(m);
  require_exists(m.delays_path, "delay parameters");
  const braess::DelayMap delays = braess::load_delay_params(m.delays_path);
  braess::Network ext = braess::insert_phantom_links(net);
  ensure_out_dir(m);

  const auto method = braess::parse_method(m.method);
  if (!method) throw braess::InputError("unknown elimination method: " + m.method);

  braess::EliminationOptions options;
  options.solver = solver_options(m);
  options.max_set_size = m.max_set_size;
  options.evaluation_budget = m.budget;
  options.threads = m.threads;

  auto problem = braess::EquilibriumProblem::from_network(ext, delays, options.solver);
  const auto before = braess::solve(problem);
  braess::save_equilibrium(before, problem, m.out_dir + "/equilibrium_before.json");

  const auto report = braess::run_elimination(*method, ext, delays, options);

  auto reduced_problem =
      braess::EquilibriumProblem::from_network(report.final_network, delays, options.solver);
  const auto after = braess::solve(reduced_problem);
  braess::save_equilibrium(after, reduced_problem, m.out_dir + "/equilibrium_after.json");
  braess::save_network(report.final_network, m.out_dir + "/reduced_network.json");
  braess::save_removal_report(report, m.out_dir + "/removal_report.json");

  const std::string text = braess::removal_report_text(report);
  std::ofstream(m.out_dir + "/removal_report.txt") << text;
  fmt::print("{}", text);
  fmt::print("detect: I_th = {:.4g} %\n", report.improvement * 100.0);
  if (!before.converged || !after.converged) return kExitNonConvergence;
  return kExitOk;
}

// ----------------------------------------------------------------- validate

int cmd_validate(const Manifest& m) {
  braess::Network net = load_network_with_demand(m);
  require_exists(m.delays_path, "delay parameters");
  const braess::DelayMap delays = braess::load_delay_params(m.delays_path);
  const std::string detect_dir = m.detect_dir.empty() ? m.out_dir : m.detect_dir;
  require_exists(detect_dir + "/equilibrium_before.json", "detect output");
  require_exists(detect_dir + "/removal_report.json", "detect output");
  ensure_out_dir(m);

  braess::Network ext = braess::insert_phantom_links(net);
  const auto before = braess::load_equilibrium_summary(detect_dir + "/equilibrium_before.json");
  const auto report = braess::load_removal_report_summary(detect_dir + "/removal_report.json");

  braess::ValidationRow row;
  row.label = m.label.empty() ? fmt::format("{:.0f} vph", [&]() {
    double d = 0.0;
    for (const auto& od : net.od_pairs()) d += od.demand_vph;
    return d;
  }()) : m.label;
  for (const auto& od : net.od_pairs()) row.demand_vph += od.demand_vph;
  row.i_th = report.improvement;

  braess::SimConfig config = sim_config(m);
  if (m.trace) config.trace_path = m.out_dir + "/trace.csv";
  const auto sim_before = braess::simulate(ext, delays, before.route_flows_vph, config);
  config.trace_path.clear();  // trace covers the original network run only
  row.vehicles = sim_before.vehicles_injected;
  if (sim_before.spillback) {
    row.spillback = true;
    row.spillback_link = sim_before.spillback_link;
    braess::save_validation(row, m.out_dir + "/validation.json");
    fmt::print("{}", braess::validation_text(row));
    return kExitSpillback;
  }
  const double y_sim = sim_before.delay_rate_vhph;
  row.delay_diff_original = y_sim > 0.0 ? std::abs(before.total_delay - y_sim) / y_sim : 0.0;

  if (!report.paradox_free) {
    require_exists(detect_dir + "/reduced_network.json", "detect output");
    require_exists(detect_dir + "/equilibrium_after.json", "detect output");
    braess::Network reduced = braess::load_network(detect_dir + "/reduced_network.json");
    const auto after = braess::load_equilibrium_summary(detect_dir + "/equilibrium_after.json");
    const auto sim_after = braess::simulate(reduced, delays, after.route_flows_vph, config);
    if (sim_after.spillback) {
      row.spillback = true;
      row.spillback_link = sim_after.spillback_link;
      braess::save_validation(row, m.out_dir + "/validation.json");
      fmt::print("{}", braess::validation_text(row));
      return kExitSpillback;
    }
    const double y_sim_new = sim_after.delay_rate_vhph;
    row.reduced_run = true;
    row.i_sim = y_sim > 0.0 ? (y_sim - y_sim_new) / y_sim : 0.0;
    row.improvement_diff =
        row.i_th > 0.0 ? std::abs(row.i_th - row.i_sim) / row.i_th : 0.0;
    row.delay_diff_reduced =
        y_sim_new > 0.0 ? std::abs(after.total_delay - y_sim_new) / y_sim_new : 0.0;
  }

  braess::save_validation(row, m.out_dir + "/validation.json");
  const std::string text = braess::validation_text(row);
  std::ofstream(m.out_dir + "/validation.txt") << text;
  fmt::print("{}", text);
  return kExitOk;
}

// ------------------------------------------------------------------- report

int cmd_report(const Manifest& m) {
  const std::string dir = m.out_dir;
  require_exists(dir, "output dir");
  const std::string report_dir = dir + "/report";
  fs::create_directories(report_dir);

  if (fs::exists(dir + "/removal_report.json")) {
    const json doc = json::parse(std::ifstream(dir + "/removal_report.json"));
    std::ofstream steps(report_dir + "/steps.csv");
    steps << "step,kind,removed_routes,y_before,y_after,value\n";
    int i = 0;
    for (const auto& step : doc.value("steps", json::array())) {
      std::string routes;
      for (const auto& rid : step.value("removed_routes", json::array())) {
        if (!routes.empty()) routes += ' ';
        routes += rid.get<std::string>();
      }
      steps << ++i << ',' << step.value("kind", std::string()) << ',' << routes << ','
            << step.value("y_before", 0.0) << ',' << step.value("y_after", 0.0) << ','
            << step.value("value", 0.0) << '\n';
    }
    fmt::print("report: method {} improvement {:.4g} % ({} steps)\n",
               doc.value("method", std::string()), doc.value("improvement", 0.0) * 100.0,
               doc.value("steps", json::array()).size());
  }

  for (const std::string which : {"before", "after"}) {
    const std::string path = dir + "/equilibrium_" + which + ".json";
    if (!fs::exists(path)) continue;
    const json doc = json::parse(std::ifstream(path));
    std::ofstream flows(report_dir + "/link_flows_" + which + ".csv");
    flows << "link,flow_vph,delay_h\n";
    for (const auto& item : doc.value("links", json::array()))
      flows << item.value("id", std::string()) << ',' << item.value("flow_vph", 0.0) << ','
            << item.value("delay_h", 0.0) << '\n';
    fmt::print("report: equilibrium_{}: Y = {:.6g} veh.h/h\n", which,
               doc.value("total_delay_veh_h_per_h", 0.0));
  }

  if (fs::exists(dir + "/validation.json")) {
    const json doc = json::parse(std::ifstream(dir + "/validation.json"));
    std::ofstream csv(report_dir + "/validation.csv");
    csv << "label,demand_vph,vehicles,i_th,i_sim,improvement_diff,delay_diff\n";
    csv << doc.value("label", std::string()) << ',' << doc.value("demand_vph", 0.0) << ','
        << doc.value("vehicles", 0) << ',' << doc.value("i_th", 0.0) << ','
        << doc.value("i_sim", 0.0) << ',' << doc.value("improvement_diff", 0.0) << ','
        << doc.value("network_delay_diff_original", 0.0) << '\n';
    fmt::print("report: validation row written\n");
  }
  fmt::print("report: csv series in {}\n", report_dir);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Braess route detection toolkit"};
  app.require_subcommand(1);
  Manifest m;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--network", m.network_path, "network JSON");
    cmd->add_option("--demand", m.demand_path, "demand CSV overriding od demands");
    cmd->add_option("--tol", m.tol, "relative duality gap target");
    cmd->add_option("--max-iters", m.max_iters, "solver iteration cap");
    cmd->add_option("--seed", m.seed, "seed for all randomness");
    cmd->add_option("--out", m.out_dir, "output directory");
    cmd->add_option("--threads", m.threads, "valuation threads (0 = hardware)");
  };

  auto* calibrate = app.add_subcommand("calibrate", "fit delay functions from observations");
  add_common(calibrate);
  calibrate->add_option("--obs-dir", m.obs_dir, "per-link observation CSVs");
  calibrate->add_flag("--synthetic", m.synthetic, "generate observations with the simulator");
  calibrate->add_option("--cap-method", m.cap_method, "network|max-flow|pwl")
      ->check(CLI::IsMember({"network", "max-flow", "pwl"}));
  calibrate->add_option("--sat-method", m.sat_method, "spec|data")
      ->check(CLI::IsMember({"spec", "data"}));
  calibrate->add_option("--windows", m.windows, "observation windows per link");
  calibrate->add_option("--time-step", m.time_step_s, "simulation step, seconds");

  auto* solve = app.add_subcommand("solve", "compute the equilibrium");
  add_common(solve);
  solve->add_option("--delays", m.delays_path, "delay parameter JSON");

  auto* detect = app.add_subcommand("detect", "find and remove Braess routes");
  add_common(detect);
  detect->add_option("--delays", m.delays_path, "delay parameter JSON");
  detect->add_option("--method", m.method,
                     "greedy-link|link-combo|link-route|greedy-route|route-combo");
  detect->add_option("--max-set-size", m.max_set_size, "combination size cap");
  detect->add_option("--budget", m.budget, "equilibrium solve budget");

  auto* validate = app.add_subcommand("validate", "simulate the detect outputs");
  add_common(validate);
  validate->add_option("--delays", m.delays_path, "delay parameter JSON");
  validate->add_option("--detect-dir", m.detect_dir, "detect output dir (default --out)");
  validate->add_option("--horizon", m.horizon_s, "injection horizon, seconds");
  validate->add_option("--time-step", m.time_step_s, "simulation step, seconds");
  validate->add_option("--injection", m.injection, "poisson|deterministic")
      ->check(CLI::IsMember({"poisson", "deterministic"}));
  validate->add_option("--label", m.label, "demand label for the summary table");
  validate->add_flag("--trace", m.trace, "write a per-step occupancy trace CSV");

  auto* report = app.add_subcommand("report", "text summary + plot-ready CSVs");
  add_common(report);

  CLI11_PARSE(app, argc, argv);

  try {
    if (calibrate->parsed()) return cmd_calibrate(m);
    if (solve->parsed()) return cmd_solve(m);
    if (detect->parsed()) return cmd_detect(m);
    if (validate->parsed()) return cmd_validate(m);
    if (report->parsed()) return cmd_report(m);
  } catch (const braess::BudgetExceeded& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitBudget;
  } catch (const braess::InputError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInput;
  } catch (const braess::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    fmt::print(stderr, "unexpected error: {}\n", e.what());
    return kExitUnexpected;
  }
  return kExitOk;
}
