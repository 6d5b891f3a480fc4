#include "braess/json_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "braess/errors.hpp"

namespace braess {

using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return doc;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << body;
  if (!out) throw InputError("failed writing " + path);
}

void write_json(const std::string& path, const json& doc) {
  write_file(path, doc.dump(2) + "\n");
}

double need_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_number())
    throw InputError(where + ": missing numeric field '" + key + "'");
  return obj[key].get<double>();
}

std::string need_string(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string())
    throw InputError(where + ": missing string field '" + key + "'");
  return obj[key].get<std::string>();
}

NodeControl parse_control(const json& obj, const std::string& where) {
  const std::string type = need_string(obj, "type", where);
  if (type == "none") return NodeControl{};
  if (type == "signalized") {
    SignalSpec spec;
    spec.cycle_s = need_number(obj, "cycle_s", where);
    spec.red_s = need_number(obj, "red_s", where);
    spec.green_vehicles = static_cast<int>(need_number(obj, "green_vehicles", where));
    return spec;
  }
  if (type == "stop_sign") {
    StopSpec spec;
    spec.stop_delay_s = need_number(obj, "stop_delay_s", where);
    return spec;
  }
  throw InputError(where + ": unknown control type '" + type + "'");
}

json control_to_json(const NodeControl& control) {
  if (const auto* sig = std::get_if<SignalSpec>(&control))
    return {{"type", "signalized"},
            {"cycle_s", sig->cycle_s},
            {"red_s", sig->red_s},
            {"green_vehicles", sig->green_vehicles}};
  if (const auto* stop = std::get_if<StopSpec>(&control))
    return {{"type", "stop_sign"}, {"stop_delay_s", stop->stop_delay_s}};
  return {{"type", "none"}};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim
    size_t a = field.find_first_not_of(" \t\r");
    size_t b = field.find_last_not_of(" \t\r");
    fields.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  return fields;
}

}  // namespace

Network load_network(const std::string& path) {
  const json doc = read_json(path);
  std::vector<Node> nodes;
  for (const auto& n : doc.value("nodes", json::array())) {
    if (n.is_string())
      nodes.push_back({n.get<std::string>(), std::nullopt});
    else
      nodes.push_back({need_string(n, "id", path + " nodes"), std::nullopt});
  }
  for (const auto& item : doc.value("intersections", json::array())) {
    const std::string node_id = need_string(item, "node", path + " intersections");
    bool found = false;
    for (auto& node : nodes)
      if (node.id == node_id) {
        node.control = parse_control(item, path + " intersection " + node_id);
        found = true;
      }
    if (!found) throw InputError(path + ": intersection for unknown node " + node_id);
  }
  std::vector<Link> links;
  for (const auto& item : doc.value("links", json::array())) {
    Link link;
    link.id = need_string(item, "id", path + " links");
    const std::string kind = item.value("kind", std::string("physical"));
    if (kind == "physical") {
      link.kind = LinkKind::physical;
      link.from = need_string(item, "from", path + " link " + link.id);
      link.to = need_string(item, "to", path + " link " + link.id);
      link.length_m = need_number(item, "length_m", path + " link " + link.id);
      link.free_flow_speed_mps =
          need_number(item, "free_flow_speed_mps", path + " link " + link.id);
      link.capacity_vph = need_number(item, "capacity_vph", path + " link " + link.id);
    } else if (kind == "phantom") {
      link.kind = LinkKind::phantom;
      const std::string control = need_string(item, "control", path + " link " + link.id);
      if (control == "signalized")
        link.control = ControlKind::signalized;
      else if (control == "stop_sign")
        link.control = ControlKind::stop_sign;
      else if (control == "uncontrolled")
        link.control = ControlKind::uncontrolled;
      else
        throw InputError(path + ": link " + link.id + ": unknown control " + control);
      link.in_link = need_string(item, "in_link", path + " link " + link.id);
      link.out_link = need_string(item, "out_link", path + " link " + link.id);
      link.at_node = need_string(item, "at_node", path + " link " + link.id);
    } else {
      throw InputError(path + ": link " + link.id + ": unknown kind " + kind);
    }
    link.delay_fn_ref = item.value("delay_fn_ref", std::string());
    links.push_back(std::move(link));
  }
  std::vector<ODPair> ods;
  for (const auto& item : doc.value("od_pairs", json::array())) {
    ODPair od;
    od.id = need_string(item, "id", path + " od_pairs");
    od.origin = need_string(item, "origin", path + " od " + od.id);
    od.destination = need_string(item, "destination", path + " od " + od.id);
    od.demand_vph = need_number(item, "demand_vph", path + " od " + od.id);
    ods.push_back(std::move(od));
  }
  std::vector<Route> routes;
  for (const auto& item : doc.value("routes", json::array())) {
    Route route;
    route.id = need_string(item, "id", path + " routes");
    route.od_pair = need_string(item, "od_pair", path + " route " + route.id);
    for (const auto& lid : item.value("links", json::array()))
      route.links.push_back(lid.get<std::string>());
    routes.push_back(std::move(route));
  }
  return Network::build(std::move(nodes), std::move(links), std::move(ods),
                        std::move(routes));
}

void save_network(const Network& net, const std::string& path) {
  json doc;
  doc["nodes"] = json::array();
  doc["intersections"] = json::array();
  for (const auto& node : net.nodes()) {
    doc["nodes"].push_back(node.id);
    if (node.control) {
      json item = control_to_json(*node.control);
      item["node"] = node.id;
      doc["intersections"].push_back(item);
    }
  }
  doc["links"] = json::array();
  for (const auto& link : net.links()) {
    json item;
    item["id"] = link.id;
    if (link.physical()) {
      item["kind"] = "physical";
      item["from"] = link.from;
      item["to"] = link.to;
      item["length_m"] = link.length_m;
      item["free_flow_speed_mps"] = link.free_flow_speed_mps;
      item["capacity_vph"] = link.capacity_vph;
    } else {
      item["kind"] = "phantom";
      item["control"] = link.control == ControlKind::signalized ? "signalized"
                        : link.control == ControlKind::stop_sign ? "stop_sign"
                                                                 : "uncontrolled";
      item["in_link"] = link.in_link;
      item["out_link"] = link.out_link;
      item["at_node"] = link.at_node;
    }
    if (!link.delay_fn_ref.empty()) item["delay_fn_ref"] = link.delay_fn_ref;
    doc["links"].push_back(item);
  }
  doc["od_pairs"] = json::array();
  for (const auto& od : net.od_pairs())
    doc["od_pairs"].push_back({{"id", od.id},
                               {"origin", od.origin},
                               {"destination", od.destination},
                               {"demand_vph", od.demand_vph}});
  doc["routes"] = json::array();
  for (const auto& route : net.routes())
    doc["routes"].push_back(
        {{"id", route.id}, {"od_pair", route.od_pair}, {"links", route.links}});
  write_json(path, doc);
}

DelayMap load_delay_params(const std::string& path) {
  const json doc = read_json(path);
  if (!doc.is_object()) throw InputError(path + ": expected an object keyed by link id");
  DelayMap out;
  for (const auto& [key, item] : doc.items()) {
    const std::string type = need_string(item, "type", path + " " + key);
    if (type == "bpr") {
      BprDelay fn;
      fn.t0_h = need_number(item, "t0_s", path + " " + key) / 3600.0;
      fn.a = need_number(item, "a", path + " " + key);
      fn.b = need_number(item, "b", path + " " + key);
      fn.cap_vph = need_number(item, "cap_vph", path + " " + key);
      fn.validate();
      out[key] = fn;
    } else if (type == "queue") {
      const double d0_h = need_number(item, "d0_s", path + " " + key) / 3600.0;
      const double alpha = need_number(item, "alpha_s_per_vph", path + " " + key) / 3600.0;
      const double s = need_number(item, "s_vph", path + " " + key);
      QueueDelay fn = QueueDelay::from_saturation(d0_h, alpha, s);
      if (item.contains("beta_s")) {
        const double beta_h = item["beta_s"].get<double>() / 3600.0;
        const double scale = std::max({std::abs(fn.beta_h), std::abs(beta_h), 1e-9});
        if (std::abs(beta_h - fn.beta_h) > 1e-6 * scale)
          throw InputError(path + " " + key + ": beta_s breaks continuity at s");
      }
      out[key] = fn;
    } else {
      throw InputError(path + " " + key + ": unknown delay type " + type);
    }
  }
  return out;
}

void save_delay_params(const DelayMap& delays, const std::string& path) {
  json doc = json::object();
  for (const auto& [key, fn] : delays) {
    if (const auto* bpr = std::get_if<BprDelay>(&fn)) {
      doc[key] = {{"type", "bpr"},
                  {"t0_s", bpr->t0_h * 3600.0},
                  {"a", bpr->a},
                  {"b", bpr->b},
                  {"cap_vph", bpr->cap_vph}};
    } else if (const auto* q = std::get_if<QueueDelay>(&fn)) {
      doc[key] = {{"type", "queue"},
                  {"d0_s", q->d0_h * 3600.0},
                  {"alpha_s_per_vph", q->alpha * 3600.0},
                  {"beta_s", q->beta_h * 3600.0},
                  {"s_vph", q->s_vph}};
    }
  }
  write_json(path, doc);
}

std::vector<ODPair> load_demand_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<ODPair> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (first) {
      first = false;
      if (!fields.empty() && fields[0] == "od_id") continue;  // header
    }
    if (fields.size() != 4)
      throw InputError(path + ": expected od_id,origin,destination,demand_vph");
    ODPair od;
    od.id = fields[0];
    od.origin = fields[1];
    od.destination = fields[2];
    try {
      od.demand_vph = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw InputError(path + ": bad demand value '" + fields[3] + "'");
    }
    rows.push_back(std::move(od));
  }
  return rows;
}

Network apply_demand(const Network& net, const std::vector<ODPair>& rows) {
  std::vector<ODPair> ods = net.od_pairs();
  for (const auto& row : rows) {
    bool found = false;
    for (auto& od : ods) {
      if (od.id != row.id) continue;
      if (od.origin != row.origin || od.destination != row.destination)
        throw InputError("demand row " + row.id + " does not match the network od pair");
      od.demand_vph = row.demand_vph;
      found = true;
    }
    if (!found) throw InputError("demand row for unknown od pair " + row.id);
  }
  return Network::build(net.nodes(), net.links(), std::move(ods), net.routes());
}

ObservationSet load_observations_csv(const std::string& path, const std::string& link_id) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  ObservationSet obs;
  obs.link_id = link_id;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (header.empty()) {
      header = fields;
      if (header.size() < 2 || header[0] != "flow_vph")
        throw InputError(path + ": first column must be flow_vph");
      continue;
    }
    if (fields.size() != header.size())
      throw InputError(path + ": ragged csv row");
    std::vector<double> values;
    for (const auto& f : fields) {
      try {
        values.push_back(std::stod(f));
      } catch (const std::exception&) {
        throw InputError(path + ": bad numeric value '" + f + "'");
      }
    }
    if (values[0] < 0.0) throw InputError(path + ": negative flow sample");
    if (header.size() == 2 && header[1] == "travel_time_s") {
      obs.travel_times.push_back({values[0], values[1] / 3600.0});
    } else if (header.size() >= 3 && header[1] == "throughput_per_cycle" &&
               header[2] == "avg_delay_s") {
      obs.queue_samples.push_back({values[0], values[1], values[2] / 3600.0});
      if (header.size() >= 4 && header[3] == "cycle_s") obs.cycle_s = values[3];
    } else {
      throw InputError(path + ": unsupported column layout");
    }
  }
  return obs;
}

void save_observations_csv(const ObservationSet& obs, const std::string& path) {
  std::string body;
  if (!obs.travel_times.empty()) {
    body = "flow_vph,travel_time_s\n";
    for (const auto& s : obs.travel_times)
      body += fmt::format("{:.6g},{:.9g}\n", s.flow_vph, s.travel_time_h * 3600.0);
  } else {
    body = "flow_vph,throughput_per_cycle,avg_delay_s,cycle_s\n";
    for (const auto& s : obs.queue_samples)
      body += fmt::format("{:.6g},{:.9g},{:.9g},{:.6g}\n", s.flow_vph,
                          s.throughput_per_cycle, s.avg_delay_h * 3600.0, obs.cycle_s);
  }
  write_file(path, body);
}

void save_equilibrium(const EquilibriumResult& result, const EquilibriumProblem& problem,
                      const std::string& path) {
  json doc;
  doc["routes"] = json::array();
  for (int j = 0; j < problem.routing.route_count(); ++j)
    doc["routes"].push_back({{"id", problem.routing.route_ids[static_cast<size_t>(j)]},
                             {"flow_vph", result.route_flows_vph[static_cast<size_t>(j)]},
                             {"time_h", result.route_times_h[static_cast<size_t>(j)]}});
  doc["links"] = json::array();
  for (int i = 0; i < problem.routing.link_count(); ++i) {
    const double z = result.link_flows_vph[static_cast<size_t>(i)];
    doc["links"].push_back({{"id", problem.routing.link_ids[static_cast<size_t>(i)]},
                            {"flow_vph", z},
                            {"delay_h", eval(problem.link_delays[static_cast<size_t>(i)],
                                             std::max(z, 0.0))}});
  }
  doc["total_delay_veh_h_per_h"] = result.total_delay;
  doc["delay_per_vehicle_h"] = result.delay_per_vehicle_h;
  doc["objective"] = result.objective;
  doc["rel_gap"] = result.rel_gap;
  doc["iterations"] = result.iterations;
  doc["converged"] = result.converged;
  write_json(path, doc);
}

EquilibriumFileSummary load_equilibrium_summary(const std::string& path) {
  const json doc = read_json(path);
  EquilibriumFileSummary summary;
  for (const auto& item : doc.value("routes", json::array()))
    summary.route_flows_vph[need_string(item, "id", path)] =
        need_number(item, "flow_vph", path);
  summary.total_delay = doc.value("total_delay_veh_h_per_h", 0.0);
  summary.delay_per_vehicle_h = doc.value("delay_per_vehicle_h", 0.0);
  summary.converged = doc.value("converged", true);
  return summary;
}

RemovalReportSummary load_removal_report_summary(const std::string& path) {
  const json doc = read_json(path);
  RemovalReportSummary summary;
  summary.method = doc.value("method", std::string());
  summary.paradox_free = doc.value("paradox_free", true);
  summary.y_original = doc.value("y_original", 0.0);
  summary.y_final = doc.value("y_final", 0.0);
  summary.improvement = doc.value("improvement", 0.0);
  return summary;
}

namespace {

json step_to_json(const RemovalStep& step) {
  return {{"kind", step.kind},
          {"removed_routes", step.removed_routes},
          {"removed_links", step.removed_links},
          {"y_before", step.y_before},
          {"y_after", step.y_after},
          {"value", step.value}};
}

}  // namespace

void save_removal_report(const RemovalReport& report, const std::string& path) {
  json doc;
  doc["method"] = method_name(report.method);
  doc["paradox_free"] = report.paradox_free;
  doc["zero_flow_shortcut"] = report.zero_flow_shortcut;
  doc["y_original"] = report.y_original;
  doc["y_final"] = report.y_final;
  doc["improvement"] = report.improvement;
  doc["solves"] = report.solves;
  doc["steps"] = json::array();
  for (const auto& step : report.steps) doc["steps"].push_back(step_to_json(step));
  write_json(path, doc);
}

std::string removal_report_text(const RemovalReport& report) {
  std::string out;
  out += fmt::format("method:            {}\n", method_name(report.method));
  out += fmt::format("original delay Y:  {:.6g} veh.h/h\n", report.y_original);
  out += fmt::format("final delay Y:     {:.6g} veh.h/h\n", report.y_final);
  out += fmt::format("improvement:       {:.4g} %\n", report.improvement * 100.0);
  out += fmt::format("paradox free:      {}{}\n", report.paradox_free ? "yes" : "no",
                     report.zero_flow_shortcut ? " (zero-flow shortcut)" : "");
  out += fmt::format("equilibrium solves: {}\n", report.solves);
  for (size_t i = 0; i < report.steps.size(); ++i) {
    const auto& step = report.steps[i];
    out += fmt::format("step {:>2}: remove {} [{}]  Y {:.6g} -> {:.6g}  (V = {:.6g})\n",
                       i + 1, step.kind, fmt::join(step.removed_routes, ", "),
                       step.y_before, step.y_after, step.value);
    if (!step.removed_links.empty())
      out += fmt::format("         links dropped: [{}]\n",
                         fmt::join(step.removed_links, ", "));
  }
  return out;
}

void save_validation(const ValidationRow& row, const std::string& path) {
  json doc;
  doc["label"] = row.label;
  doc["demand_vph"] = row.demand_vph;
  doc["vehicles"] = row.vehicles;
  doc["i_th"] = row.i_th;
  doc["i_sim"] = row.i_sim;
  doc["improvement_diff"] = row.improvement_diff;
  doc["network_delay_diff_original"] = row.delay_diff_original;
  doc["network_delay_diff_reduced"] = row.delay_diff_reduced;
  doc["reduced_run"] = row.reduced_run;
  doc["spillback"] = row.spillback;
  doc["spillback_link"] = row.spillback_link;
  write_json(path, doc);
}

std::string validation_text(const ValidationRow& row) {
  std::string out;
  out += fmt::format("{:<24} {}\n", "Demand", row.label);
  out += fmt::format("{:<24} {}\n", "Number of vehicles", row.vehicles);
  if (row.spillback) {
    out += fmt::format("{:<24} spillback on link {}\n", "Result", row.spillback_link);
    return out;
  }
  out += fmt::format("{:<24} {:.2f} %\n", "Improvement (I_th)", row.i_th * 100.0);
  if (row.reduced_run) {
    out += fmt::format("{:<24} {:.2f} %\n", "Improvement (I_sim)", row.i_sim * 100.0);
    out += fmt::format("{:<24} {:.2f} %\n", "Improvement Diff.", row.improvement_diff * 100.0);
  } else {
    out += fmt::format("{:<24} -\n", "Improvement (I_sim)");
    out += fmt::format("{:<24} -\n", "Improvement Diff.");
  }
  out += fmt::format("{:<24} {:.2f} %\n", "Network Delay Diff.",
                     row.delay_diff_original * 100.0);
  return out;
}

}  // namespace braess
