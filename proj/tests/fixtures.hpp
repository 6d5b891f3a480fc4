#pragma once

#include <string>
#include <vector>

#include "braess/delay.hpp"
#include "braess/network.hpp"

namespace fixtures {

using namespace braess;

inline Link physical_link(const std::string& id, const std::string& from,
                          const std::string& to, double length_m = 1000.0,
                          double speed_mps = 10.0, double cap_vph = 1000.0) {
  Link link;
  link.id = id;
  link.kind = LinkKind::physical;
  link.from = from;
  link.to = to;
  link.length_m = length_m;
  link.free_flow_speed_mps = speed_mps;
  link.capacity_vph = cap_vph;
  return link;
}

inline Node plain_node(const std::string& id) { return {id, NodeControl{}}; }
inline Node bare_node(const std::string& id) { return {id, std::nullopt}; }

/// Textbook four-node diamond with a free cross link. Variable links delay
/// z/100, constant links 45, cross ~0 (all per the usual statement of the
/// paradox; times in hours here). Routes: upper, lower, cross.
struct ClassicDiamond {
  Network net;
  DelayMap delays;
};

inline ClassicDiamond classic_diamond(double demand_vph = 4000.0) {
  std::vector<Node> nodes = {plain_node("A"), plain_node("B"), plain_node("C"),
                             plain_node("D")};
  std::vector<Link> links = {
      physical_link("ab", "A", "B"), physical_link("ac", "A", "C"),
      physical_link("bc", "B", "C"), physical_link("bd", "B", "D"),
      physical_link("cd", "C", "D")};
  std::vector<ODPair> ods = {{"k1", "A", "D", demand_vph}};
  std::vector<Route> routes = {{"r_upper", "k1", {"ab", "bd"}},
                               {"r_lower", "k1", {"ac", "cd"}},
                               {"r_cross", "k1", {"ab", "bc", "cd"}}};
  ClassicDiamond d;
  d.net = Network::build(nodes, links, ods, routes);
  // z/100: slope t0*a/cap = 1e-6 * 1e7 / 1000 = 1/100.
  d.delays["ab"] = BprDelay{1e-6, 1e7, 1.0, 1000.0};
  d.delays["cd"] = BprDelay{1e-6, 1e7, 1.0, 1000.0};
  d.delays["bd"] = BprDelay{45.0, 0.0, 1.0, 1000.0};
  d.delays["ac"] = BprDelay{45.0, 0.0, 1.0, 1000.0};
  d.delays["bc"] = BprDelay{1e-9, 0.0, 1.0, 1000.0};
  return d;
}

inline double expected_red_delay_h() {
  // 15 s red in a 60 s cycle: 15 * 16 / 120 = 2 s.
  return 2.0 / 3600.0;
}

/// Road-scale diamond with signals at the interior nodes; the variable
/// approaches congest linearly, the long arterials stay near free flow, and
/// the short cut through both variable links triggers the paradox around
/// 1350 veh/h.
inline ClassicDiamond physical_diamond(double demand_vph = 1350.0) {
  SignalSpec signal{60.0, 15.0, 40};
  std::vector<Node> nodes = {plain_node("A"),
                             {"B", NodeControl{signal}},
                             {"C", NodeControl{signal}},
                             plain_node("D")};
  std::vector<Link> links = {
      physical_link("ab", "A", "B", 800.0, 16.0, 1000.0),
      physical_link("ac", "A", "C", 3200.0, 20.0, 2400.0),
      physical_link("bc", "B", "C", 150.0, 15.0, 1800.0),
      physical_link("bd", "B", "D", 3200.0, 20.0, 2400.0),
      physical_link("cd", "C", "D", 800.0, 16.0, 1000.0)};
  std::vector<ODPair> ods = {{"k1", "A", "D", demand_vph}};
  std::vector<Route> routes = {{"r_upper", "k1", {"ab", "bd"}},
                               {"r_lower", "k1", {"ac", "cd"}},
                               {"r_cross", "k1", {"ab", "bc", "cd"}}};
  ClassicDiamond d;
  d.net = Network::build(nodes, links, ods, routes);
  d.delays["ab"] = BprDelay{50.0 / 3600.0, 4.0 / 3.0, 1.0, 1000.0};
  d.delays["cd"] = BprDelay{50.0 / 3600.0, 4.0 / 3.0, 1.0, 1000.0};
  d.delays["ac"] = BprDelay{160.0 / 3600.0, 0.15, 4.0, 2400.0};
  d.delays["bd"] = BprDelay{160.0 / 3600.0, 0.15, 4.0, 2400.0};
  d.delays["bc"] = BprDelay{10.0 / 3600.0, 0.15, 4.0, 1800.0};
  const double d0 = expected_red_delay_h();
  d.delays[phantom_link_id("ab", "bd")] = QueueDelay::from_saturation(d0, 0.0, 2400.0);
  d.delays[phantom_link_id("ab", "bc")] = QueueDelay::from_saturation(d0, 0.0, 2400.0);
  d.delays[phantom_link_id("ac", "cd")] = QueueDelay::from_saturation(d0, 0.0, 2400.0);
  d.delays[phantom_link_id("bc", "cd")] = QueueDelay::from_saturation(d0, 0.0, 2400.0);
  return d;
}

}  // namespace fixtures
