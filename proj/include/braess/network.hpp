#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace braess {

enum class LinkKind { physical, phantom };
enum class ControlKind { signalized, stop_sign, uncontrolled };

/// Fixed-time signal: cycle of `cycle_s` seconds, of which `red_s` are red,
/// and at most `green_vehicles` vehicles discharge per green phase.
struct SignalSpec {
  double cycle_s = 0.0;
  double red_s = 0.0;
  int green_vehicles = 0;

  void validate() const;
};

/// Stop sign: every vehicle halts for `stop_delay_s` seconds at the line.
struct StopSpec {
  double stop_delay_s = 0.0;

  void validate() const;
};

/// monostate = explicitly uncontrolled pass-through.
using NodeControl = std::variant<std::monostate, SignalSpec, StopSpec>;

struct Node {
  std::string id;
  /// Empty optional means no intersection record at all; routes may not
  /// traverse such a node as an interior point.
  std::optional<NodeControl> control;
};

/// A directed edge of the extended graph. Physical links carry geometry;
/// phantom links carry only the control kind and the turn movement
/// (in_link -> out_link at at_node) they stand for.
struct Link {
  std::string id;
  LinkKind kind = LinkKind::physical;

  std::string from;
  std::string to;
  double length_m = 0.0;
  double free_flow_speed_mps = 0.0;
  double capacity_vph = 0.0;

  ControlKind control = ControlKind::uncontrolled;
  std::string in_link;
  std::string out_link;
  std::string at_node;

  std::string delay_fn_ref;  // defaults to the link id

  bool physical() const { return kind == LinkKind::physical; }
  double free_flow_time_h() const;
  const std::string& delay_ref() const {
    return delay_fn_ref.empty() ? id : delay_fn_ref;
  }
};

struct ODPair {
  std::string id;
  std::string origin;
  std::string destination;
  double demand_vph = 0.0;
};

struct Route {
  std::string id;
  std::string od_pair;
  std::vector<std::string> links;  // ordered, physical + phantom
};

/// Binary route x link incidence. Row and column order is frozen at build
/// time; removals correspond to deleting rows and orphaned columns.
struct RoutingMatrix {
  std::vector<std::string> route_ids;
  std::vector<std::string> link_ids;
  std::map<std::string, int> route_index;
  std::map<std::string, int> link_index;
  std::vector<std::vector<int>> rows;  // sorted link indexes per route

  int route_count() const { return static_cast<int>(route_ids.size()); }
  int link_count() const { return static_cast<int>(link_ids.size()); }
  bool entry(int route, int link) const;
};

/// Immutable after construction; mutating operations return new values.
class Network {
 public:
  Network() = default;

  /// Validates all structural invariants and freezes id -> index maps.
  static Network build(std::vector<Node> nodes, std::vector<Link> links,
                       std::vector<ODPair> od_pairs, std::vector<Route> routes);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<ODPair>& od_pairs() const { return od_pairs_; }
  const std::vector<Route>& routes() const { return routes_; }

  bool has_node(const std::string& id) const;
  bool has_link(const std::string& id) const;
  bool has_route(const std::string& id) const;
  const Node& node(const std::string& id) const;
  const Link& link(const std::string& id) const;
  const ODPair& od_pair(const std::string& id) const;
  const Route& route(const std::string& id) const;

  std::vector<std::string> routes_of_od(const std::string& od_id) const;
  std::vector<std::string> routes_through_link(const std::string& link_id) const;

  /// Physical links of a route, in order (phantoms skipped).
  std::vector<std::string> physical_sequence(const Route& route) const;

 private:
  void validate() const;

  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<ODPair> od_pairs_;
  std::vector<Route> routes_;
  std::map<std::string, int> node_index_;
  std::map<std::string, int> link_index_;
  std::map<std::string, int> od_index_;
  std::map<std::string, int> route_index_;
};

/// Deterministic id for the phantom link of a turn movement.
std::string phantom_link_id(const std::string& in_link, const std::string& out_link);

/// Inserts a phantom link between every consecutive pair of physical links
/// that meet at a controlled intersection. Movements shared across routes
/// share one phantom link. Idempotent.
Network insert_phantom_links(const Network& net);

RoutingMatrix build_routing_matrix(const Network& net);

/// Returns a copy of the network without the given routes. Links left with
/// no route are dropped. Throws ConnectivityViolation if any OD pair would
/// lose its last route.
Network remove_routes(const Network& net, const std::set<std::string>& route_ids);

/// Removes the links and every route through them (same guard as above).
Network remove_links(const Network& net, const std::set<std::string>& link_ids);

}  // namespace braess
