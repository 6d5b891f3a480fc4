#include "braess/network.hpp"

#include <algorithm>

#include "braess/errors.hpp"

namespace braess {

void SignalSpec::validate() const {
  if (!(cycle_s > 0.0)) throw InputError("signal: cycle must be > 0");
  if (!(red_s > 0.0 && red_s < cycle_s))
    throw InputError("signal: red phase must lie strictly inside the cycle");
  if (green_vehicles < 1) throw InputError("signal: green throughput must be >= 1");
}

void StopSpec::validate() const {
  if (!(stop_delay_s > 0.0)) throw InputError("stop sign: delay must be > 0");
}

double Link::free_flow_time_h() const {
  if (!physical()) return 0.0;
  return length_m / free_flow_speed_mps / 3600.0;
}

bool RoutingMatrix::entry(int route, int link) const {
  const auto& r = rows.at(static_cast<size_t>(route));
  return std::binary_search(r.begin(), r.end(), link);
}

namespace {

template <typename T>
std::map<std::string, int> index_by_id(const std::vector<T>& items,
                                       const std::string& what) {
  std::map<std::string, int> index;
  for (size_t i = 0; i < items.size(); ++i) {
    if (items[i].id.empty()) throw InputError(what + " with empty id");
    if (!index.emplace(items[i].id, static_cast<int>(i)).second)
      throw InputError("duplicate " + what + " id: " + items[i].id);
  }
  return index;
}

}  // namespace

Network Network::build(std::vector<Node> nodes, std::vector<Link> links,
                       std::vector<ODPair> od_pairs, std::vector<Route> routes) {
  Network net;
  net.nodes_ = std::move(nodes);
  net.links_ = std::move(links);
  net.od_pairs_ = std::move(od_pairs);
  net.routes_ = std::move(routes);
  net.node_index_ = index_by_id(net.nodes_, "node");
  net.link_index_ = index_by_id(net.links_, "link");
  net.od_index_ = index_by_id(net.od_pairs_, "od pair");
  net.route_index_ = index_by_id(net.routes_, "route");
  net.validate();
  return net;
}

void Network::validate() const {
  for (const auto& node : nodes_) {
    if (node.control) {
      if (const auto* sig = std::get_if<SignalSpec>(&*node.control)) sig->validate();
      if (const auto* stop = std::get_if<StopSpec>(&*node.control)) stop->validate();
    }
  }
  for (const auto& link : links_) {
    if (link.physical()) {
      if (!(link.length_m > 0.0))
        throw InputError("link " + link.id + ": length must be > 0");
      if (!(link.free_flow_speed_mps > 0.0))
        throw InputError("link " + link.id + ": free-flow speed must be > 0");
      if (!(link.capacity_vph > 0.0))
        throw InputError("link " + link.id + ": capacity must be > 0");
      if (!has_node(link.from) || !has_node(link.to))
        throw InputError("link " + link.id + ": unknown endpoint node");
    } else {
      if (link.length_m != 0.0 || link.free_flow_speed_mps != 0.0 ||
          link.capacity_vph != 0.0 || !link.from.empty() || !link.to.empty())
        throw InputError("phantom link " + link.id + ": geometric fields must be unset");
      if (link.in_link.empty() || link.out_link.empty() || link.at_node.empty())
        throw InputError("phantom link " + link.id + ": movement fields required");
      if (!has_link(link.in_link) || !has_link(link.out_link))
        throw InputError("phantom link " + link.id + ": unknown movement link");
      const Link& in = this->link(link.in_link);
      const Link& out = this->link(link.out_link);
      if (!in.physical() || !out.physical())
        throw InputError("phantom link " + link.id + ": movement must join physical links");
      if (in.to != link.at_node || out.from != link.at_node)
        throw InputError("phantom link " + link.id + ": movement does not meet at node " +
                         link.at_node);
    }
  }
  for (const auto& od : od_pairs_) {
    if (od.origin == od.destination)
      throw InputError("od pair " + od.id + ": origin equals destination");
    if (od.demand_vph < 0.0)
      throw InputError("od pair " + od.id + ": negative demand");
    if (!has_node(od.origin) || !has_node(od.destination))
      throw InputError("od pair " + od.id + ": unknown node");
  }
  for (const auto& route : routes_) {
    if (!od_index_.count(route.od_pair))
      throw InputError("route " + route.id + ": unknown od pair " + route.od_pair);
    if (route.links.empty())
      throw InputError("route " + route.id + ": empty link sequence");
    std::set<std::string> seen;
    for (const auto& lid : route.links) {
      if (!has_link(lid))
        throw InputError("route " + route.id + ": unknown link " + lid);
      if (!seen.insert(lid).second)
        throw InputError("route " + route.id + ": link " + lid + " repeats");
    }
    // Physical subsequence must be a connected origin -> destination path;
    // any phantom must sit exactly on its own movement.
    const ODPair& od = od_pair(route.od_pair);
    const Link* prev_physical = nullptr;
    for (size_t i = 0; i < route.links.size(); ++i) {
      const Link& l = link(route.links[i]);
      if (l.physical()) {
        if (prev_physical == nullptr) {
          if (l.from != od.origin)
            throw InputError("route " + route.id + ": does not start at od origin");
        } else if (prev_physical->to != l.from) {
          throw InputError("route " + route.id + ": links " + prev_physical->id +
                           " and " + l.id + " are not adjacent");
        }
        prev_physical = &l;
      } else {
        if (i == 0 || i + 1 == route.links.size())
          throw InputError("route " + route.id + ": phantom link at route end");
        if (route.links[i - 1] != l.in_link || route.links[i + 1] != l.out_link)
          throw InputError("route " + route.id + ": phantom " + l.id +
                           " not between its movement links");
      }
    }
    if (prev_physical == nullptr)
      throw InputError("route " + route.id + ": no physical link");
    if (prev_physical->to != od.destination)
      throw InputError("route " + route.id + ": does not end at od destination");
  }
}

bool Network::has_node(const std::string& id) const { return node_index_.count(id) > 0; }
bool Network::has_link(const std::string& id) const { return link_index_.count(id) > 0; }
bool Network::has_route(const std::string& id) const { return route_index_.count(id) > 0; }

const Node& Network::node(const std::string& id) const {
  auto it = node_index_.find(id);
  if (it == node_index_.end()) throw InputError("unknown node: " + id);
  return nodes_[static_cast<size_t>(it->second)];
}

const Link& Network::link(const std::string& id) const {
  auto it = link_index_.find(id);
  if (it == link_index_.end()) throw InputError("unknown link: " + id);
  return links_[static_cast<size_t>(it->second)];
}

const ODPair& Network::od_pair(const std::string& id) const {
  auto it = od_index_.find(id);
  if (it == od_index_.end()) throw InputError("unknown od pair: " + id);
  return od_pairs_[static_cast<size_t>(it->second)];
}

const Route& Network::route(const std::string& id) const {
  auto it = route_index_.find(id);
  if (it == route_index_.end()) throw InputError("unknown route: " + id);
  return routes_[static_cast<size_t>(it->second)];
}

std::vector<std::string> Network::routes_of_od(const std::string& od_id) const {
  std::vector<std::string> out;
  for (const auto& route : routes_)
    if (route.od_pair == od_id) out.push_back(route.id);
  return out;
}

std::vector<std::string> Network::routes_through_link(const std::string& link_id) const {
  std::vector<std::string> out;
  for (const auto& route : routes_)
    if (std::find(route.links.begin(), route.links.end(), link_id) != route.links.end())
      out.push_back(route.id);
  return out;
}

std::vector<std::string> Network::physical_sequence(const Route& route) const {
  std::vector<std::string> out;
  for (const auto& lid : route.links)
    if (link(lid).physical()) out.push_back(lid);
  return out;
}

std::string phantom_link_id(const std::string& in_link, const std::string& out_link) {
  return "q_" + in_link + "__" + out_link;
}

Network insert_phantom_links(const Network& net) {
  std::map<std::pair<std::string, std::string>, std::string> movement_phantom;
  for (const auto& link : net.links())
    if (!link.physical()) movement_phantom[{link.in_link, link.out_link}] = link.id;

  std::vector<Link> links = net.links();
  std::vector<Route> routes;
  routes.reserve(net.routes().size());

  for (const auto& route : net.routes()) {
    Route updated = route;
    updated.links.clear();
    const auto& seq = route.links;
    for (size_t i = 0; i < seq.size(); ++i) {
      updated.links.push_back(seq[i]);
      if (i + 1 >= seq.size()) continue;
      const Link& cur = net.link(seq[i]);
      const Link& next = net.link(seq[i + 1]);
      if (!cur.physical() || !next.physical()) continue;

      const Node& node = net.node(cur.to);
      if (!node.control)
        throw MissingIntersectionData("route " + route.id +
                                      ": no intersection record for node " + node.id);
      if (std::holds_alternative<std::monostate>(*node.control)) continue;

      auto key = std::make_pair(cur.id, next.id);
      auto it = movement_phantom.find(key);
      if (it == movement_phantom.end()) {
        Link phantom;
        phantom.id = phantom_link_id(cur.id, next.id);
        phantom.kind = LinkKind::phantom;
        phantom.control = std::holds_alternative<SignalSpec>(*node.control)
                              ? ControlKind::signalized
                              : ControlKind::stop_sign;
        phantom.in_link = cur.id;
        phantom.out_link = next.id;
        phantom.at_node = node.id;
        if (net.has_link(phantom.id))
          throw InputError("phantom id collision: " + phantom.id);
        links.push_back(phantom);
        it = movement_phantom.emplace(key, phantom.id).first;
      }
      updated.links.push_back(it->second);
    }
    routes.push_back(std::move(updated));
  }

  return Network::build(net.nodes(), std::move(links), net.od_pairs(), std::move(routes));
}

RoutingMatrix build_routing_matrix(const Network& net) {
  RoutingMatrix m;
  for (const auto& link : net.links()) {
    m.link_index.emplace(link.id, static_cast<int>(m.link_ids.size()));
    m.link_ids.push_back(link.id);
  }
  for (const auto& route : net.routes()) {
    m.route_index.emplace(route.id, static_cast<int>(m.route_ids.size()));
    m.route_ids.push_back(route.id);
    std::vector<int> row;
    row.reserve(route.links.size());
    for (const auto& lid : route.links) {
      auto it = m.link_index.find(lid);
      if (it == m.link_index.end())
        throw InputError("route " + route.id + ": unknown link " + lid);
      row.push_back(it->second);
    }
    std::sort(row.begin(), row.end());
    m.rows.push_back(std::move(row));
  }
  return m;
}

namespace {

Network rebuild_without(const Network& net, const std::set<std::string>& doomed_routes,
                        const std::set<std::string>& doomed_links) {
  std::map<std::string, int> uses_before;
  std::map<std::string, int> uses_after;
  for (const auto& route : net.routes())
    for (const auto& lid : route.links) {
      ++uses_before[lid];
      if (!doomed_routes.count(route.id)) ++uses_after[lid];
    }

  // Guard: every OD pair keeps at least one route.
  for (const auto& od : net.od_pairs()) {
    bool any_left = false;
    bool had_any = false;
    for (const auto& route : net.routes()) {
      if (route.od_pair != od.id) continue;
      had_any = true;
      if (!doomed_routes.count(route.id)) any_left = true;
    }
    if (had_any && !any_left)
      throw ConnectivityViolation("od pair " + od.id + " would lose all routes");
  }

  std::set<std::string> kept;
  for (const auto& link : net.links()) {
    if (doomed_links.count(link.id)) continue;
    const bool orphaned = uses_before[link.id] > 0 && uses_after[link.id] == 0;
    if (orphaned) continue;
    kept.insert(link.id);
  }
  std::vector<Link> links;
  for (const auto& link : net.links()) {
    if (!kept.count(link.id)) continue;
    if (!link.physical() && (!kept.count(link.in_link) || !kept.count(link.out_link)))
      continue;  // movement no longer present
    links.push_back(link);
  }
  std::vector<Route> routes;
  for (const auto& route : net.routes())
    if (!doomed_routes.count(route.id)) routes.push_back(route);

  return Network::build(net.nodes(), std::move(links), net.od_pairs(), std::move(routes));
}

}  // namespace

Network remove_routes(const Network& net, const std::set<std::string>& route_ids) {
  for (const auto& rid : route_ids)
    if (!net.has_route(rid)) throw InputError("unknown route: " + rid);
  return rebuild_without(net, route_ids, {});
}

Network remove_links(const Network& net, const std::set<std::string>& link_ids) {
  std::set<std::string> doomed_routes;
  for (const auto& lid : link_ids) {
    if (!net.has_link(lid)) throw InputError("unknown link: " + lid);
    for (auto& rid : net.routes_through_link(lid)) doomed_routes.insert(rid);
  }
  return rebuild_without(net, doomed_routes, link_ids);
}

}  // namespace braess
