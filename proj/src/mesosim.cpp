#include "braess/mesosim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <queue>

#include "braess/errors.hpp"

namespace braess {

void SimConfig::validate() const {
  if (!(time_step_s > 0.0) || time_step_s > 1.0)
    throw InputError("sim: time step must be in (0, 1] s");
  if (!(horizon_s > 0.0)) throw InputError("sim: horizon must be > 0");
  if (warmup_cycles < 0.0) throw InputError("sim: warmup must be >= 0");
  if (!(vehicle_space_m > 0.0)) throw InputError("sim: vehicle space must be > 0");
}

namespace {

double uniform01(std::uint64_t& state) {
  // splitmix64; keeps injection streams identical across standard libraries.
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t x = state;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  x = x ^ (x >> 31);
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

struct RouteSchedule {
  int route = 0;
  std::vector<std::pair<double, double>> segments;  // (start_s, rate_vph)
};

struct Spawn {
  double time_s;
  int route;
};

struct Vehicle {
  int route = 0;
  int leg = 0;  // index into the route's physical sequence
  double entered_s = 0.0;
  double queue_join_s = 0.0;
};

struct MovingEntry {
  double ready_s;
  int vehicle;
  bool operator>(const MovingEntry& other) const {
    return ready_s > other.ready_s || (ready_s == other.ready_s && vehicle > other.vehicle);
  }
};

struct SignalState {
  double green_s = 0.0;
  double headway_s = 0.0;  // green / n
  long cycle = -1;
  int released = 0;
  double next_release_s = 0.0;
};

struct StopState {
  double last_release_s = -std::numeric_limits<double>::infinity();
};

struct LinkState {
  const Link* link = nullptr;
  const BprDelay* bpr = nullptr;
  int storage = 0;
  const SignalSpec* signal = nullptr;  // control at the downstream node
  const StopSpec* stop = nullptr;
  SignalState sig_state;
  StopState stop_state;

  std::priority_queue<MovingEntry, std::vector<MovingEntry>, std::greater<MovingEntry>> moving;
  std::deque<int> queue;

  std::vector<double> traverse_memo;  // by moving-vehicle count

  long entries = 0;
  double sum_travel_h = 0.0;
  double sum_queue_delay_h = 0.0;
  long queue_releases = 0;
  int max_queue = 0;
};

struct LinkEntryEvent {
  int link;
  double time_s;
  double travel_h;
};

struct QueueEvent {
  int link;
  double join_s;
  double release_s;
};

struct EventLog {
  std::vector<LinkEntryEvent> entries;
  std::vector<QueueEvent> queue_events;
};

/// Flow whose steady-state moving occupancy equals `count`, i.e. the root of
/// z * phi(z) = count, then the BPR time at that flow.
double traverse_time_h(const BprDelay& fn, int count) {
  if (count <= 0) return fn.t0_h;
  const double target = static_cast<double>(count);
  double hi = std::max(fn.cap_vph, 1.0);
  while (hi * eval(fn, hi) < target && hi < 1e12) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * eval(fn, mid) < target ? lo : hi) = mid;
  }
  return eval(fn, 0.5 * (lo + hi));
}

class Engine {
 public:
  Engine(const Network& net, const DelayMap& delays,
         const std::vector<RouteSchedule>& schedules, const SimConfig& config,
         EventLog* log)
      : net_(net), config_(config), log_(log) {
    config_.validate();

    for (const auto& link : net.links()) {
      if (!link.physical()) continue;
      LinkState state;
      state.link = &link;
      auto it = delays.find(link.delay_ref());
      if (it == delays.end())
        throw InputError("sim: no delay function for link " + link.id);
      state.bpr = std::get_if<BprDelay>(&it->second);
      if (state.bpr == nullptr)
        throw InputError("sim: physical link " + link.id + " needs a BPR delay");
      state.storage =
          std::max(1, static_cast<int>(link.length_m / config.vehicle_space_m));
      const Node& head = net.node(link.to);
      if (head.control) {
        if (const auto* sig = std::get_if<SignalSpec>(&*head.control)) {
          state.signal = sig;
          state.sig_state.green_s = sig->cycle_s - sig->red_s;
          state.sig_state.headway_s = state.sig_state.green_s / sig->green_vehicles;
        } else if (const auto* stop = std::get_if<StopSpec>(&*head.control)) {
          state.stop = stop;
        }
      }
      link_states_.push_back(std::move(state));
      link_pos_[link.id] = static_cast<int>(link_states_.size()) - 1;
    }

    double max_cycle = 0.0;
    for (const auto& node : net.nodes()) {
      if (!node.control) continue;
      if (const auto* sig = std::get_if<SignalSpec>(&*node.control)) {
        max_cycle = std::max(max_cycle, sig->cycle_s);
        if (config_.horizon_s < 10.0 * sig->cycle_s)
          throw InputError("sim: horizon shorter than 10 cycles of node " + node.id);
      } else if (const auto* stop = std::get_if<StopSpec>(&*node.control)) {
        max_cycle = std::max(max_cycle, stop->stop_delay_s);
      }
    }
    warmup_s_ = config_.warmup_cycles * max_cycle;

    for (const auto& route : net.routes()) {
      std::vector<int> legs;
      for (const auto& lid : net.physical_sequence(route))
        legs.push_back(link_pos_.at(lid));
      route_legs_.push_back(std::move(legs));
    }

    build_spawns(schedules);
  }

  SimResult run() {
    SimResult result;
    result.warmup_s = warmup_s_;

    std::ofstream trace;
    if (!config_.trace_path.empty()) {
      trace.open(config_.trace_path);
      trace << "time_s,link,moving,queued\n";
    }

    const double dt = config_.time_step_s;
    const double drain_limit = 10.0 * config_.horizon_s;
    size_t next_spawn = 0;
    double t = 0.0;
    while (true) {
      // Inject vehicles whose scheduled entry has passed.
      while (next_spawn < spawns_.size() && spawns_[next_spawn].time_s <= t) {
        const Spawn& spawn = spawns_[next_spawn++];
        const int vid = static_cast<int>(vehicles_.size());
        vehicles_.push_back({spawn.route, 0, spawn.time_s, 0.0});
        ++injected_;
        enter_link(vid, spawn.time_s);
        if (spillback_) break;
      }
      if (spillback_) break;

      // Move vehicles off links they have finished traversing. Repeat in
      // case a very short link is crossed within one step.
      for (int pass = 0; pass < 8; ++pass) {
        bool moved = false;
        for (auto& state : link_states_) {
          while (!state.moving.empty() && state.moving.top().ready_s <= t) {
            const MovingEntry entry = state.moving.top();
            state.moving.pop();
            moved = true;
            handle_link_end(entry.vehicle, state, entry.ready_s);
            if (spillback_) return finish(result, t);
          }
        }
        if (!moved) break;
      }

      // Controlled discharge.
      for (auto& state : link_states_) {
        if (state.signal != nullptr) release_signal(state, t);
        if (state.stop != nullptr) release_stop(state, t);
        if (spillback_) return finish(result, t);
      }

      if (trace.is_open()) {
        for (const auto& state : link_states_)
          trace << t << ',' << state.link->id << ',' << state.moving.size() << ','
                << state.queue.size() << '\n';
      }

      const bool drained = next_spawn >= spawns_.size() && active_ == 0;
      if (drained || t > drain_limit) break;
      t += dt;
    }
    return finish(result, t);
  }

  double warmup_s() const { return warmup_s_; }

 private:
  void build_spawns(const std::vector<RouteSchedule>& schedules) {
    for (const auto& sched : schedules) {
      std::uint64_t rng = config_.seed * 0x100000001b3ULL +
                          static_cast<std::uint64_t>(sched.route) * 0x9e3779b9ULL + 1;
      for (size_t s = 0; s < sched.segments.size(); ++s) {
        const double start = sched.segments[s].first;
        const double rate = sched.segments[s].second;
        const double end = (s + 1 < sched.segments.size()) ? sched.segments[s + 1].first
                                                           : config_.horizon_s;
        if (rate <= 0.0) continue;
        if (config_.injection == InjectionMode::deterministic) {
          const double gap = 3600.0 / rate;
          for (double time = start + 0.5 * gap; time < end; time += gap)
            spawns_.push_back({time, sched.route});
        } else {
          const double per_s = rate / 3600.0;
          double time = start;
          while (true) {
            const double u = uniform01(rng);
            time += -std::log(1.0 - u) / per_s;
            if (time >= end) break;
            spawns_.push_back({time, sched.route});
          }
        }
      }
    }
    std::stable_sort(spawns_.begin(), spawns_.end(), [](const Spawn& a, const Spawn& b) {
      return a.time_s < b.time_s || (a.time_s == b.time_s && a.route < b.route);
    });
  }

  void enter_link(int vid, double time_s) {
    Vehicle& vehicle = vehicles_[static_cast<size_t>(vid)];
    LinkState& state = link_states_[static_cast<size_t>(
        route_legs_[static_cast<size_t>(vehicle.route)][static_cast<size_t>(vehicle.leg)])];
    const int count = static_cast<int>(state.moving.size());
    if (static_cast<size_t>(count) >= state.traverse_memo.size())
      state.traverse_memo.resize(static_cast<size_t>(count) + 1, -1.0);
    if (state.traverse_memo[static_cast<size_t>(count)] < 0.0)
      state.traverse_memo[static_cast<size_t>(count)] = traverse_time_h(*state.bpr, count);
    const double travel_h = state.traverse_memo[static_cast<size_t>(count)];
    state.moving.push({time_s + travel_h * 3600.0, vid});
    ++state.entries;
    state.sum_travel_h += travel_h;
    ++active_;
    if (log_ != nullptr)
      log_->entries.push_back(
          {static_cast<int>(&state - link_states_.data()), time_s, travel_h});
  }

  void handle_link_end(int vid, LinkState& state, double ready_s) {
    Vehicle& vehicle = vehicles_[static_cast<size_t>(vid)];
    const auto& legs = route_legs_[static_cast<size_t>(vehicle.route)];
    --active_;
    if (vehicle.leg + 1 >= static_cast<int>(legs.size())) {
      ++arrived_;
      const double tt_h = (ready_s - vehicle.entered_s) / 3600.0;
      if (vehicle.entered_s >= warmup_s_) {
        ++counted_;
        counted_tt_h_ += tt_h;
      }
      return;
    }
    ++active_;
    if (state.signal != nullptr || state.stop != nullptr) {
      if (!config_.unlimited_queue_storage &&
          static_cast<int>(state.queue.size()) + 1 > state.storage) {
        spillback_ = true;
        spillback_link_ = state.link->id;
        spillback_time_s_ = ready_s;
        --active_;  // the vehicle is dropped with the aborted run
        return;
      }
      vehicle.queue_join_s = ready_s;
      state.queue.push_back(vid);
      state.max_queue = std::max(state.max_queue, static_cast<int>(state.queue.size()));
      return;
    }
    advance(vid, ready_s);
  }

  void advance(int vid, double time_s) {
    Vehicle& vehicle = vehicles_[static_cast<size_t>(vid)];
    --active_;  // enter_link re-increments
    ++vehicle.leg;
    enter_link(vid, time_s);
  }

  void release_from_queue(LinkState& state, double release_s) {
    const int vid = state.queue.front();
    state.queue.pop_front();
    Vehicle& vehicle = vehicles_[static_cast<size_t>(vid)];
    const double wait_h = (release_s - vehicle.queue_join_s) / 3600.0;
    state.sum_queue_delay_h += wait_h;
    ++state.queue_releases;
    if (log_ != nullptr)
      log_->queue_events.push_back({static_cast<int>(&state - link_states_.data()),
                                    vehicle.queue_join_s, release_s});
    advance(vid, release_s);
  }

  void release_signal(LinkState& state, double t) {
    const SignalSpec& sig = *state.signal;
    SignalState& st = state.sig_state;
    const long cycle = static_cast<long>(std::floor(t / sig.cycle_s));
    if (cycle != st.cycle) {
      st.cycle = cycle;
      st.released = 0;
      st.next_release_s = static_cast<double>(cycle) * sig.cycle_s;
    }
    const double green_end = static_cast<double>(cycle) * sig.cycle_s + st.green_s;
    while (!state.queue.empty() && st.released < sig.green_vehicles) {
      const int vid = state.queue.front();
      const double eff = std::max(st.next_release_s,
                                  vehicles_[static_cast<size_t>(vid)].queue_join_s);
      if (eff > t || eff >= green_end) break;
      ++st.released;
      st.next_release_s = eff + st.headway_s;
      release_from_queue(state, eff);
      if (spillback_) return;
    }
  }

  void release_stop(LinkState& state, double t) {
    const double w = state.stop->stop_delay_s;
    while (!state.queue.empty()) {
      const int vid = state.queue.front();
      const double eff =
          std::max(vehicles_[static_cast<size_t>(vid)].queue_join_s,
                   state.stop_state.last_release_s) +
          w;
      if (eff > t) break;
      state.stop_state.last_release_s = eff;
      release_from_queue(state, eff);
      if (spillback_) return;
    }
  }

  SimResult finish(SimResult result, double end_s) {
    result.vehicles_injected = injected_;
    result.vehicles_arrived = arrived_;
    result.vehicles_in_network = injected_ - arrived_;
    result.vehicles_counted = counted_;
    result.total_travel_time_vh = counted_tt_h_;
    result.measured_window_h = std::max(0.0, (config_.horizon_s - warmup_s_) / 3600.0);
    result.delay_rate_vhph = result.measured_window_h > 0.0
                                 ? counted_tt_h_ / result.measured_window_h
                                 : 0.0;
    result.spillback = spillback_;
    result.spillback_link = spillback_link_;
    result.spillback_time_s = spillback_time_s_;
    const double duration_h = std::max(end_s, 1.0) / 3600.0;
    for (const auto& state : link_states_) {
      LinkStats stats;
      stats.mean_flow_vph = static_cast<double>(state.entries) / duration_h;
      if (state.entries > 0)
        stats.mean_delay_h =
            (state.sum_travel_h + state.sum_queue_delay_h) / static_cast<double>(state.entries);
      stats.max_queue = state.max_queue;
      stats.spillback = spillback_ && state.link->id == spillback_link_;
      result.per_link[state.link->id] = stats;
    }
    return result;
  }

  const Network& net_;
  SimConfig config_;
  EventLog* log_ = nullptr;

  std::vector<LinkState> link_states_;
  std::map<std::string, int> link_pos_;
  std::vector<std::vector<int>> route_legs_;
  std::vector<Spawn> spawns_;
  std::vector<Vehicle> vehicles_;

  double warmup_s_ = 0.0;
  int injected_ = 0;
  int arrived_ = 0;
  int active_ = 0;
  int counted_ = 0;
  double counted_tt_h_ = 0.0;
  bool spillback_ = false;
  std::string spillback_link_;
  double spillback_time_s_ = 0.0;
};

SimResult run_schedules(const Network& net, const DelayMap& delays,
                        const std::vector<RouteSchedule>& schedules,
                        const SimConfig& config, EventLog* log, double* warmup_out) {
  Engine engine(net, delays, schedules, config, log);
  if (warmup_out != nullptr) *warmup_out = engine.warmup_s();
  return engine.run();
}

}  // namespace

SimResult simulate(const Network& net, const DelayMap& delays,
                   const std::map<std::string, double>& route_flows_vph,
                   const SimConfig& config) {
  // Route flows must respect the OD demands they came from.
  for (const auto& [rid, flow] : route_flows_vph) {
    if (!net.has_route(rid)) throw InputError("sim: unknown route " + rid);
    if (flow < 0.0) throw InputError("sim: negative flow on route " + rid);
  }
  for (const auto& od : net.od_pairs()) {
    double sum = 0.0;
    bool any = false;
    for (const auto& rid : net.routes_of_od(od.id)) {
      any = true;
      auto it = route_flows_vph.find(rid);
      if (it != route_flows_vph.end()) sum += it->second;
    }
    if (any && std::abs(sum - od.demand_vph) > 1e-6 * std::max(1.0, od.demand_vph))
      throw InputError("sim: route flows of od " + od.id + " do not match its demand");
  }

  std::vector<RouteSchedule> schedules;
  for (size_t r = 0; r < net.routes().size(); ++r) {
    auto it = route_flows_vph.find(net.routes()[r].id);
    const double rate = it == route_flows_vph.end() ? 0.0 : it->second;
    if (rate <= 0.0) continue;
    schedules.push_back({static_cast<int>(r), {{0.0, rate}}});
  }
  return run_schedules(net, delays, schedules, config, nullptr, nullptr);
}

FlowSchedule random_flow_schedule(int windows, double max_flow_vph, std::uint64_t seed) {
  FlowSchedule schedule;
  std::uint64_t rng = seed * 0x9e3779b97f4a7c15ULL + 0x51ULL;
  for (int i = 0; i < windows; ++i)
    schedule.flows_vph.push_back(uniform01(rng) * max_flow_vph);
  return schedule;
}

FlowSchedule ascending_flow_schedule(int windows, double max_flow_vph) {
  FlowSchedule schedule;
  for (int i = 0; i < windows; ++i)
    schedule.flows_vph.push_back(max_flow_vph * (i + 1) / windows);
  return schedule;
}

ObservationSet generate_observations(const Network& net, const DelayMap& delays,
                                     const std::string& link_id,
                                     const FlowSchedule& schedule, SimConfig config) {
  if (schedule.flows_vph.empty()) throw InputError("observations: empty flow schedule");
  const Link& target = net.link(link_id);
  const double total_s = schedule.window_s * static_cast<double>(schedule.flows_vph.size());
  config.horizon_s = total_s;
  config.unlimited_queue_storage = true;

  ObservationSet obs;
  obs.link_id = link_id;
  obs.window_s = schedule.window_s;

  if (target.physical()) {
    // Travel-time mode: the link alone, free outflow.
    std::vector<Node> nodes{{target.from, NodeControl{}}, {target.to, NodeControl{}}};
    Link iso = target;
    iso.delay_fn_ref = target.delay_ref();
    std::vector<ODPair> ods{{"od", target.from, target.to, 0.0}};
    std::vector<Route> routes{{"r", "od", {iso.id}}};
    Network iso_net = Network::build(nodes, {iso}, ods, routes);

    RouteSchedule rs{0, {}};
    for (size_t i = 0; i < schedule.flows_vph.size(); ++i)
      rs.segments.emplace_back(schedule.window_s * static_cast<double>(i),
                               std::clamp(schedule.flows_vph[i], 0.0, 3000.0));
    EventLog log;
    run_schedules(iso_net, delays, {rs}, config, &log, nullptr);

    const double t0_h = std::get<BprDelay>(delays.at(iso.delay_ref())).t0_h;
    for (size_t w = 0; w < schedule.flows_vph.size(); ++w) {
      const double lo = schedule.window_s * static_cast<double>(w);
      const double hi = lo + schedule.window_s;
      double sum = 0.0;
      int n = 0;
      for (const auto& e : log.entries)
        if (e.time_s >= lo && e.time_s < hi) {
          sum += e.travel_h;
          ++n;
        }
      // Windows with no entries report the free-flow time (the zero-flow
      // measurement limit).
      obs.travel_times.push_back(
          {std::clamp(schedule.flows_vph[w], 0.0, 3000.0), n > 0 ? sum / n : t0_h});
    }
    return obs;
  }

  // Queue mode: the movement's approach link through its control, plus a
  // free stub so vehicles actually cross the stop line.
  const Link& approach_src = net.link(target.in_link);
  const Node& ctrl_node = net.node(target.at_node);
  if (!ctrl_node.control || std::holds_alternative<std::monostate>(*ctrl_node.control))
    throw InputError("observations: phantom " + link_id + " has no controlled node");

  double cycle_s = 0.0;
  if (const auto* sig = std::get_if<SignalSpec>(&*ctrl_node.control)) cycle_s = sig->cycle_s;
  if (const auto* stop = std::get_if<StopSpec>(&*ctrl_node.control))
    cycle_s = stop->stop_delay_s;
  obs.cycle_s = cycle_s;

  std::vector<Node> nodes{{approach_src.from, NodeControl{}},
                          {approach_src.to, *ctrl_node.control},
                          {"__exit", NodeControl{}}};
  Link approach = approach_src;
  approach.delay_fn_ref = approach_src.delay_ref();
  Link stub;
  stub.id = "__stub";
  stub.from = approach_src.to;
  stub.to = "__exit";
  stub.length_m = 50.0;
  stub.free_flow_speed_mps = 15.0;
  stub.capacity_vph = 1e6;
  std::vector<ODPair> ods{{"od", approach.from, "__exit", 0.0}};
  std::vector<Route> routes{{"r", "od", {approach.id, stub.id}}};
  Network iso_net = Network::build(nodes, {approach, stub}, ods, routes);

  DelayMap local = delays;
  local["__stub"] = BprDelay{50.0 / 15.0 / 3600.0, 0.1, 4.0, 1e6};

  RouteSchedule rs{0, {}};
  for (size_t i = 0; i < schedule.flows_vph.size(); ++i)
    rs.segments.emplace_back(schedule.window_s * static_cast<double>(i),
                             std::clamp(schedule.flows_vph[i], 0.0, 3000.0));
  EventLog log;
  run_schedules(iso_net, local, {rs}, config, &log, nullptr);

  const double cycles_per_window = cycle_s > 0.0 ? schedule.window_s / cycle_s : 1.0;
  for (size_t w = 0; w < schedule.flows_vph.size(); ++w) {
    const double lo = schedule.window_s * static_cast<double>(w);
    const double hi = lo + schedule.window_s;
    double delay_sum = 0.0;
    int joined = 0;
    int released = 0;
    for (const auto& e : log.queue_events) {
      if (e.join_s >= lo && e.join_s < hi) {
        delay_sum += (e.release_s - e.join_s) / 3600.0;
        ++joined;
      }
      if (e.release_s >= lo && e.release_s < hi) ++released;
    }
    QueueSample sample;
    sample.flow_vph = std::clamp(schedule.flows_vph[w], 0.0, 3000.0);
    sample.throughput_per_cycle = static_cast<double>(released) / cycles_per_window;
    sample.avg_delay_h = joined > 0 ? delay_sum / joined : 0.0;
    obs.queue_samples.push_back(sample);
  }
  return obs;
}

}  // namespace braess
