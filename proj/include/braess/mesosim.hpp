#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "braess/calibration.hpp"
#include "braess/delay.hpp"
#include "braess/network.hpp"

namespace braess {

enum class InjectionMode { deterministic, poisson };

struct SimConfig {
  double horizon_s = 3600.0;   // injection stops here; the network then drains
  double time_step_s = 0.5;    // must be <= 1 s
  std::uint64_t seed = 1;
  InjectionMode injection = InjectionMode::deterministic;
  double warmup_cycles = 2.0;  // cycles of the longest control, discarded
  double vehicle_space_m = 7.5;  // storage taken by one stopped vehicle
  bool unlimited_queue_storage = false;  // isolated-link calibration runs
  std::string trace_path;  // per-step occupancy CSV when non-empty

  void validate() const;
};

struct LinkStats {
  double mean_flow_vph = 0.0;
  double mean_delay_h = 0.0;  // traversal + queue wait per vehicle
  int max_queue = 0;
  bool spillback = false;
};

struct SimResult {
  double total_travel_time_vh = 0.0;  // sum over counted vehicles, veh.h
  int vehicles_injected = 0;
  int vehicles_arrived = 0;
  int vehicles_in_network = 0;  // still en route when the run ended
  int vehicles_counted = 0;     // entered after warm-up
  double warmup_s = 0.0;
  double measured_window_h = 0.0;      // (horizon - warmup) in hours
  double delay_rate_vhph = 0.0;        // total_travel_time / window
  std::map<std::string, LinkStats> per_link;
  bool spillback = false;
  std::string spillback_link;
  double spillback_time_s = 0.0;
};

/// Point-queue mesoscopic run. Vehicles traverse physical links at the BPR
/// time for the link's occupancy-equivalent flow; at controlled nodes a
/// point queue discharges at most n vehicles per green (signals) or one
/// vehicle per w seconds (stop signs). Phantom links in routes are skipped:
/// queueing emerges from the control dynamics. A queue overflowing the
/// link's storage aborts the run with the spillback flag set.
SimResult simulate(const Network& net, const DelayMap& delays,
                   const std::map<std::string, double>& route_flows_vph,
                   const SimConfig& config);

struct FlowSchedule {
  std::vector<double> flows_vph;  // one injection rate per window
  double window_s = 200.0;
};

FlowSchedule random_flow_schedule(int windows, double max_flow_vph, std::uint64_t seed);
FlowSchedule ascending_flow_schedule(int windows, double max_flow_vph);

/// Isolated-link calibration data. For a physical link: simulates the link
/// alone and records mean travel time per window. For a phantom link:
/// simulates its approach link through the movement's control and records
/// per-cycle throughput and mean queue delay per window.
ObservationSet generate_observations(const Network& net, const DelayMap& delays,
                                     const std::string& link_id,
                                     const FlowSchedule& schedule, SimConfig config);

}  // namespace braess
