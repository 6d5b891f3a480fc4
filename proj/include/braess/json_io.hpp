#pragma once

#include <string>
#include <vector>

#include "braess/calibration.hpp"
#include "braess/delay.hpp"
#include "braess/elimination.hpp"
#include "braess/equilibrium.hpp"
#include "braess/network.hpp"

namespace braess {

Network load_network(const std::string& path);
void save_network(const Network& net, const std::string& path);

DelayMap load_delay_params(const std::string& path);
void save_delay_params(const DelayMap& delays, const std::string& path);

/// CSV columns: od_id, origin, destination, demand_vph. Returned rows
/// override the matching OD pairs of a network.
std::vector<ODPair> load_demand_csv(const std::string& path);
Network apply_demand(const Network& net, const std::vector<ODPair>& rows);

/// CSV columns: flow_vph,travel_time_s  or
///              flow_vph,throughput_per_cycle,avg_delay_s[,cycle_s]
ObservationSet load_observations_csv(const std::string& path, const std::string& link_id);
void save_observations_csv(const ObservationSet& obs, const std::string& path);

void save_equilibrium(const EquilibriumResult& result, const EquilibriumProblem& problem,
                      const std::string& path);

struct EquilibriumFileSummary {
  std::map<std::string, double> route_flows_vph;
  double total_delay = 0.0;
  double delay_per_vehicle_h = 0.0;
  bool converged = true;
};
EquilibriumFileSummary load_equilibrium_summary(const std::string& path);

struct RemovalReportSummary {
  std::string method;
  bool paradox_free = true;
  double y_original = 0.0;
  double y_final = 0.0;
  double improvement = 0.0;
};
RemovalReportSummary load_removal_report_summary(const std::string& path);

void save_removal_report(const RemovalReport& report, const std::string& path);
std::string removal_report_text(const RemovalReport& report);

struct ValidationRow {
  std::string label;
  double demand_vph = 0.0;
  int vehicles = 0;
  double i_th = 0.0;
  double i_sim = 0.0;
  double improvement_diff = 0.0;      // |i_th - i_sim| / i_th
  double delay_diff_original = 0.0;   // |Y - Y_sim| / Y_sim
  double delay_diff_reduced = 0.0;
  bool reduced_run = false;  // false when the network was paradox-free
  bool spillback = false;
  std::string spillback_link;
};

void save_validation(const ValidationRow& row, const std::string& path);
std::string validation_text(const ValidationRow& row);

}  // namespace braess
