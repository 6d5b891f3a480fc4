#pragma once

#include <optional>
#include <string>
#include <vector>

#include "braess/delay.hpp"
#include "braess/network.hpp"

namespace braess {

struct TravelTimeSample {
  double flow_vph = 0.0;
  double travel_time_h = 0.0;
};

struct QueueSample {
  double flow_vph = 0.0;
  double throughput_per_cycle = 0.0;
  double avg_delay_h = 0.0;
};

/// Timestamp-free measurement windows for one link; either travel-time
/// samples (link delay fitting) or queue samples (saturation / queue-delay
/// fitting) are filled, depending on what the link needed.
struct ObservationSet {
  std::string link_id;
  double window_s = 200.0;
  double cycle_s = 0.0;  // signal cycle behind queue samples, when applicable
  std::vector<TravelTimeSample> travel_times;
  std::vector<QueueSample> queue_samples;
};

enum class FitSource { fitted, inherited, fallback };

struct BprFit {
  double a = 0.0;
  double b = 0.0;
  double residual_norm = 0.0;
  FitSource source = FitSource::fitted;
  int samples = 0;
};

/// Least-squares (a, b) against t0*(1 + a*(z/cap)^b); closed-form a for each
/// candidate b, 1-D search over b. Requires >= 8 samples spanning both sides
/// of half capacity, else throws InsufficientData.
BprFit fit_bpr(const ObservationSet& obs, double t0_h, double cap_vph);

/// Copies the upstream link's fitted (a, b) onto a link whose own fit failed.
BprFit inherit_parameters(const Link& failed_link, const Link& upstream,
                          const BprFit& upstream_fit);

enum class CapacityMethod { max_flow, pwl_intersection };

struct CapacityEstimate {
  double cap_vph = 0.0;
  bool fell_back = false;  // pwl fit degenerated; max-flow value returned
};

/// Capacity from the fundamental diagram built out of (flow, travel time)
/// samples: either the maximal recorded flow, or the flow coordinate of the
/// intersection of the two branch approximation lines.
CapacityEstimate estimate_capacity(const ObservationSet& obs, CapacityMethod method);

double saturation_rate(const SignalSpec& spec);  // 3600 n / D
double saturation_rate(const StopSpec& spec);    // 3600 / w
/// Uncontrolled links saturate at their physical capacity.
double saturation_rate(const NodeControl& control, double cap_vph);

/// Hourly discharge as a function of demand flow; capped just above s.
double throughput(double flow_vph, double s_vph);

/// Vehicles added to the queue per cycle of D seconds.
double queue_growth(double flow_vph, double s_vph, double cycle_s);

/// Expected delay of a uniformly arriving vehicle due to the red phase, hours.
double expected_red_delay(const SignalSpec& spec);

struct QueueFit {
  QueueDelay fn;
  bool sufficient = false;  // false: degenerated to the constant d0
  double residual_norm = 0.0;
  int samples = 0;
};

/// Fits the over-saturation line alpha*z + beta to samples with z >= s,
/// constrained through (s, d0) with alpha >= 0. With fewer than 4 such
/// samples the function degenerates to the constant d0.
QueueFit fit_queue_delay(const ObservationSet& obs, double s_vph, double d0_h);

struct SaturationEstimate {
  double s_vph = 0.0;
  bool fell_back = false;  // no detectable breakpoint; max observed flow
};

/// Breakpoint of a two-segment fit of per-cycle throughput vs flow, scaled
/// by 3600/D. Requires obs.cycle_s and queue samples.
SaturationEstimate estimate_saturation_from_data(const ObservationSet& obs);

/// Mean measured queue delay over sub-saturation samples; data-driven d0.
double estimate_constant_delay(const ObservationSet& obs, double s_vph);

}  // namespace braess
