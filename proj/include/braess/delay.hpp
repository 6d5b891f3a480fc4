#pragma once

#include <map>
#include <string>
#include <variant>

namespace braess {

// Slope added to every queue delay so the objective stays strictly increasing
// in link flow; keeps equilibrium link flows unique without measurably
// changing delays.
inline constexpr double kQueueSlopeEps = 1e-9;

/// Polynomial volume-delay curve t0 * (1 + a * (z/cap)^b).
/// Times are hours, flows veh/h.
struct BprDelay {
  double t0_h = 0.0;
  double a = 0.0;
  double b = 1.0;
  double cap_vph = 0.0;

  void validate() const;  // throws InputError on bad parameters
};

/// Piecewise-linear intersection queue delay: a constant d0 below the
/// saturation rate s, a line alpha*z + beta above it, continuous at s.
struct QueueDelay {
  double d0_h = 0.0;
  double alpha = 0.0;   // hours per (veh/h)
  double beta_h = 0.0;  // alpha * s + beta == d0
  double s_vph = 0.0;
  double eps = kQueueSlopeEps;

  /// Builds the function from (d0, alpha, s) with beta chosen so the two
  /// branches meet at s.
  static QueueDelay from_saturation(double d0_h, double alpha, double s_vph);

  void validate() const;
};

using DelayFunction = std::variant<BprDelay, QueueDelay>;

/// Per-link delay functions keyed by delay_fn_ref (link id by default).
using DelayMap = std::map<std::string, DelayFunction>;

double eval(const BprDelay& fn, double flow_vph);
double eval(const QueueDelay& fn, double flow_vph);
double eval(const DelayFunction& fn, double flow_vph);

/// Exact antiderivative of the delay with value 0 at zero flow.
double beckmann(const BprDelay& fn, double flow_vph);
double beckmann(const QueueDelay& fn, double flow_vph);
double beckmann(const DelayFunction& fn, double flow_vph);

void validate(const DelayFunction& fn);

}  // namespace braess
