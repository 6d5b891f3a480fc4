#include "braess/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "braess/errors.hpp"

namespace braess {

namespace {

struct Line {
  double slope = 0.0;
  double intercept = 0.0;
  double sse = 0.0;
};

Line fit_line(const std::vector<std::pair<double, double>>& pts, size_t begin, size_t end) {
  const auto n = static_cast<double>(end - begin);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = begin; i < end; ++i) {
    sx += pts[i].first;
    sy += pts[i].second;
    sxx += pts[i].first * pts[i].first;
    sxy += pts[i].first * pts[i].second;
  }
  Line line;
  const double det = n * sxx - sx * sx;
  if (std::abs(det) < 1e-12 * std::max(1.0, n * sxx)) {
    line.slope = 0.0;
    line.intercept = n > 0 ? sy / n : 0.0;
  } else {
    line.slope = (n * sxy - sx * sy) / det;
    line.intercept = (sy - line.slope * sx) / n;
  }
  for (size_t i = begin; i < end; ++i) {
    const double r = line.slope * pts[i].first + line.intercept - pts[i].second;
    line.sse += r * r;
  }
  return line;
}

/// Best split of sorted points into two OLS lines (>= 2 points each side).
struct TwoLineFit {
  Line low, high;
  double sse = std::numeric_limits<double>::infinity();
  size_t split = 0;  // first index of the high branch
};

TwoLineFit fit_two_lines(const std::vector<std::pair<double, double>>& pts) {
  TwoLineFit best;
  for (size_t split = 2; split + 2 <= pts.size(); ++split) {
    const Line low = fit_line(pts, 0, split);
    const Line high = fit_line(pts, split, pts.size());
    const double sse = low.sse + high.sse;
    if (sse < best.sse) {
      best = {low, high, sse, split};
    }
  }
  return best;
}

double sse_for_b(const std::vector<TravelTimeSample>& samples, double t0, double cap,
                 double b, double* a_out) {
  double num = 0.0, den = 0.0;
  for (const auto& s : samples) {
    const double u = std::pow(s.flow_vph / cap, b);
    num += u * (s.travel_time_h - t0);
    den += t0 * u * u;
  }
  const double a = den > 0.0 ? std::max(0.0, num / den) : 0.0;
  double sse = 0.0;
  for (const auto& s : samples) {
    const double u = std::pow(s.flow_vph / cap, b);
    const double r = t0 * (1.0 + a * u) - s.travel_time_h;
    sse += r * r;
  }
  if (a_out) *a_out = a;
  return sse;
}

}  // namespace

BprFit fit_bpr(const ObservationSet& obs, double t0_h, double cap_vph) {
  if (!(t0_h > 0.0) || !(cap_vph > 0.0))
    throw InputError("fit_bpr: t0 and cap must be positive");
  const auto& samples = obs.travel_times;
  const double half = 0.5 * cap_vph;
  bool below = false, above = false;
  for (const auto& s : samples) {
    if (s.flow_vph < 0.0) throw InputError("fit_bpr: negative flow sample");
    below = below || s.flow_vph < half;
    above = above || s.flow_vph > half;
  }
  if (samples.size() < 8 || !below || !above)
    throw InsufficientData("fit_bpr: need >= 8 samples spanning half capacity (" +
                           obs.link_id + ")");

  // Coarse scan over the exponent, then golden-section refinement; `a` is
  // closed-form for each candidate b.
  const double b_lo = 0.05, b_hi = 16.0;
  double best_b = 4.0;
  double best_sse = std::numeric_limits<double>::infinity();
  const int grid = 320;
  for (int i = 0; i <= grid; ++i) {
    const double b = b_lo * std::pow(b_hi / b_lo, static_cast<double>(i) / grid);
    const double sse = sse_for_b(samples, t0_h, cap_vph, b, nullptr);
    if (sse < best_sse) {
      best_sse = sse;
      best_b = b;
    }
  }
  double lo = std::max(b_lo, best_b / 1.05);
  double hi = std::min(b_hi, best_b * 1.05);
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double m1 = hi - ratio * (hi - lo), m2 = lo + ratio * (hi - lo);
  double f1 = sse_for_b(samples, t0_h, cap_vph, m1, nullptr);
  double f2 = sse_for_b(samples, t0_h, cap_vph, m2, nullptr);
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    if (f1 < f2) {
      hi = m2;
      m2 = m1;
      f2 = f1;
      m1 = hi - ratio * (hi - lo);
      f1 = sse_for_b(samples, t0_h, cap_vph, m1, nullptr);
    } else {
      lo = m1;
      m1 = m2;
      f1 = f2;
      m2 = lo + ratio * (hi - lo);
      f2 = sse_for_b(samples, t0_h, cap_vph, m2, nullptr);
    }
  }
  BprFit fit;
  fit.b = 0.5 * (lo + hi);
  fit.residual_norm = std::sqrt(sse_for_b(samples, t0_h, cap_vph, fit.b, &fit.a));
  fit.source = FitSource::fitted;
  fit.samples = static_cast<int>(samples.size());
  return fit;
}

BprFit inherit_parameters(const Link& failed_link, const Link& upstream,
                          const BprFit& upstream_fit) {
  if (!failed_link.physical() || !upstream.physical())
    throw InputError("inherit_parameters: physical links required");
  if (upstream.to != failed_link.from)
    throw InputError("inherit_parameters: " + upstream.id + " is not upstream of " +
                     failed_link.id);
  BprFit fit = upstream_fit;
  fit.source = FitSource::inherited;
  fit.residual_norm = 0.0;
  fit.samples = 0;
  return fit;
}

CapacityEstimate estimate_capacity(const ObservationSet& obs, CapacityMethod method) {
  const auto& samples = obs.travel_times;
  auto max_flow = [&]() {
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, s.flow_vph);
    return m;
  };
  if (method == CapacityMethod::max_flow) {
    if (samples.size() < 2) throw InsufficientData("estimate_capacity: need >= 2 samples");
    return {max_flow(), false};
  }
  if (samples.size() < 6)
    throw InsufficientData("estimate_capacity: need >= 6 samples for pwl fit");

  // Two approximation lines in (occupancy, flow): occupancy = flow * time is
  // a density proxy, so the apex of the diagram is the lines' intersection
  // and its flow coordinate estimates the capacity.
  std::vector<std::pair<double, double>> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples)
    pts.emplace_back(s.flow_vph * s.travel_time_h, s.flow_vph);
  std::sort(pts.begin(), pts.end());

  const TwoLineFit fit = fit_two_lines(pts);
  const double slope_gap = std::abs(fit.low.slope - fit.high.slope);
  if (slope_gap <= 0.05 * std::max({std::abs(fit.low.slope), std::abs(fit.high.slope), 1e-12}))
    return {max_flow(), true};
  const double x_star = (fit.high.intercept - fit.low.intercept) / (fit.low.slope - fit.high.slope);
  if (!(x_star >= pts.front().first && x_star <= pts.back().first))
    return {max_flow(), true};
  const double cap = fit.low.slope * x_star + fit.low.intercept;
  if (!(cap > 0.0)) return {max_flow(), true};
  return {cap, false};
}

double saturation_rate(const SignalSpec& spec) {
  if (!(spec.cycle_s > 0.0) || spec.green_vehicles < 1)
    throw InputError("saturation_rate: bad signal spec");
  return 3600.0 * spec.green_vehicles / spec.cycle_s;
}

double saturation_rate(const StopSpec& spec) {
  spec.validate();
  return 3600.0 / spec.stop_delay_s;
}

double saturation_rate(const NodeControl& control, double cap_vph) {
  if (const auto* sig = std::get_if<SignalSpec>(&control)) return saturation_rate(*sig);
  if (const auto* stop = std::get_if<StopSpec>(&control)) return saturation_rate(*stop);
  return cap_vph;
}

double throughput(double z, double s) {
  if (z < 0.0 || !(s > 0.0)) throw InputError("throughput: need z >= 0, s > 0");
  if (z < s) return z;
  return s + 2.0 * (z - s) / z;
}

double queue_growth(double z, double s, double cycle_s) {
  if (z < s) return 0.0;
  return std::max(0.0, (z - throughput(z, s)) * cycle_s / 3600.0);
}

double expected_red_delay(const SignalSpec& spec) {
  // red_s == 0 is accepted here: no red phase means no expected delay.
  if (!(spec.cycle_s > 0.0) || spec.red_s < 0.0 || spec.red_s >= spec.cycle_s)
    throw InputError("expected_red_delay: bad signal spec");
  const double d0_s = spec.red_s * (1.0 + spec.red_s) / (2.0 * spec.cycle_s);
  return d0_s / 3600.0;
}

QueueFit fit_queue_delay(const ObservationSet& obs, double s_vph, double d0_h) {
  if (!(s_vph > 0.0) || d0_h < 0.0) throw InputError("fit_queue_delay: bad s or d0");
  std::vector<QueueSample> over;
  for (const auto& s : obs.queue_samples)
    if (s.flow_vph >= s_vph) over.push_back(s);

  QueueFit fit;
  fit.samples = static_cast<int>(over.size());

  double den = 0.0, num = 0.0;
  for (const auto& s : over) {
    const double dx = s.flow_vph - s_vph;
    den += dx * dx;
    num += dx * (s.avg_delay_h - d0_h);
  }
  if (over.size() < 4 || den <= 0.0) {
    fit.fn = QueueDelay::from_saturation(d0_h, 0.0, s_vph);
    fit.sufficient = false;
    return fit;
  }
  const double alpha = std::max(0.0, num / den);
  fit.fn = QueueDelay::from_saturation(d0_h, alpha, s_vph);
  fit.sufficient = true;
  double sse = 0.0;
  for (const auto& s : over) {
    const double r = fit.fn.alpha * s.flow_vph + fit.fn.beta_h - s.avg_delay_h;
    sse += r * r;
  }
  fit.residual_norm = std::sqrt(sse);
  return fit;
}

SaturationEstimate estimate_saturation_from_data(const ObservationSet& obs) {
  if (!(obs.cycle_s > 0.0))
    throw InputError("estimate_saturation_from_data: cycle length required");
  const auto& samples = obs.queue_samples;
  auto max_flow = [&]() {
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, s.flow_vph);
    return m;
  };
  if (samples.size() < 4)
    throw InsufficientData("estimate_saturation_from_data: need >= 4 samples");

  std::vector<std::pair<double, double>> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) pts.emplace_back(s.flow_vph, s.throughput_per_cycle);
  std::sort(pts.begin(), pts.end());

  const TwoLineFit fit = fit_two_lines(pts);
  const double slope_gap = std::abs(fit.low.slope - fit.high.slope);
  if (slope_gap <= 0.1 * std::max({std::abs(fit.low.slope), std::abs(fit.high.slope), 1e-12}))
    return {max_flow(), true};
  const double x_star = (fit.high.intercept - fit.low.intercept) / (fit.low.slope - fit.high.slope);
  if (!(x_star >= pts.front().first && x_star <= pts.back().first))
    return {max_flow(), true};
  const double per_cycle = fit.low.slope * x_star + fit.low.intercept;
  if (!(per_cycle > 0.0)) return {max_flow(), true};
  return {per_cycle * 3600.0 / obs.cycle_s, false};
}

double estimate_constant_delay(const ObservationSet& obs, double s_vph) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : obs.queue_samples)
    if (s.flow_vph < s_vph) {
      sum += s.avg_delay_h;
      ++n;
    }
  if (n == 0) throw InsufficientData("estimate_constant_delay: no sub-saturation samples");
  return sum / n;
}

}  // namespace braess
