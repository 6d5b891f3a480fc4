#include "braess/delay.hpp"

#include <cmath>

#include "braess/errors.hpp"

namespace braess {

namespace {

void require_nonnegative_flow(double z) {
  if (z < 0.0) throw InputError("negative flow: " + std::to_string(z));
}

}  // namespace

void BprDelay::validate() const {
  if (!(t0_h > 0.0)) throw InputError("BPR: t0 must be > 0");
  if (!(a >= 0.0)) throw InputError("BPR: a must be >= 0");
  if (!(b > 0.0)) throw InputError("BPR: b must be > 0");
  if (!(cap_vph > 0.0)) throw InputError("BPR: cap must be > 0");
}

QueueDelay QueueDelay::from_saturation(double d0_h, double alpha, double s_vph) {
  QueueDelay fn;
  fn.d0_h = d0_h;
  fn.alpha = alpha;
  fn.s_vph = s_vph;
  fn.beta_h = d0_h - alpha * s_vph;
  fn.validate();
  return fn;
}

void QueueDelay::validate() const {
  if (!(d0_h >= 0.0)) throw InputError("queue delay: d0 must be >= 0");
  if (!(alpha >= 0.0)) throw InputError("queue delay: alpha must be >= 0");
  if (!(s_vph > 0.0)) throw InputError("queue delay: s must be > 0");
  if (!(eps >= 0.0)) throw InputError("queue delay: eps must be >= 0");
  const double at_s = alpha * s_vph + beta_h;
  const double scale = std::max({std::abs(d0_h), std::abs(at_s), 1e-3});
  if (std::abs(at_s - d0_h) > 1e-9 * scale)
    throw InputError("queue delay: branches not continuous at s");
}

double eval(const BprDelay& fn, double z) {
  require_nonnegative_flow(z);
  return fn.t0_h * (1.0 + fn.a * std::pow(z / fn.cap_vph, fn.b));
}

double eval(const QueueDelay& fn, double z) {
  require_nonnegative_flow(z);
  if (z < fn.s_vph) return fn.d0_h + fn.eps * z;
  return fn.alpha * z + fn.beta_h + fn.eps * z;
}

double eval(const DelayFunction& fn, double z) {
  return std::visit([z](const auto& f) { return eval(f, z); }, fn);
}

double beckmann(const BprDelay& fn, double z) {
  require_nonnegative_flow(z);
  return fn.t0_h * z +
         fn.t0_h * fn.a * std::pow(z, fn.b + 1.0) /
             ((fn.b + 1.0) * std::pow(fn.cap_vph, fn.b));
}

double beckmann(const QueueDelay& fn, double z) {
  require_nonnegative_flow(z);
  const double quad = 0.5 * fn.eps * z * z;
  if (z < fn.s_vph) return fn.d0_h * z + quad;
  const double s = fn.s_vph;
  return fn.d0_h * s + quad + 0.5 * fn.alpha * (z * z - s * s) +
         fn.beta_h * (z - s);
}

double beckmann(const DelayFunction& fn, double z) {
  return std::visit([z](const auto& f) { return beckmann(f, z); }, fn);
}

void validate(const DelayFunction& fn) {
  std::visit([](const auto& f) { f.validate(); }, fn);
}

}  // namespace braess
