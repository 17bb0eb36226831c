#include "robustcf/power.hpp"

#include <cmath>
#include <stdexcept>

namespace rcf {
namespace {

double scale_for(double p, double max_power, ProjectionRule rule) {
  if (p <= max_power) return 1.0;
  return rule == ProjectionRule::LinearInPower ? max_power / p : std::sqrt(max_power / p);
}

}  // namespace

CTensor power_project(const CTensor& v, double max_power, ProjectionRule rule) {
  if (!(max_power > 0.0)) throw std::domain_error("power_project: P_max must be positive");
  CTensor out = v;
  for (std::size_t q = 0; q < v.aps(); ++q) {
    const double s = scale_for(v.ap_power(q), max_power, rule);
    if (s == 1.0) continue;
    for (std::size_t i = 0; i < v.users(); ++i)
      for (std::size_t m = 0; m < v.antennas(); ++m) out(q, i, m) *= s;
  }
  return out;
}

CTensor power_project_backward(const CTensor& v, const CTensor& grad_out, double max_power,
                               ProjectionRule rule) {
  require_same_shape(v, grad_out, "power_project_backward");
  CTensor grad_in = grad_out;
  for (std::size_t q = 0; q < v.aps(); ++q) {
    const double p = v.ap_power(q);
    if (p <= max_power) continue;
    const double s = scale_for(p, max_power, rule);
    // ds/dv (real-pair gradient) = ds_dp * 2 v.
    const double ds_dp = rule == ProjectionRule::LinearInPower
                             ? -max_power / (p * p)
                             : -0.5 * std::sqrt(max_power) * std::pow(p, -1.5);
    double inner = 0.0;  // <G, v> over the real representation
    for (std::size_t i = 0; i < v.users(); ++i)
      for (std::size_t m = 0; m < v.antennas(); ++m)
        inner += (std::conj(grad_out(q, i, m)) * v(q, i, m)).real();
    for (std::size_t i = 0; i < v.users(); ++i)
      for (std::size_t m = 0; m < v.antennas(); ++m)
        grad_in(q, i, m) = s * grad_out(q, i, m) + inner * ds_dp * 2.0 * v(q, i, m);
  }
  return grad_in;
}

}  // namespace rcf
