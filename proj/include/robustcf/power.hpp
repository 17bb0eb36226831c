#pragma once

#include "robustcf/tensor.hpp"

namespace rcf {

enum class ProjectionRule {
  /// v <- v * P_max / P when P > P_max (post-projection power P_max^2 / P).
  LinearInPower,
  /// v <- v * sqrt(P_max / P) when P > P_max (post-projection power P_max).
  NormCorrect,
};

/// Per-AP power projection; P is sum_i ||v_i^q||^2 for AP q.
CTensor power_project(const CTensor& v, double max_power,
                      ProjectionRule rule = ProjectionRule::LinearInPower);

/// Gradient of a scalar loss w.r.t. the projection input, given the gradient
/// w.r.t. its output. Complex gradients are stored as dL/dRe + i dL/dIm.
CTensor power_project_backward(const CTensor& v, const CTensor& grad_out, double max_power,
                               ProjectionRule rule = ProjectionRule::LinearInPower);

}  // namespace rcf
