#pragma once

#include <span>
#include <vector>

#include "robustcf/power.hpp"
#include "robustcf/tensor.hpp"

namespace rcf {

struct WmmseState {
  std::vector<cplx> receivers;  // u_i
  std::vector<double> weights;  // w_i = 1 / MSE_i >= 1
  CTensor beamformer;
  double objective = 0.0;  // nominal sum rate, bits/s/Hz
};

struct WmmseResult {
  /// Output after the per-AP projection (satisfies the per-AP power limit).
  CTensor beamformer;
  /// Iterate before projection (meets the total budget Q * P_max).
  CTensor unprojected;
  /// Nominal sum rate at the initial point and after every iteration.
  std::vector<double> objective_history;
  WmmseState state;
  /// Nominal sum rate of `beamformer` on the design channel.
  double rate = 0.0;
};

/// Weighted-MMSE sum-rate beamforming on `channel` under the relaxed total
/// power Q * max_power, followed by per-AP power projection.
WmmseResult wmmse_solve(const CTensor& channel, double max_power, std::span<const double> noise,
                        int iters = 15, ProjectionRule rule = ProjectionRule::LinearInPower);

}  // namespace rcf
