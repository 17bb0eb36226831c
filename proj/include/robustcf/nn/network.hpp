#pragma once

// Full forward pipeline: CSI conversion, residual network, attention
// thresholds, gating, complex conversion and power projection, together with
// its reverse pass.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "robustcf/nn/architecture.hpp"
#include "robustcf/nn/ops.hpp"
#include "robustcf/power.hpp"
#include "robustcf/random.hpp"
#include "robustcf/tensor.hpp"

namespace rcf::nn {

struct NetParams {
  std::vector<ConvParams> conv;  // one per layer
  std::vector<std::vector<double>> bn_gamma, bn_beta;
  std::vector<std::vector<double>> running_mean, running_var;
  ConvParams identity;
  ConvParams attention;

  bool operator==(const NetParams&) const = default;
};

/// Allocates parameters for `spec` with M input channels, everything zero
/// (batch-norm scale included) and running variance 1.
NetParams zero_params(const NetworkSpec& spec, int M);

/// Glorot-uniform weights, zero biases, unit batch-norm scale.
NetParams init_params(const NetworkSpec& spec, int M, Rng& rng);

/// Visits every trainable array in a fixed order. Running statistics are not
/// trainable and are skipped.
void for_each_trainable(NetParams& p, const std::function<void(const std::string&, std::vector<double>&)>& fn);
void for_each_trainable(const NetParams& p,
                        const std::function<void(const std::string&, const std::vector<double>&)>& fn);
std::size_t trainable_count(const NetParams& p);

enum class Mode {
  Train,  // batch statistics, soft gate
  Eval,   // running statistics, hard gate
};

struct ForwardOptions {
  Mode mode = Mode::Train;
  double max_power = 1.0;
  ProjectionRule rule = ProjectionRule::LinearInPower;
};

struct LayerTrace {
  Batch input, pre_bn, pre_act, output;
  BatchNormCache bn;
};

struct SampleTrace {
  Tensor3 csi;
  Tensor3 identity_out;
  Tensor3 v_r;  // after the final activation, Q x I x 2M
  Eigen::MatrixXd thresholds;
  ClusterMatrix cluster;
  Eigen::MatrixXd gate;  // the matrix actually applied (soft or hard)
  Tensor3 v_spa;
  CTensor unprojected;
  CTensor beamformer;
};

struct ForwardTrace {
  Mode mode = Mode::Train;
  std::vector<LayerTrace> layers;
  std::vector<SampleTrace> samples;

  std::vector<CTensor> beamformers() const;
};

/// Runs the pipeline over a batch of channel estimates. Pure: running
/// statistics are left untouched (see update_running_stats).
ForwardTrace forward_batch(const std::vector<CTensor>& est_h, const NetworkSpec& spec,
                           const NetParams& params, const ForwardOptions& opt);

/// Single-sample convenience wrapper (Eval mode uses running statistics).
CTensor forward(const CTensor& est_h, const NetworkSpec& spec, const NetParams& params,
                const ForwardOptions& opt, ClusterMatrix* cluster = nullptr);

/// Back-propagates dL/dV for every sample (complex gradients as
/// dL/dRe + i dL/dIm). Returns parameter gradients with the NetParams layout
/// (running statistic slots are zero).
NetParams backward_batch(const ForwardTrace& trace, const NetworkSpec& spec, const NetParams& params,
                         const std::vector<CTensor>& grad_v, const ForwardOptions& opt);

/// Folds the batch statistics of a training-mode trace into the running ones.
void update_running_stats(NetParams& params, const ForwardTrace& trace,
                          double momentum = kBatchNormMomentum);

/// Encodes every non-smooth branch taken during forward (ReLU signs, max-pool
/// winners, projection branches). Two evaluations with equal signatures lie on
/// the same smooth piece.
std::vector<std::uint8_t> branch_signature(const ForwardTrace& trace, const NetworkSpec& spec,
                                           const ForwardOptions& opt);

}  // namespace rcf::nn
