#pragma once

// Differentiable building blocks. Every forward has a matching backward that
// maps the gradient of a scalar loss w.r.t. the output onto the inputs and
// parameters. Parameter gradients are accumulated (+=), never overwritten.

#include <vector>

#include <Eigen/Dense>

#include "robustcf/nn/architecture.hpp"
#include "robustcf/nn/tensor3.hpp"
#include "robustcf/tensor.hpp"

namespace rcf::nn {

/// Convolution weights laid out [out][in][kw][kh], plus one bias per output.
struct ConvParams {
  int out = 0, in = 0, kw = 0, kh = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  ConvParams() = default;
  ConvParams(int out_ch, int in_ch, int kernel_w, int kernel_h);

  double& w(int o, int c, int u, int v) { return weight[((o * in + c) * kw + u) * kh + v]; }
  double w(int o, int c, int u, int v) const { return weight[((o * in + c) * kw + u) * kh + v]; }
  bool operator==(const ConvParams&) const = default;
};

// ---- CSI conversion -------------------------------------------------------

/// Entry (q, i, m) = |h_i^q[m]|.
Tensor3 csi_conversion(const CTensor& est_h);

// ---- convolution ----------------------------------------------------------

/// Zero-padded, strided cross-correlation.
Tensor3 conv2d_forward(const Tensor3& x, const LayerSpec& layer, const ConvParams& params);

/// Returns dL/dx and accumulates dL/dweight, dL/dbias into `grads`.
Tensor3 conv2d_backward(const Tensor3& x, const LayerSpec& layer, const ConvParams& params,
                        const Tensor3& grad_out, ConvParams& grads);

// ---- batch normalisation --------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct BatchNormCache {
  std::vector<double> mean, var;  // per channel, over batch x width x height
  Batch normalized;               // x_hat
};

/// Training-mode batch normalisation with batch statistics.
Batch batchnorm_forward_train(const Batch& x, const std::vector<double>& gamma,
                              const std::vector<double>& beta, BatchNormCache& cache);

/// Inference-mode batch normalisation with running statistics.
Tensor3 batchnorm_forward_eval(const Tensor3& x, const std::vector<double>& gamma,
                               const std::vector<double>& beta,
                               const std::vector<double>& running_mean,
                               const std::vector<double>& running_var);

Batch batchnorm_backward(const BatchNormCache& cache, const std::vector<double>& gamma,
                         const Batch& grad_out, std::vector<double>& grad_gamma,
                         std::vector<double>& grad_beta);

/// running <- momentum * running + (1 - momentum) * batch.
void update_running_stats(const BatchNormCache& cache, std::vector<double>& running_mean,
                          std::vector<double>& running_var,
                          double momentum = kBatchNormMomentum);

// ---- element-wise activations --------------------------------------------

double relu(double x);
double sigmoid(double x);

Tensor3 activate(const Tensor3& x, Activation act);
/// Gradient through the activation, given its output y and dL/dy.
Tensor3 activate_backward(const Tensor3& x, const Tensor3& y, const Tensor3& grad_out,
                          Activation act);

// ---- adaptive clustering --------------------------------------------------

/// Pools the channel dimension: Q x I x c -> Q x I.
Eigen::MatrixXd pool_channels(const Tensor3& x, PoolKind kind);
/// Scatters dL/dpooled back onto the input channels.
Tensor3 pool_channels_backward(const Tensor3& x, PoolKind kind, const Eigen::MatrixXd& grad_pooled);

/// Threshold matrix T = sigmoid(w * POOL(x) + b) with a shared 1x1 weight.
Eigen::MatrixXd spatial_attention(const Tensor3& csi, const ConvParams& attention, PoolKind kind);

/// 1 / (1 + exp(-k (pv - t))).
double diff_threshold(double pv, double t, double k);

struct ClusterMatrix {
  Eigen::MatrixXd soft;  // entries in [0, 1]
  Eigen::MatrixXd hard() const;  // 1 where soft >= 0.5, else 0
};

/// Entry-wise diff_threshold of the pooled beamformer against T.
ClusterMatrix cluster_matrix(const Tensor3& v_r, const Eigen::MatrixXd& thresholds, double k,
                             PoolKind kind);

/// Multiplies every channel of block (q, i) by c(q, i).
Tensor3 sparsify(const Tensor3& v_r, const Eigen::MatrixXd& c);

/// v[q, i, m] = x[q, i, m] + j x[q, i, M + m]. Throws ShapeError for odd channel counts.
CTensor to_complex(const Tensor3& x);
/// Inverse of to_complex; also maps complex gradients onto the real layout.
Tensor3 to_real(const CTensor& v);

}  // namespace rcf::nn
