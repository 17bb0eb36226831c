#pragma once

// Network description and the shape rules that keep every convolution unit
// at Q x I spatial size (so the residual output is Q x I x 2M).

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace rcf::nn {

enum class Activation { Relu, Tanh };
enum class PoolKind { Mean, Max };

struct LayerSpec {
  int kernel_w = 1, kernel_h = 1;
  int pad_w = 0, pad_h = 0;
  int stride_w = 1, stride_h = 1;
  int out_channels = 1;
  Activation activation = Activation::Relu;

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;  // main branch; last one has 2M channels, tanh
  LayerSpec identity_map;         // 1x1 conv, M -> 2M channels
  LayerSpec attention;            // 1x1 conv, 1 -> 1 channel
  double amplification = 50.0;    // k of the differentiable threshold
  PoolKind pool = PoolKind::Mean;
  bool normalize_csi = true;      // divide the CSI tensor by its largest entry per sample

  bool operator==(const NetworkSpec&) const = default;
};

enum class Violation {
  EmptyNetwork,
  NonPositiveParameter,
  NonIntegerPadding,
  PaddingMismatch,
  ShapeNotPreserved,
  FinalChannelsNot2M,
  FinalActivationNotTanh,
  BadIdentityMap,
  BadAttention,
  NonPositiveAmplification,
};

struct ArchitectureViolation {
  Violation condition;
  int layer;  // index into layers; -1 for identity map, attention or global checks
  std::string message;
};

std::string to_string(Violation v);
std::string to_string(Activation a);
std::string to_string(PoolKind p);

/// Output length of a convolution, (in + 2p - k) / s + 1, or nullopt when the
/// division is not exact or the result is not positive.
std::optional<int> conv_output_dim(int in, int kernel, int pad, int stride);

/// Padding that preserves `in`: (k - 1) / 2 for s = 1, (in s - in - s + k) / 2
/// for s > 1. nullopt when the value is not a non-negative integer.
std::optional<int> shape_preserving_padding(int in, int kernel, int stride);

/// Accepts iff every layer keeps the Q x I spatial shape, the last layer emits
/// 2M channels with tanh, and the identity/attention maps are well formed.
/// Returns the first violated condition.
std::optional<ArchitectureViolation> validate_architecture(const NetworkSpec& spec, int Q, int I,
                                                           int M);

/// Layer with shape-preserving padding; throws std::invalid_argument when no
/// integral padding exists.
LayerSpec make_layer(int kernel_w, int kernel_h, int stride_w, int stride_h, int out_channels,
                     Activation act, int Q, int I);

/// L units of kernel k x k, stride 1, `channels` hidden channels, last one 2M.
NetworkSpec default_network(int Q, int I, int M, int num_layers = 5, int channels = 8,
                            int kernel = 5, double amplification = 50.0);

}  // namespace rcf::nn
