#include "robustcf/nn/architecture.hpp"

#include <stdexcept>

namespace rcf::nn {

std::string to_string(Violation v) {
  switch (v) {
    case Violation::EmptyNetwork: return "empty-network";
    case Violation::NonPositiveParameter: return "non-positive-parameter";
    case Violation::NonIntegerPadding: return "non-integer-padding";
    case Violation::PaddingMismatch: return "padding-mismatch";
    case Violation::ShapeNotPreserved: return "shape-not-preserved";
    case Violation::FinalChannelsNot2M: return "final-channels-not-2M";
    case Violation::FinalActivationNotTanh: return "final-activation-not-tanh";
    case Violation::BadIdentityMap: return "bad-identity-map";
    case Violation::BadAttention: return "bad-attention";
    case Violation::NonPositiveAmplification: return "non-positive-amplification";
  }
  return "unknown";
}

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }
std::string to_string(PoolKind p) { return p == PoolKind::Mean ? "mean" : "max"; }

std::optional<int> conv_output_dim(int in, int kernel, int pad, int stride) {
  if (in < 1 || kernel < 1 || pad < 0 || stride < 1) return std::nullopt;
  const int span = in + 2 * pad - kernel;
  if (span < 0 || span % stride != 0) return std::nullopt;
  return span / stride + 1;
}

std::optional<int> shape_preserving_padding(int in, int kernel, int stride) {
  if (in < 1 || kernel < 1 || stride < 1) return std::nullopt;
  const int twice = stride == 1 ? kernel - 1 : in * stride - in - stride + kernel;
  if (twice < 0 || twice % 2 != 0) return std::nullopt;
  return twice / 2;
}

namespace {

std::optional<ArchitectureViolation> check_dim(int layer, const char* axis, int in, int kernel,
                                               int pad, int stride) {
  auto fail = [&](Violation v, const std::string& what) {
    return ArchitectureViolation{v, layer,
                                 "layer " + std::to_string(layer) + " (" + axis + "): " + what};
  };
  const std::optional<int> need = shape_preserving_padding(in, kernel, stride);
  if (!need)
    return fail(Violation::NonIntegerPadding,
                "kernel " + std::to_string(kernel) + " with stride " + std::to_string(stride) +
                    " needs a non-integer padding");
  if (*need != pad)
    return fail(Violation::PaddingMismatch, "padding " + std::to_string(pad) + ", required " +
                                                std::to_string(*need));
  if (conv_output_dim(in, kernel, pad, stride) != in)
    return fail(Violation::ShapeNotPreserved, "output size differs from input");
  return std::nullopt;
}

bool is_pointwise(const LayerSpec& l) {
  return l.kernel_w == 1 && l.kernel_h == 1 && l.pad_w == 0 && l.pad_h == 0 && l.stride_w == 1 &&
         l.stride_h == 1;
}

}  // namespace

std::optional<ArchitectureViolation> validate_architecture(const NetworkSpec& spec, int Q, int I,
                                                           int M) {
  if (spec.layers.empty())
    return ArchitectureViolation{Violation::EmptyNetwork, -1, "network has no layers"};
  for (std::size_t idx = 0; idx < spec.layers.size(); ++idx) {
    const LayerSpec& l = spec.layers[idx];
    const int li = static_cast<int>(idx);
    if (l.kernel_w < 1 || l.kernel_h < 1 || l.stride_w < 1 || l.stride_h < 1 ||
        l.out_channels < 1 || l.pad_w < 0 || l.pad_h < 0)
      return ArchitectureViolation{Violation::NonPositiveParameter, li,
                                   "layer " + std::to_string(li) + ": non-positive parameter"};
    if (auto v = check_dim(li, "width", Q, l.kernel_w, l.pad_w, l.stride_w)) return v;
    if (auto v = check_dim(li, "height", I, l.kernel_h, l.pad_h, l.stride_h)) return v;
  }
  const LayerSpec& last = spec.layers.back();
  const int li = static_cast<int>(spec.layers.size()) - 1;
  if (last.out_channels != 2 * M)
    return ArchitectureViolation{Violation::FinalChannelsNot2M, li,
                                 "last layer has " + std::to_string(last.out_channels) +
                                     " channels, expected " + std::to_string(2 * M)};
  if (last.activation != Activation::Tanh)
    return ArchitectureViolation{Violation::FinalActivationNotTanh, li,
                                 "last layer must use tanh"};
  if (!is_pointwise(spec.identity_map) || spec.identity_map.out_channels != 2 * M)
    return ArchitectureViolation{Violation::BadIdentityMap, -1,
                                 "identity map must be a 1x1 convolution with 2M outputs"};
  if (!is_pointwise(spec.attention) || spec.attention.out_channels != 1)
    return ArchitectureViolation{Violation::BadAttention, -1,
                                 "attention must be a 1x1 convolution with one output"};
  if (!(spec.amplification > 0.0))
    return ArchitectureViolation{Violation::NonPositiveAmplification, -1,
                                 "amplification k must be positive"};
  return std::nullopt;
}

LayerSpec make_layer(int kernel_w, int kernel_h, int stride_w, int stride_h, int out_channels,
                     Activation act, int Q, int I) {
  const auto pw = shape_preserving_padding(Q, kernel_w, stride_w);
  const auto ph = shape_preserving_padding(I, kernel_h, stride_h);
  if (!pw || !ph) throw std::invalid_argument("make_layer: no integral shape-preserving padding");
  LayerSpec l;
  l.kernel_w = kernel_w;
  l.kernel_h = kernel_h;
  l.pad_w = *pw;
  l.pad_h = *ph;
  l.stride_w = stride_w;
  l.stride_h = stride_h;
  l.out_channels = out_channels;
  l.activation = act;
  return l;
}

NetworkSpec default_network(int Q, int I, int M, int num_layers, int channels, int kernel,
                            double amplification) {
  if (num_layers < 1) throw std::invalid_argument("default_network: need at least one layer");
  NetworkSpec spec;
  for (int l = 0; l < num_layers; ++l) {
    const bool last = l + 1 == num_layers;
    spec.layers.push_back(make_layer(kernel, kernel, 1, 1, last ? 2 * M : channels,
                                     last ? Activation::Tanh : Activation::Relu, Q, I));
  }
  spec.identity_map = make_layer(1, 1, 1, 1, 2 * M, Activation::Tanh, Q, I);
  spec.attention = make_layer(1, 1, 1, 1, 1, Activation::Tanh, Q, I);
  spec.amplification = amplification;
  return spec;
}

}  // namespace rcf::nn
