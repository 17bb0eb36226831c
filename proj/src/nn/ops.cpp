#include "robustcf/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcf::nn {

ConvParams::ConvParams(int out_ch, int in_ch, int kernel_w, int kernel_h)
    : out(out_ch), in(in_ch), kw(kernel_w), kh(kernel_h),
      weight(static_cast<std::size_t>(out_ch) * in_ch * kernel_w * kernel_h, 0.0),
      bias(static_cast<std::size_t>(out_ch), 0.0) {}

Tensor3 csi_conversion(const CTensor& est_h) {
  Tensor3 x(est_h.aps(), est_h.users(), est_h.antennas());
  for (std::size_t k = 0; k < est_h.size(); ++k) x[k] = std::abs(est_h.data()[k]);
  return x;
}

namespace {

void check_conv(const Tensor3& x, const LayerSpec& layer, const ConvParams& p) {
  if (static_cast<int>(x.channels()) != p.in || p.out != layer.out_channels ||
      p.kw != layer.kernel_w || p.kh != layer.kernel_h)
    throw ShapeError("conv2d: parameter shape does not match the layer or input");
}

struct OutDims {
  int w, h;
};

OutDims conv_dims(const Tensor3& x, const LayerSpec& l) {
  const auto ow = conv_output_dim(static_cast<int>(x.width()), l.kernel_w, l.pad_w, l.stride_w);
  const auto oh = conv_output_dim(static_cast<int>(x.height()), l.kernel_h, l.pad_h, l.stride_h);
  if (!ow || !oh) throw ShapeError("conv2d: layer does not tile the input");
  return {*ow, *oh};
}

}  // namespace

Tensor3 conv2d_forward(const Tensor3& x, const LayerSpec& layer, const ConvParams& p) {
  check_conv(x, layer, p);
  const OutDims d = conv_dims(x, layer);
  const int W = static_cast<int>(x.width()), H = static_cast<int>(x.height());
  Tensor3 y(d.w, d.h, p.out);
  for (int ox = 0; ox < d.w; ++ox) {
    for (int oy = 0; oy < d.h; ++oy) {
      for (int o = 0; o < p.out; ++o) {
        double acc = p.bias[o];
        for (int u = 0; u < p.kw; ++u) {
          const int ix = ox * layer.stride_w + u - layer.pad_w;
          if (ix < 0 || ix >= W) continue;
          for (int v = 0; v < p.kh; ++v) {
            const int iy = oy * layer.stride_h + v - layer.pad_h;
            if (iy < 0 || iy >= H) continue;
            for (int c = 0; c < p.in; ++c) acc += p.w(o, c, u, v) * x(ix, iy, c);
          }
        }
        y(ox, oy, o) = acc;
      }
    }
  }
  return y;
}

Tensor3 conv2d_backward(const Tensor3& x, const LayerSpec& layer, const ConvParams& p,
                        const Tensor3& grad_out, ConvParams& grads) {
  check_conv(x, layer, p);
  const OutDims d = conv_dims(x, layer);
  if (static_cast<int>(grad_out.width()) != d.w || static_cast<int>(grad_out.height()) != d.h ||
      static_cast<int>(grad_out.channels()) != p.out)
    throw ShapeError("conv2d_backward: gradient shape mismatch");
  if (grads.weight.size() != p.weight.size()) grads = ConvParams(p.out, p.in, p.kw, p.kh);
  const int W = static_cast<int>(x.width()), H = static_cast<int>(x.height());
  Tensor3 gx(x.width(), x.height(), x.channels());
  for (int ox = 0; ox < d.w; ++ox) {
    for (int oy = 0; oy < d.h; ++oy) {
      for (int o = 0; o < p.out; ++o) {
        const double g = grad_out(ox, oy, o);
        grads.bias[o] += g;
        for (int u = 0; u < p.kw; ++u) {
          const int ix = ox * layer.stride_w + u - layer.pad_w;
          if (ix < 0 || ix >= W) continue;
          for (int v = 0; v < p.kh; ++v) {
            const int iy = oy * layer.stride_h + v - layer.pad_h;
            if (iy < 0 || iy >= H) continue;
            for (int c = 0; c < p.in; ++c) {
              grads.w(o, c, u, v) += g * x(ix, iy, c);
              gx(ix, iy, c) += g * p.w(o, c, u, v);
            }
          }
        }
      }
    }
  }
  return gx;
}

Batch batchnorm_forward_train(const Batch& x, const std::vector<double>& gamma,
                              const std::vector<double>& beta, BatchNormCache& cache) {
  if (x.empty()) throw std::invalid_argument("batchnorm: empty batch");
  const std::size_t C = x.front().channels();
  if (gamma.size() != C || beta.size() != C) throw ShapeError("batchnorm: parameter size");
  const std::size_t per = x.front().width() * x.front().height();
  const double count = static_cast<double>(per * x.size());

  cache.mean.assign(C, 0.0);
  cache.var.assign(C, 0.0);
  for (const Tensor3& t : x) {
    if (!t.same_shape(x.front())) throw ShapeError("batchnorm: ragged batch");
    for (std::size_t k = 0; k < t.size(); ++k) cache.mean[k % C] += t[k];
  }
  for (double& m : cache.mean) m /= count;
  for (const Tensor3& t : x)
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double d = t[k] - cache.mean[k % C];
      cache.var[k % C] += d * d;
    }
  for (double& v : cache.var) v /= count;

  cache.normalized = x;
  Batch y = x;
  for (std::size_t n = 0; n < x.size(); ++n) {
    for (std::size_t k = 0; k < x[n].size(); ++k) {
      const std::size_t c = k % C;
      const double xh = (x[n][k] - cache.mean[c]) / std::sqrt(cache.var[c] + kBatchNormEps);
      cache.normalized[n][k] = xh;
      y[n][k] = gamma[c] * xh + beta[c];
    }
  }
  return y;
}

Tensor3 batchnorm_forward_eval(const Tensor3& x, const std::vector<double>& gamma,
                               const std::vector<double>& beta,
                               const std::vector<double>& running_mean,
                               const std::vector<double>& running_var) {
  const std::size_t C = x.channels();
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C || running_var.size() != C)
    throw ShapeError("batchnorm: parameter size");
  Tensor3 y = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t c = k % C;
    y[k] = gamma[c] * (x[k] - running_mean[c]) / std::sqrt(running_var[c] + kBatchNormEps) + beta[c];
  }
  return y;
}

Batch batchnorm_backward(const BatchNormCache& cache, const std::vector<double>& gamma,
                         const Batch& grad_out, std::vector<double>& grad_gamma,
                         std::vector<double>& grad_beta) {
  const std::size_t C = gamma.size();
  if (grad_gamma.size() != C) grad_gamma.assign(C, 0.0);
  if (grad_beta.size() != C) grad_beta.assign(C, 0.0);
  const std::size_t per = grad_out.front().size() / C;
  const double count = static_cast<double>(per * grad_out.size());

  std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
  for (std::size_t n = 0; n < grad_out.size(); ++n)
    for (std::size_t k = 0; k < grad_out[n].size(); ++k) {
      const std::size_t c = k % C;
      sum_g[c] += grad_out[n][k];
      sum_gx[c] += grad_out[n][k] * cache.normalized[n][k];
    }
  for (std::size_t c = 0; c < C; ++c) {
    grad_beta[c] += sum_g[c];
    grad_gamma[c] += sum_gx[c];
  }
  // dx = gamma / sqrt(var + eps) * (g - mean(g) - x_hat * mean(g * x_hat))
  Batch gx = grad_out;
  for (std::size_t n = 0; n < grad_out.size(); ++n)
    for (std::size_t k = 0; k < grad_out[n].size(); ++k) {
      const std::size_t c = k % C;
      const double inv_std = 1.0 / std::sqrt(cache.var[c] + kBatchNormEps);
      gx[n][k] = gamma[c] * inv_std *
                 (grad_out[n][k] - sum_g[c] / count - cache.normalized[n][k] * sum_gx[c] / count);
    }
  return gx;
}

void update_running_stats(const BatchNormCache& cache, std::vector<double>& running_mean,
                          std::vector<double>& running_var, double momentum) {
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * cache.mean[c];
    running_var[c] = momentum * running_var[c] + (1.0 - momentum) * cache.var[c];
  }
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor3 activate(const Tensor3& x, Activation act) {
  Tensor3 y = x;
  for (double& v : y.data()) v = act == Activation::Relu ? relu(v) : std::tanh(v);
  return y;
}

Tensor3 activate_backward(const Tensor3& x, const Tensor3& y, const Tensor3& grad_out,
                          Activation act) {
  Tensor3 g = grad_out;
  for (std::size_t k = 0; k < g.size(); ++k)
    g[k] *= act == Activation::Relu ? (x[k] > 0.0 ? 1.0 : 0.0) : 1.0 - y[k] * y[k];
  return g;
}

Eigen::MatrixXd pool_channels(const Tensor3& x, PoolKind kind) {
  Eigen::MatrixXd out(x.width(), x.height());
  for (std::size_t q = 0; q < x.width(); ++q)
    for (std::size_t i = 0; i < x.height(); ++i) {
      double acc = kind == PoolKind::Mean ? 0.0 : x(q, i, 0);
      for (std::size_t c = 0; c < x.channels(); ++c)
        acc = kind == PoolKind::Mean ? acc + x(q, i, c) : std::max(acc, x(q, i, c));
      out(q, i) = kind == PoolKind::Mean ? acc / static_cast<double>(x.channels()) : acc;
    }
  return out;
}

Tensor3 pool_channels_backward(const Tensor3& x, PoolKind kind, const Eigen::MatrixXd& grad_pooled) {
  Tensor3 g(x.width(), x.height(), x.channels());
  for (std::size_t q = 0; q < x.width(); ++q)
    for (std::size_t i = 0; i < x.height(); ++i) {
      if (kind == PoolKind::Mean) {
        for (std::size_t c = 0; c < x.channels(); ++c)
          g(q, i, c) = grad_pooled(q, i) / static_cast<double>(x.channels());
      } else {
        std::size_t best = 0;
        for (std::size_t c = 1; c < x.channels(); ++c)
          if (x(q, i, c) > x(q, i, best)) best = c;
        g(q, i, best) = grad_pooled(q, i);
      }
    }
  return g;
}

Eigen::MatrixXd spatial_attention(const Tensor3& csi, const ConvParams& attention, PoolKind kind) {
  if (attention.in != 1 || attention.out != 1 || attention.kw != 1 || attention.kh != 1)
    throw ShapeError("spatial_attention: expected a 1x1 single-channel convolution");
  const double w = attention.weight[0], b = attention.bias[0];
  return pool_channels(csi, kind).unaryExpr([&](double p) { return sigmoid(w * p + b); });
}

double diff_threshold(double pv, double t, double k) { return sigmoid(k * (pv - t)); }

Eigen::MatrixXd ClusterMatrix::hard() const {
  return soft.unaryExpr([](double c) { return c >= 0.5 ? 1.0 : 0.0; });
}

ClusterMatrix cluster_matrix(const Tensor3& v_r, const Eigen::MatrixXd& thresholds, double k,
                             PoolKind kind) {
  const Eigen::MatrixXd pv = pool_channels(v_r, kind);
  if (pv.rows() != thresholds.rows() || pv.cols() != thresholds.cols())
    throw ShapeError("cluster_matrix: threshold shape mismatch");
  ClusterMatrix c;
  c.soft = pv.binaryExpr(thresholds, [k](double p, double t) { return diff_threshold(p, t, k); });
  return c;
}

Tensor3 sparsify(const Tensor3& v_r, const Eigen::MatrixXd& c) {
  if (static_cast<std::size_t>(c.rows()) != v_r.width() ||
      static_cast<std::size_t>(c.cols()) != v_r.height())
    throw ShapeError("sparsify: cluster matrix shape mismatch");
  Tensor3 out = v_r;
  for (std::size_t q = 0; q < v_r.width(); ++q)
    for (std::size_t i = 0; i < v_r.height(); ++i)
      for (std::size_t ch = 0; ch < v_r.channels(); ++ch) out(q, i, ch) *= c(q, i);
  return out;
}

CTensor to_complex(const Tensor3& x) {
  if (x.channels() % 2 != 0) throw ShapeError("to_complex: channel count must be even");
  const std::size_t M = x.channels() / 2;
  CTensor v(x.width(), x.height(), M);
  for (std::size_t q = 0; q < x.width(); ++q)
    for (std::size_t i = 0; i < x.height(); ++i)
      for (std::size_t m = 0; m < M; ++m) v(q, i, m) = {x(q, i, m), x(q, i, M + m)};
  return v;
}

Tensor3 to_real(const CTensor& v) {
  const std::size_t M = v.antennas();
  Tensor3 x(v.aps(), v.users(), 2 * M);
  for (std::size_t q = 0; q < v.aps(); ++q)
    for (std::size_t i = 0; i < v.users(); ++i)
      for (std::size_t m = 0; m < M; ++m) {
        x(q, i, m) = v(q, i, m).real();
        x(q, i, M + m) = v(q, i, m).imag();
      }
  return x;
}

}  // namespace rcf::nn
