#include "robustcf/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace rcf::nn {

namespace {

void require_valid(const NetworkSpec& spec, std::size_t Q, std::size_t I, std::size_t M) {
  if (auto v = validate_architecture(spec, static_cast<int>(Q), static_cast<int>(I),
                                     static_cast<int>(M)))
    throw std::invalid_argument("invalid architecture: " + v->message);
}

int layer_input_channels(const NetworkSpec& spec, std::size_t l, int M) {
  return l == 0 ? M : spec.layers[l - 1].out_channels;
}

void glorot(ConvParams& c, Rng& rng) {
  const double fan_in = static_cast<double>(c.in) * c.kw * c.kh;
  const double fan_out = static_cast<double>(c.out) * c.kw * c.kh;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& w : c.weight) w = a * u(rng);
}

}  // namespace

NetParams zero_params(const NetworkSpec& spec, int M) {
  NetParams p;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ls = spec.layers[l];
    p.conv.emplace_back(ls.out_channels, layer_input_channels(spec, l, M), ls.kernel_w,
                        ls.kernel_h);
    const auto C = static_cast<std::size_t>(ls.out_channels);
    p.bn_gamma.emplace_back(C, 0.0);
    p.bn_beta.emplace_back(C, 0.0);
    p.running_mean.emplace_back(C, 0.0);
    p.running_var.emplace_back(C, 1.0);
  }
  p.identity = ConvParams(spec.identity_map.out_channels, M, 1, 1);
  p.attention = ConvParams(1, 1, 1, 1);
  return p;
}

NetParams init_params(const NetworkSpec& spec, int M, Rng& rng) {
  NetParams p = zero_params(spec, M);
  for (std::size_t l = 0; l < p.conv.size(); ++l) {
    glorot(p.conv[l], rng);
    std::fill(p.bn_gamma[l].begin(), p.bn_gamma[l].end(), 1.0);
  }
  glorot(p.identity, rng);
  glorot(p.attention, rng);
  return p;
}

void for_each_trainable(NetParams& p,
                        const std::function<void(const std::string&, std::vector<double>&)>& fn) {
  for (std::size_t l = 0; l < p.conv.size(); ++l) {
    const std::string tag = "layer" + std::to_string(l);
    fn(tag + ".weight", p.conv[l].weight);
    fn(tag + ".bias", p.conv[l].bias);
    fn(tag + ".bn_gamma", p.bn_gamma[l]);
    fn(tag + ".bn_beta", p.bn_beta[l]);
  }
  fn("identity.weight", p.identity.weight);
  fn("identity.bias", p.identity.bias);
  fn("attention.weight", p.attention.weight);
  fn("attention.bias", p.attention.bias);
}

void for_each_trainable(const NetParams& p,
                        const std::function<void(const std::string&, const std::vector<double>&)>& fn) {
  for_each_trainable(const_cast<NetParams&>(p),
                     [&](const std::string& n, std::vector<double>& v) { fn(n, v); });
}

std::size_t trainable_count(const NetParams& p) {
  std::size_t n = 0;
  for_each_trainable(p, [&](const std::string&, const std::vector<double>& v) { n += v.size(); });
  return n;
}

std::vector<CTensor> ForwardTrace::beamformers() const {
  std::vector<CTensor> out;
  out.reserve(samples.size());
  for (const SampleTrace& s : samples) out.push_back(s.beamformer);
  return out;
}

ForwardTrace forward_batch(const std::vector<CTensor>& est_h, const NetworkSpec& spec,
                           const NetParams& params, const ForwardOptions& opt) {
  if (est_h.empty()) throw std::invalid_argument("forward_batch: empty batch");
  const CTensor& first = est_h.front();
  for (const CTensor& h : est_h) require_same_shape(first, h, "forward_batch");
  const std::size_t M = first.antennas();
  require_valid(spec, first.aps(), first.users(), M);
  if (params.conv.size() != spec.layers.size())
    throw ShapeError("forward_batch: parameter count does not match the spec");

  ForwardTrace tr;
  tr.mode = opt.mode;
  tr.samples.resize(est_h.size());
  Batch x(est_h.size());
  for (std::size_t n = 0; n < est_h.size(); ++n) {
    tr.samples[n].csi = csi_conversion(est_h[n]);
    if (spec.normalize_csi) {
      Tensor3& c = tr.samples[n].csi;
      const double peak = *std::max_element(c.data().begin(), c.data().end());
      if (peak > 0.0)
        for (double& v : c.data()) v /= peak;
    }
    x[n] = tr.samples[n].csi;
  }

  tr.layers.resize(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    LayerTrace& lt = tr.layers[l];
    const LayerSpec& ls = spec.layers[l];
    lt.input = x;
    lt.pre_bn.resize(x.size());
    for (std::size_t n = 0; n < x.size(); ++n)
      lt.pre_bn[n] = conv2d_forward(x[n], ls, params.conv[l]);
    if (opt.mode == Mode::Train) {
      lt.pre_act = batchnorm_forward_train(lt.pre_bn, params.bn_gamma[l], params.bn_beta[l], lt.bn);
    } else {
      lt.pre_act.resize(x.size());
      for (std::size_t n = 0; n < x.size(); ++n)
        lt.pre_act[n] = batchnorm_forward_eval(lt.pre_bn[n], params.bn_gamma[l], params.bn_beta[l],
                                               params.running_mean[l], params.running_var[l]);
    }
    lt.output.resize(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) lt.output[n] = activate(lt.pre_act[n], ls.activation);
    x = lt.output;
  }

  for (std::size_t n = 0; n < est_h.size(); ++n) {
    SampleTrace& s = tr.samples[n];
    s.identity_out = conv2d_forward(s.csi, spec.identity_map, params.identity);
    Tensor3 sum = x[n];
    sum += s.identity_out;
    s.v_r = activate(sum, Activation::Tanh);
    s.thresholds = spatial_attention(s.csi, params.attention, spec.pool);
    s.cluster = cluster_matrix(s.v_r, s.thresholds, spec.amplification, spec.pool);
    s.gate = opt.mode == Mode::Train ? s.cluster.soft : s.cluster.hard();
    s.v_spa = sparsify(s.v_r, s.gate);
    s.unprojected = to_complex(s.v_spa);
    s.beamformer = power_project(s.unprojected, opt.max_power, opt.rule);
  }
  return tr;
}

CTensor forward(const CTensor& est_h, const NetworkSpec& spec, const NetParams& params,
                const ForwardOptions& opt, ClusterMatrix* cluster) {
  ForwardTrace tr = forward_batch({est_h}, spec, params, opt);
  if (cluster) *cluster = tr.samples.front().cluster;
  return tr.samples.front().beamformer;
}

NetParams backward_batch(const ForwardTrace& trace, const NetworkSpec& spec, const NetParams& params,
                         const std::vector<CTensor>& grad_v, const ForwardOptions& opt) {
  if (grad_v.size() != trace.samples.size())
    throw ShapeError("backward_batch: gradient count does not match the batch");
  if (trace.mode != Mode::Train)
    throw std::logic_error("backward_batch: requires a training-mode trace");
  const int M = params.identity.in;
  NetParams g = zero_params(spec, M);
  for (auto& rv : g.running_var) std::fill(rv.begin(), rv.end(), 0.0);

  const std::size_t N = trace.samples.size();
  Batch grad_main(N);
  for (std::size_t n = 0; n < N; ++n) {
    const SampleTrace& s = trace.samples[n];
    const CTensor g_unproj = power_project_backward(s.unprojected, grad_v[n], opt.max_power, opt.rule);
    const Tensor3 g_spa = to_real(g_unproj);

    // v_spa = v_r * c with c = sigmoid(k (pv - t)), t = sigmoid(w pool(csi) + b)
    Tensor3 g_vr = sparsify(g_spa, s.gate);
    const std::size_t Q = s.v_r.width(), I = s.v_r.height(), C = s.v_r.channels();
    Eigen::MatrixXd g_pv(Q, I);
    const Eigen::MatrixXd pooled_csi = pool_channels(s.csi, spec.pool);
    for (std::size_t q = 0; q < Q; ++q)
      for (std::size_t i = 0; i < I; ++i) {
        double g_c = 0.0;
        for (std::size_t ch = 0; ch < C; ++ch) g_c += g_spa(q, i, ch) * s.v_r(q, i, ch);
        const double c = s.cluster.soft(q, i);
        const double slope = spec.amplification * c * (1.0 - c);
        g_pv(q, i) = g_c * slope;
        const double t = s.thresholds(q, i);
        const double g_pre = -g_c * slope * t * (1.0 - t);
        g.attention.weight[0] += g_pre * pooled_csi(q, i);
        g.attention.bias[0] += g_pre;
      }
    g_vr += pool_channels_backward(s.v_r, spec.pool, g_pv);

    Tensor3 g_sum = g_vr;
    for (std::size_t k = 0; k < g_sum.size(); ++k) g_sum[k] *= 1.0 - s.v_r[k] * s.v_r[k];
    conv2d_backward(s.csi, spec.identity_map, params.identity, g_sum, g.identity);
    grad_main[n] = std::move(g_sum);
  }

  for (std::size_t l = spec.layers.size(); l-- > 0;) {
    const LayerTrace& lt = trace.layers[l];
    const LayerSpec& ls = spec.layers[l];
    Batch g_pre_act(N);
    for (std::size_t n = 0; n < N; ++n)
      g_pre_act[n] = activate_backward(lt.pre_act[n], lt.output[n], grad_main[n], ls.activation);
    const Batch g_pre_bn = batchnorm_backward(lt.bn, params.bn_gamma[l], g_pre_act, g.bn_gamma[l],
                                              g.bn_beta[l]);
    for (std::size_t n = 0; n < N; ++n)
      grad_main[n] = conv2d_backward(lt.input[n], ls, params.conv[l], g_pre_bn[n], g.conv[l]);
  }
  return g;
}

void update_running_stats(NetParams& params, const ForwardTrace& trace, double momentum) {
  if (trace.mode != Mode::Train) return;
  for (std::size_t l = 0; l < trace.layers.size(); ++l)
    update_running_stats(trace.layers[l].bn, params.running_mean[l], params.running_var[l], momentum);
}

std::vector<std::uint8_t> branch_signature(const ForwardTrace& trace, const NetworkSpec& spec,
                                           const ForwardOptions& opt) {
  std::vector<std::uint8_t> sig;
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    if (spec.layers[l].activation != Activation::Relu) continue;
    for (const Tensor3& t : trace.layers[l].pre_act)
      for (double v : t.data()) sig.push_back(v > 0.0);
  }
  for (const SampleTrace& s : trace.samples) {
    if (spec.pool == PoolKind::Max) {
      for (const Tensor3* t : {&s.csi, &s.v_r})
        for (std::size_t q = 0; q < t->width(); ++q)
          for (std::size_t i = 0; i < t->height(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < t->channels(); ++c)
              if ((*t)(q, i, c) > (*t)(q, i, best)) best = c;
            sig.push_back(static_cast<std::uint8_t>(best));
          }
    }
    if (trace.mode == Mode::Eval)
      for (double c : s.gate.reshaped()) sig.push_back(c > 0.5);
    for (std::size_t q = 0; q < s.unprojected.aps(); ++q)
      sig.push_back(s.unprojected.ap_power(q) > opt.max_power);
  }
  return sig;
}

}  // namespace rcf::nn
