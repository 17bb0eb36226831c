#include <cmath>
#include <functional>

#include "doctest.h"
#include "oracles.hpp"
#include "robustcf/metrics.hpp"
#include "robustcf/nn/network.hpp"
#include "robustcf/nn/ops.hpp"

using namespace rcf;
using namespace rcf::nn;

namespace {

Tensor3 random_t3(std::size_t w, std::size_t h, std::size_t c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor3 t(w, h, c);
  for (double& x : t.data()) x = g(rng);
  return t;
}

void randomize(std::vector<double>& v, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  for (double& x : v) x = g(rng);
}

double dot(const Tensor3& a, const Tensor3& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Central difference of f with respect to x[k].
double central(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double keep = x;
  x = keep + h;
  const double fp = f();
  x = keep - h;
  const double fm = f();
  x = keep;
  return (fp - fm) / (2 * h);
}

bool close(double a, double n, double tol = 1e-4, double floor = 1e-6) {
  return std::abs(a - n) <= tol * std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

TEST_CASE("CSI conversion takes moduli") {
  CTensor h(1, 1, 1);
  h(0, 0, 0) = {-3.0, 4.0};
  CHECK(csi_conversion(h)(0, 0, 0) == 5.0);
  const Tensor3 z = csi_conversion(CTensor(2, 3, 2));
  for (double x : z.data()) CHECK(x == 0.0);
  const Tensor3 big = csi_conversion(CTensor(16, 16, 4));
  CHECK(big.width() == 16);
  CHECK(big.height() == 16);
  CHECK(big.channels() == 4);
}

TEST_CASE("padding and output-size rules") {
  CHECK(shape_preserving_padding(16, 5, 1) == 2);
  CHECK_FALSE(shape_preserving_padding(16, 4, 1).has_value());
  CHECK(shape_preserving_padding(16, 4, 2) == 9);
  CHECK(conv_output_dim(16, 4, 9, 2) == 16);
  CHECK(conv_output_dim(5, 3, 1, 1) == 5);
  CHECK_FALSE(conv_output_dim(5, 3, 0, 2).has_value() == false);
  CHECK_FALSE(conv_output_dim(4, 3, 0, 2).has_value());
}

TEST_CASE("architecture examples") {
  NetworkSpec ok = default_network(16, 16, 4, 5, 8, 5);
  CHECK_FALSE(validate_architecture(ok, 16, 16, 4).has_value());
  CHECK(ok.layers[0].pad_w == 2);

  NetworkSpec even = ok;
  even.layers[1].kernel_w = 4;
  even.layers[1].pad_w = 1;
  auto v = validate_architecture(even, 16, 16, 4);
  REQUIRE(v.has_value());
  CHECK(v->condition == Violation::NonIntegerPadding);
  CHECK(v->layer == 1);

  NetworkSpec strided = ok;
  strided.layers[0] = make_layer(4, 5, 2, 1, 8, Activation::Relu, 16, 16);
  CHECK(strided.layers[0].pad_w == 9);
  CHECK_FALSE(validate_architecture(strided, 16, 16, 4).has_value());
  CHECK_THROWS_AS(make_layer(4, 4, 1, 1, 8, Activation::Relu, 16, 16), std::invalid_argument);
}

TEST_CASE("invalid specs report the violated condition") {
  const int Q = 4, I = 5, M = 2;
  const NetworkSpec base = default_network(Q, I, M, 3, 6, 3);
  REQUIRE_FALSE(validate_architecture(base, Q, I, M).has_value());

  struct Case {
    std::function<void(NetworkSpec&)> edit;
    Violation want;
    int layer;
  };
  const std::vector<Case> cases = {
      {[](NetworkSpec& s) { s.layers.clear(); }, Violation::EmptyNetwork, -1},
      {[](NetworkSpec& s) { s.layers[0].kernel_w = 0; }, Violation::NonPositiveParameter, 0},
      {[](NetworkSpec& s) { s.layers[1].stride_h = 0; }, Violation::NonPositiveParameter, 1},
      {[](NetworkSpec& s) { s.layers[2].out_channels = 0; }, Violation::NonPositiveParameter, 2},
      {[](NetworkSpec& s) { s.layers[0].pad_w = -1; }, Violation::NonPositiveParameter, 0},
      {[](NetworkSpec& s) { s.layers[0].kernel_w = 2; }, Violation::NonIntegerPadding, 0},
      {[](NetworkSpec& s) { s.layers[1].kernel_h = 4; }, Violation::NonIntegerPadding, 1},
      {[](NetworkSpec& s) { s.layers[2].kernel_w = 2, s.layers[2].stride_w = 3; }, Violation::NonIntegerPadding, 2},
      {[](NetworkSpec& s) { s.layers[0].pad_w = 0; }, Violation::PaddingMismatch, 0},
      {[](NetworkSpec& s) { s.layers[1].pad_h = 3; }, Violation::PaddingMismatch, 1},
      {[](NetworkSpec& s) { s.layers[2].kernel_h = 5; }, Violation::PaddingMismatch, 2},
      {[](NetworkSpec& s) { s.layers[0].stride_w = 3; }, Violation::PaddingMismatch, 0},
      {[](NetworkSpec& s) { s.layers[2].out_channels = 3; }, Violation::FinalChannelsNot2M, 2},
      {[](NetworkSpec& s) { s.layers[2].out_channels = 2 * M + 2; }, Violation::FinalChannelsNot2M, 2},
      {[](NetworkSpec& s) { s.layers[2].activation = Activation::Relu; }, Violation::FinalActivationNotTanh, 2},
      {[](NetworkSpec& s) { s.identity_map.out_channels = M; }, Violation::BadIdentityMap, -1},
      {[](NetworkSpec& s) { s.identity_map.kernel_w = 3; }, Violation::BadIdentityMap, -1},
      {[](NetworkSpec& s) { s.attention.out_channels = 2; }, Violation::BadAttention, -1},
      {[](NetworkSpec& s) { s.attention.stride_h = 2; }, Violation::BadAttention, -1},
      {[](NetworkSpec& s) { s.amplification = 0.0; }, Violation::NonPositiveAmplification, -1},
  };
  REQUIRE(cases.size() == 20);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    CAPTURE(c);
    NetworkSpec s = base;
    cases[c].edit(s);
    const auto v = validate_architecture(s, Q, I, M);
    REQUIRE(v.has_value());
    CHECK(v->condition == cases[c].want);
    CHECK(v->layer == cases[c].layer);
    CHECK_FALSE(v->message.empty());
  }
}

TEST_CASE("random valid specs keep the Q x I x 2M shape") {
  Rng rng = make_rng(4);
  std::uniform_int_distribution<int> dim(1, 7), m(1, 3), layers(1, 4), ch(1, 6), k(0, 3), s(1, 2);
  int made = 0;
  while (made < 50) {
    const int Q = dim(rng), I = dim(rng), M = m(rng), L = layers(rng);
    NetworkSpec spec;
    bool ok = true;
    for (int l = 0; l < L && ok; ++l) {
      const int kw = 2 * k(rng) + 1, kh = 2 * k(rng) + 1, sw = s(rng), sh = s(rng);
      const bool last = l + 1 == L;
      try {
        spec.layers.push_back(make_layer(sw == 1 ? kw : kw + 1, sh == 1 ? kh : kh + 1, sw, sh,
                                         last ? 2 * M : ch(rng), last ? Activation::Tanh : Activation::Relu, Q, I));
      } catch (const std::invalid_argument&) {
        ok = false;
      }
    }
    if (!ok) continue;
    spec.identity_map = make_layer(1, 1, 1, 1, 2 * M, Activation::Tanh, Q, I);
    spec.attention = make_layer(1, 1, 1, 1, 1, Activation::Tanh, Q, I);
    REQUIRE_FALSE(validate_architecture(spec, Q, I, M).has_value());
    const NetParams p = init_params(spec, M, rng);
    const auto h = oracle::random_tensor(Q, I, M, rng);
    const ForwardTrace tr = forward_batch({h}, spec, p, {Mode::Eval, 1.0});
    const Tensor3& vr = tr.samples[0].v_r;
    CHECK(vr.width() == static_cast<std::size_t>(Q));
    CHECK(vr.height() == static_cast<std::size_t>(I));
    CHECK(vr.channels() == static_cast<std::size_t>(2 * M));
    CHECK(tr.samples[0].beamformer.same_shape(h));
    ++made;
  }
}

TEST_CASE("convolution hand examples") {
  Rng rng = make_rng(5);
  const Tensor3 x = random_t3(3, 4, 2, rng);
  LayerSpec one = make_layer(1, 1, 1, 1, 2, Activation::Relu, 3, 4);
  ConvParams id(2, 2, 1, 1);
  id.w(0, 0, 0, 0) = 1.0;
  id.w(1, 1, 0, 0) = 1.0;
  CHECK(conv2d_forward(x, one, id) == x);

  const Tensor3 ones(5, 5, 1, 1.0);
  const LayerSpec three = make_layer(3, 3, 1, 1, 1, Activation::Relu, 5, 5);
  ConvParams k3(1, 1, 3, 3);
  std::fill(k3.weight.begin(), k3.weight.end(), 1.0);
  const Tensor3 y = conv2d_forward(ones, three, k3);
  CHECK(y(2, 2, 0) == 9.0);
  CHECK(y(0, 0, 0) == 4.0);
  CHECK(y(4, 4, 0) == 4.0);
  CHECK(y(0, 2, 0) == 6.0);

  ConvParams wrong(1, 2, 3, 3);
  CHECK_THROWS_AS(conv2d_forward(ones, three, wrong), ShapeError);
}

TEST_CASE("convolution backward matches finite differences") {
  Rng rng = make_rng(6);
  for (auto [kw, kh, sw, sh] : {std::array{3, 3, 1, 1}, std::array{5, 1, 1, 1}, std::array{4, 3, 2, 1}}) {
    const std::size_t W = 4, H = 3;
    LayerSpec l = make_layer(kw, kh, sw, sh, 3, Activation::Relu, W, H);
    Tensor3 x = random_t3(W, H, 2, rng);
    ConvParams p(3, 2, kw, kh);
    randomize(p.weight, rng);
    randomize(p.bias, rng);
    const Tensor3 w = random_t3(W, H, 3, rng);
    auto f = [&] { return dot(w, conv2d_forward(x, l, p)); };
    ConvParams g(3, 2, kw, kh);
    const Tensor3 gx = conv2d_backward(x, l, p, w, g);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(close(gx[k], central(f, x[k])));
    for (std::size_t k = 0; k < p.weight.size(); ++k) CHECK(close(g.weight[k], central(f, p.weight[k])));
    for (std::size_t k = 0; k < p.bias.size(); ++k) CHECK(close(g.bias[k], central(f, p.bias[k])));
  }
}

TEST_CASE("batch normalisation") {
  SUBCASE("constant batch normalises to zero") {
    const Batch x(3, Tensor3(2, 2, 2, 4.2));
    BatchNormCache cache;
    const Batch y = batchnorm_forward_train(x, {1.0, 1.0}, {0.0, 0.0}, cache);
    for (const Tensor3& t : y)
      for (double v : t.data()) CHECK(std::abs(v) < 1e-10);
    const Batch s = batchnorm_forward_train(x, {2.0, 3.0}, {0.5, -1.0}, cache);
    CHECK(s[0](0, 0, 0) == doctest::Approx(0.5));
    CHECK(s[0](0, 0, 1) == doctest::Approx(-1.0));
  }
  SUBCASE("train mode standardises per channel") {
    Rng rng = make_rng(7);
    Batch x;
    for (int n = 0; n < 4; ++n) x.push_back(random_t3(3, 2, 2, rng, 3.0));
    BatchNormCache cache;
    const Batch y = batchnorm_forward_train(x, {1.0, 1.0}, {0.0, 0.0}, cache);
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0, s2 = 0.0, ms = 0.0, cnt = 0.0;
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t q = 0; q < 3; ++q)
          for (std::size_t i = 0; i < 2; ++i) {
            s += y[n](q, i, c);
            s2 += y[n](q, i, c) * y[n](q, i, c);
            ms += x[n](q, i, c);
            cnt += 1;
          }
      CHECK(std::abs(s / cnt) < 1e-12);
      const double var = s2 / cnt;
      CHECK(var == doctest::Approx(cache.var[c] / (cache.var[c] + kBatchNormEps)).epsilon(1e-10));
      CHECK(cache.mean[c] == doctest::Approx(ms / cnt));
    }
  }
  SUBCASE("backward matches finite differences") {
    Rng rng = make_rng(8);
    Batch x;
    for (int n = 0; n < 3; ++n) x.push_back(random_t3(2, 3, 2, rng, 2.0));
    std::vector<double> gamma{1.3, -0.4}, beta{0.2, 0.7};
    Batch w;
    for (int n = 0; n < 3; ++n) w.push_back(random_t3(2, 3, 2, rng));
    auto f = [&] {
      BatchNormCache c;
      const Batch y = batchnorm_forward_train(x, gamma, beta, c);
      double s = 0.0;
      for (std::size_t n = 0; n < y.size(); ++n) s += dot(w[n], y[n]);
      return s;
    };
    BatchNormCache cache;
    batchnorm_forward_train(x, gamma, beta, cache);
    std::vector<double> gg(2, 0.0), gb(2, 0.0);
    const Batch gx = batchnorm_backward(cache, gamma, w, gg, gb);
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t k = 0; k < x[n].size(); ++k) CHECK(close(gx[n][k], central(f, x[n][k])));
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(close(gg[c], central(f, gamma[c])));
      CHECK(close(gb[c], central(f, beta[c])));
    }
  }
  SUBCASE("running statistics and eval mode") {
    BatchNormCache cache;
    cache.mean = {1.0, -2.0};
    cache.var = {4.0, 9.0};
    std::vector<double> rm{0.0, 0.0}, rv{1.0, 1.0};
    update_running_stats(cache, rm, rv, 0.9);
    CHECK(rm[0] == doctest::Approx(0.1));
    CHECK(rm[1] == doctest::Approx(-0.2));
    CHECK(rv[0] == doctest::Approx(1.3));
    CHECK(rv[1] == doctest::Approx(1.8));
    const Tensor3 x(1, 1, 2, 3.0);
    const Tensor3 y = batchnorm_forward_eval(x, {2.0, 1.0}, {0.5, 0.0}, {1.0, 3.0}, {4.0, 1.0});
    CHECK(y(0, 0, 0) == doctest::Approx(2.0 * 2.0 / std::sqrt(4.0 + kBatchNormEps) + 0.5));
    CHECK(y(0, 0, 1) == doctest::Approx(0.0));
  }
}

TEST_CASE("activations") {
  CHECK(relu(-2.0) == 0.0);
  CHECK(relu(0.0) == 0.0);
  CHECK(relu(3.0) == 3.0);
  CHECK(activate(Tensor3(1, 1, 1, 0.0), Activation::Tanh)[0] == 0.0);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
  CHECK(sigmoid(2.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));

  Rng rng = make_rng(9);
  for (Activation a : {Activation::Relu, Activation::Tanh}) {
    Tensor3 x = random_t3(2, 2, 3, rng);
    const Tensor3 w = random_t3(2, 2, 3, rng);
    auto f = [&] { return dot(w, activate(x, a)); };
    const Tensor3 g = activate_backward(x, activate(x, a), w, a);
    for (std::size_t k = 0; k < x.size(); ++k)
      if (std::abs(x[k]) > 1e-3) CHECK(close(g[k], central(f, x[k])));
  }
}

TEST_CASE("channel pooling") {
  Tensor3 x(1, 2, 3);
  x(0, 0, 0) = 1.0;
  x(0, 0, 1) = 5.0;
  x(0, 0, 2) = 3.0;
  x(0, 1, 0) = -1.0;
  CHECK(pool_channels(x, PoolKind::Mean)(0, 0) == doctest::Approx(3.0));
  CHECK(pool_channels(x, PoolKind::Max)(0, 0) == 5.0);
  CHECK(pool_channels(x, PoolKind::Max)(0, 1) == 0.0);

  Rng rng = make_rng(10);
  for (PoolKind kind : {PoolKind::Mean, PoolKind::Max}) {
    Tensor3 t = random_t3(3, 2, 4, rng);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Random(3, 2);
    auto f = [&] { return (pool_channels(t, kind).array() * w.array()).sum(); };
    const Tensor3 g = pool_channels_backward(t, kind, w);
    for (std::size_t k = 0; k < t.size(); ++k) CHECK(close(g[k], central(f, t[k])));
  }
}

TEST_CASE("spatial attention") {
  ConvParams att(1, 1, 1, 1);
  att.weight[0] = 0.8;
  att.bias[0] = -0.3;
  Tensor3 csi(3, 2, 2);
  for (std::size_t c = 0; c < 2; ++c) {
    csi(0, 0, c) = 0.4;
    csi(1, 0, c) = 0.4;
    csi(2, 0, c) = 0.9;
    csi(0, 1, c) = 0.1 * (c + 1);
    csi(1, 1, c) = 0.2 * (c + 1);
    csi(2, 1, c) = 0.3 * (c + 1);
  }
  const Eigen::MatrixXd t = spatial_attention(csi, att, PoolKind::Mean);
  CHECK(t(0, 0) == t(1, 0));
  CHECK(t(0, 0) < t(2, 0));
  CHECK(t(0, 1) < t(1, 1));
  CHECK(t(1, 1) < t(2, 1));
  CHECK(t(2, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-(0.8 * 0.9 - 0.3)))));

  att.weight[0] = 0.0;
  att.bias[0] = 1.7;
  const Eigen::MatrixXd c = spatial_attention(csi, att, PoolKind::Max);
  CHECK((c.array() == sigmoid(1.7)).all());
  CHECK_THROWS_AS(spatial_attention(csi, ConvParams(2, 1, 1, 1), PoolKind::Mean), ShapeError);
}

TEST_CASE("differentiable threshold and cluster matrix") {
  CHECK(diff_threshold(0.3, 0.3, 50.0) == 0.5);
  CHECK(diff_threshold(0.7, 0.5, 50.0) == doctest::Approx(0.9999546).epsilon(1e-7));
  CHECK(diff_threshold(0.3, 0.5, 50.0) == doctest::Approx(4.54e-5).epsilon(1e-3));

  Tensor3 v(2, 2, 2);
  v(0, 0, 0) = 0.9, v(0, 0, 1) = 0.7;
  v(0, 1, 0) = -0.9, v(0, 1, 1) = -0.7;
  v(1, 0, 0) = 0.1, v(1, 0, 1) = 0.3;
  v(1, 1, 0) = 0.5, v(1, 1, 1) = 0.5;
  Eigen::MatrixXd t(2, 2);
  t << 0.2, 0.1, 0.0, 0.6;
  const ClusterMatrix c = cluster_matrix(v, t, 50.0, PoolKind::Mean);
  const Eigen::MatrixXd pv = pool_channels(v, PoolKind::Mean);
  for (int q = 0; q < 2; ++q)
    for (int i = 0; i < 2; ++i) {
      CHECK(c.soft(q, i) == doctest::Approx(1.0 / (1.0 + std::exp(-50.0 * (pv(q, i) - t(q, i))))));
      CHECK(c.soft(q, i) >= 0.0);
      CHECK(c.soft(q, i) <= 1.0);
      // |pv - t| >= 0.3 here except at (1, 0) and (1, 1)
      if (std::abs(pv(q, i) - t(q, i)) >= 0.3) CHECK(std::abs(c.soft(q, i) - c.hard()(q, i)) < 1e-6);
    }
  CHECK(c.hard()(0, 0) == 1.0);
  CHECK(c.hard()(0, 1) == 0.0);
  CHECK(c.hard()(1, 0) == 1.0);
  CHECK(c.hard()(1, 1) == 0.0);

  const Eigen::MatrixXd hi = Eigen::MatrixXd::Constant(2, 2, 5.0), lo = Eigen::MatrixXd::Constant(2, 2, -5.0);
  CHECK((cluster_matrix(v, lo, 50.0, PoolKind::Mean).soft.array() > 1 - 1e-12).all());
  CHECK((cluster_matrix(v, hi, 50.0, PoolKind::Mean).soft.array() < 1e-12).all());
}

TEST_CASE("sparsify and complex conversion") {
  Rng rng = make_rng(11);
  const std::size_t M = 3;
  Tensor3 v = random_t3(3, 2, 2 * M, rng);
  for (double& x : v.data()) x = std::abs(x) + 0.1;
  CHECK(sparsify(v, Eigen::MatrixXd::Ones(3, 2)) == v);
  const Tensor3 none = sparsify(v, Eigen::MatrixXd::Zero(3, 2));
  for (double x : none.data()) CHECK(x == 0.0);
  Eigen::MatrixXd one_zero = Eigen::MatrixXd::Ones(3, 2);
  one_zero(1, 0) = 0.0;
  const Tensor3 s = sparsify(v, one_zero);
  std::size_t zeros = 0;
  for (double x : s.data()) zeros += x == 0.0;
  CHECK(zeros == 2 * M);
  const CTensor cs = to_complex(s);
  CHECK(count_zeros(cs, 0.0 + 1e-300) == M);
  for (std::size_t m = 0; m < M; ++m) CHECK(cs(1, 0, m) == cplx{});

  Tensor3 unit(1, 1, 4);
  unit(0, 0, 0) = 1.0;
  unit(0, 0, 2) = 1.0;
  CHECK(to_complex(unit)(0, 0, 0) == cplx(1.0, 1.0));
  Tensor3 real_only = v;
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t m = 0; m < M; ++m) real_only(q, i, M + m) = 0.0;
  const CTensor real_c = to_complex(real_only);
  for (const cplx& z : real_c.data()) CHECK(z.imag() == 0.0);
  CHECK(to_real(to_complex(v)) == v);
  CHECK_THROWS_AS(to_complex(Tensor3(1, 1, 3)), ShapeError);
}

TEST_CASE("network forward basics") {
  const int Q = 4, I = 4, M = 2;
  const NetworkSpec spec = default_network(Q, I, M, 3, 6, 3);
  Rng rng = make_rng(12);
  const CTensor h = oracle::random_tensor(Q, I, M, rng);

  SUBCASE("zero parameters give a zero beamformer") {
    const NetParams z = zero_params(spec, M);
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      const CTensor v = forward(h, spec, z, {mode, 1.0});
      for (const cplx& x : v.data()) CHECK(x == cplx{});
    }
  }
  SUBCASE("silent main branch leaves the identity path") {
    NetParams p = init_params(spec, M, rng);
    std::fill(p.bn_gamma.back().begin(), p.bn_gamma.back().end(), 0.0);
    const ForwardTrace tr = forward_batch({h}, spec, p, {Mode::Eval, 1.0});
    const Tensor3 want = activate(conv2d_forward(tr.samples[0].csi, spec.identity_map, p.identity), Activation::Tanh);
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(tr.samples[0].v_r[k] == doctest::Approx(want[k]).epsilon(1e-14));
  }
  SUBCASE("Q = I = 16 output shape") {
    const NetworkSpec big = default_network(16, 16, 4);
    const NetParams p = init_params(big, 4, rng);
    const CTensor out = forward(oracle::random_tensor(16, 16, 4, rng), big, p, {Mode::Eval, 1.0});
    CHECK(out.aps() == 16);
    CHECK(out.users() == 16);
    CHECK(out.antennas() == 4);
  }
  SUBCASE("argument checks") {
    const NetParams p = init_params(spec, M, rng);
    CHECK_THROWS_AS(forward_batch({}, spec, p, {}), std::invalid_argument);
    CHECK_THROWS_AS(forward_batch({h, CTensor(Q, I, 1)}, spec, p, {}), ShapeError);
    CHECK_THROWS_AS(forward(oracle::random_tensor(Q, I, M + 1, rng), spec, p, {}), std::invalid_argument);
    const ForwardTrace tr = forward_batch({h}, spec, p, {Mode::Eval, 1.0});
    CHECK_THROWS_AS(backward_batch(tr, spec, p, {CTensor(Q, I, M)}, {}), std::logic_error);
  }
}

TEST_CASE("forward output is feasible for random parameters") {
  const int Q = 4, I = 4, M = 2;
  Rng rng = make_rng(13);
  std::uniform_real_distribution<double> bias(-2.0, 2.0), pm(0.2, 3.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const NetworkSpec spec = default_network(Q, I, M, 3, 4, 3);
    NetParams p = init_params(spec, M, rng);
    p.attention.bias[0] = bias(rng);
    const double pmax = pm(rng);
    const CTensor h = oracle::random_tensor(Q, I, M, rng, 3.0);
    ClusterMatrix c;
    const ProjectionRule rule = rep % 2 ? ProjectionRule::NormCorrect : ProjectionRule::LinearInPower;
    const CTensor v = forward(h, spec, p, {Mode::Eval, pmax, rule}, &c);
    const Eigen::MatrixXd hard = c.hard();
    for (int q = 0; q < Q; ++q) {
      CHECK(v.ap_power(q) <= pmax + 1e-9);
      for (int i = 0; i < I; ++i)
        if (hard(q, i) == 0.0)
          for (int m = 0; m < M; ++m) CHECK(v(q, i, m) == cplx{});
    }
  }
}

TEST_CASE("network backward matches finite differences") {
  const int Q = 3, I = 3, M = 2;
  Rng rng = make_rng(14);
  for (PoolKind pool : {PoolKind::Mean, PoolKind::Max}) {
    NetworkSpec spec = default_network(Q, I, M, 2, 3, 3, 5.0);
    spec.pool = pool;
    NetParams p = init_params(spec, M, rng);
    std::vector<CTensor> hs;
    for (int n = 0; n < 3; ++n) hs.push_back(oracle::random_tensor(Q, I, M, rng));
    std::vector<CTensor> w;
    for (int n = 0; n < 3; ++n) w.push_back(oracle::random_tensor(Q, I, M, rng));
    const ForwardOptions opt{Mode::Train, 0.5};
    auto f = [&] {
      const ForwardTrace tr = forward_batch(hs, spec, p, opt);
      double s = 0.0;
      for (std::size_t n = 0; n < hs.size(); ++n)
        for (std::size_t k = 0; k < w[n].size(); ++k)
          s += w[n].data()[k].real() * tr.samples[n].beamformer.data()[k].real() +
               w[n].data()[k].imag() * tr.samples[n].beamformer.data()[k].imag();
      return s;
    };
    const ForwardTrace tr = forward_batch(hs, spec, p, opt);
    const auto sig = branch_signature(tr, spec, opt);
    const NetParams g = backward_batch(tr, spec, p, w, opt);

    std::vector<double> analytic;
    for_each_trainable(g, [&](const std::string&, const std::vector<double>& v) {
      analytic.insert(analytic.end(), v.begin(), v.end());
    });
    std::size_t idx = 0, checked = 0;
    for_each_trainable(p, [&](const std::string& name, std::vector<double>& v) {
      for (double& x : v) {
        const double h = 1e-6 * std::max(1.0, std::abs(x));
        const double keep = x;
        x = keep + h;
        const bool same_p = branch_signature(forward_batch(hs, spec, p, opt), spec, opt) == sig;
        x = keep - h;
        const bool same_m = branch_signature(forward_batch(hs, spec, p, opt), spec, opt) == sig;
        x = keep;
        if (same_p && same_m) {
          CAPTURE(name);
          CHECK(close(analytic[idx], central(f, x, h), 1e-5, 1e-3));
          ++checked;
        }
        ++idx;
      }
    });
    CHECK(checked > idx / 2);
  }
}

TEST_CASE("running statistics feed eval mode") {
  const int Q = 3, I = 3, M = 1;
  const NetworkSpec spec = default_network(Q, I, M, 2, 2, 3);
  Rng rng = make_rng(15);
  NetParams p = init_params(spec, M, rng);
  const NetParams before = p;
  std::vector<CTensor> hs;
  for (int n = 0; n < 4; ++n) hs.push_back(oracle::random_tensor(Q, I, M, rng));
  const ForwardTrace tr = forward_batch(hs, spec, p, {Mode::Train, 1.0});
  update_running_stats(p, tr, 0.9);
  for (std::size_t l = 0; l < p.conv.size(); ++l)
    for (std::size_t c = 0; c < p.running_mean[l].size(); ++c) {
      CHECK(p.running_mean[l][c] == doctest::Approx(0.1 * tr.layers[l].bn.mean[c]));
      CHECK(p.running_var[l][c] == doctest::Approx(0.9 + 0.1 * tr.layers[l].bn.var[c]));
    }
  NetParams q = before;
  update_running_stats(q, forward_batch(hs, spec, q, {Mode::Eval, 1.0}), 0.9);
  CHECK(q == before);
  CHECK(trainable_count(p) > 0);
}
