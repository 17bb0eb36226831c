#include "robustcf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "robustcf/certifier.hpp"
#include "robustcf/metrics.hpp"

namespace rcf {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

cplx unit_phase(cplx a) {
  const double r = std::abs(a);
  return r > 0.0 ? a / r : cplx(0.0);
}

VectorXcd unit_or_zero(const VectorXcd& v) {
  const double n = v.norm();
  return n > 0.0 ? VectorXcd(v / n) : VectorXcd::Zero(v.size());
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(amplification > 0.0)) throw std::invalid_argument("amplification must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (train_size < 1) throw std::invalid_argument("train size must be >= 1");
}

double surrogate_gamma(const VectorXcd& h_hat, const MatrixXcd& beamformers, std::size_t user,
                       double eps, double sigma2) {
  const auto i = static_cast<Eigen::Index>(user);
  MatrixXcd others(beamformers.rows(), beamformers.cols() - 1);
  for (Eigen::Index j = 0, k = 0; j < beamformers.cols(); ++j)
    if (j != i) others.col(k++) = beamformers.col(j);
  return closed_form_numerator(h_hat, beamformers.col(i), eps) /
         envelope_denominator(h_hat, others, eps, sigma2);
}

SurrogateGradient surrogate_gamma_grad(const VectorXcd& h_hat, const MatrixXcd& beamformers,
                                       std::size_t user, double eps, double sigma2) {
  const auto i = static_cast<Eigen::Index>(user);
  SurrogateGradient out;
  out.grad = MatrixXcd::Zero(beamformers.rows(), beamformers.cols());

  const VectorXcd vi = beamformers.col(i);
  const cplx a = h_hat.dot(vi);
  const double r = std::abs(a) - eps * vi.norm();
  const double num = r > 0.0 ? r * r : 0.0;

  double den = sigma2;
  MatrixXcd d_den = MatrixXcd::Zero(beamformers.rows(), beamformers.cols());
  for (Eigen::Index j = 0; j < beamformers.cols(); ++j) {
    if (j == i) continue;
    const VectorXcd vj = beamformers.col(j);
    const cplx b = h_hat.dot(vj);
    const double t = std::abs(b) + eps * vj.norm();
    den += t * t;
    d_den.col(j) = 2.0 * t * (h_hat * unit_phase(b) + eps * unit_or_zero(vj));
  }
  out.value = num / den;
  if (r > 0.0) out.grad.col(i) = 2.0 * r * (h_hat * unit_phase(a) - eps * unit_or_zero(vi)) / den;
  out.grad -= (num / (den * den)) * d_den;
  return out;
}

LossReport loss(const std::vector<LossSample>& batch, const std::vector<CTensor>& v, double lambda,
                std::vector<CTensor>* grads, bool certify_batch) {
  if (batch.size() != v.size()) throw ShapeError("loss: batch and beamformer counts differ");
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossReport rep;
  rep.certified_rate = certify_batch ? 0.0 : kNaN;
  if (grads) grads->assign(batch.size(), CTensor());

  for (std::size_t n = 0; n < batch.size(); ++n) {
    const CTensor& h = *batch[n].est_h;
    require_same_shape(h, v[n], "loss");
    const std::size_t I = h.users();
    if (batch[n].eps.size() != I || batch[n].noise.size() != I)
      throw ShapeError("loss: eps/noise length must equal the user count");
    const MatrixXcd H = h.stacked();
    const MatrixXcd V = v[n].stacked();
    MatrixXcd g = MatrixXcd::Zero(V.rows(), V.cols());
    double rate = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
      const SurrogateGradient s =
          surrogate_gamma_grad(H.col(static_cast<Eigen::Index>(i)), V, i, batch[n].eps[i],
                               batch[n].noise[i]);
      rate += std::log2(1.0 + s.value);
      g += s.grad / ((1.0 + s.value) * std::log(2.0));
    }
    const double l1 = l1_norm(v[n]);
    rep.rate += rate * inv_n;
    rep.sparsity += l1 * inv_n;
    rep.q_ave += q_ave(v[n], zero_tolerance(1.0)) * inv_n;
    if (certify_batch)
      rep.certified_rate +=
          worst_case_sum_rate(certify(h, v[n], batch[n].eps, batch[n].noise)) * inv_n;
    if (grads) {
      // dL/dV = -(d rate - lambda d l1) / N
      for (Eigen::Index r = 0; r < V.rows(); ++r)
        for (Eigen::Index c = 0; c < V.cols(); ++c) {
          const cplx vv = V(r, c);
          g(r, c) -= lambda * cplx(sign(vv.real()), sign(vv.imag()));
        }
      (*grads)[n] = CTensor::from_stacked(-inv_n * g, h.aps(), h.antennas());
    }
  }
  rep.total = -(rep.rate - lambda * rep.sparsity);
  return rep;
}

std::vector<std::uint8_t> surrogate_signature(const std::vector<LossSample>& batch,
                                              const std::vector<CTensor>& v) {
  std::vector<std::uint8_t> sig;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const MatrixXcd H = batch[n].est_h->stacked();
    const MatrixXcd V = v[n].stacked();
    for (Eigen::Index i = 0; i < V.cols(); ++i) {
      const double r = std::abs(H.col(i).dot(V.col(i))) - batch[n].eps[i] * V.col(i).norm();
      sig.push_back(r > 0.0);
    }
    for (const cplx& z : v[n].data()) {
      sig.push_back(z.real() > 0.0 ? 2 : (z.real() < 0.0 ? 0 : 1));
      sig.push_back(z.imag() > 0.0 ? 2 : (z.imag() < 0.0 ? 0 : 1));
    }
  }
  return sig;
}

void adam_step(std::vector<std::vector<double>*> params,
               const std::vector<const std::vector<double>*>& grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient mismatch");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k]->size() != params[k]->size()) throw ShapeError("adam_step: array size mismatch");
    for (double g : *grads[k])
      if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<double>& p = *params[k];
    const std::vector<double>& g = *grads[k];
    for (std::size_t j = 0; j < p.size(); ++j) {
      state.m[k][j] = kAdamBeta1 * state.m[k][j] + (1.0 - kAdamBeta1) * g[j];
      state.v[k][j] = kAdamBeta2 * state.v[k][j] + (1.0 - kAdamBeta2) * g[j] * g[j];
      const double m_hat = state.m[k][j] / c1;
      const double v_hat = state.v[k][j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
  }
}

void adam_step(nn::NetParams& params, const nn::NetParams& grads, AdamState& state, double lr) {
  std::vector<std::vector<double>*> p;
  std::vector<const std::vector<double>*> g;
  nn::for_each_trainable(params, [&](const std::string&, std::vector<double>& a) { p.push_back(&a); });
  nn::for_each_trainable(grads,
                         [&](const std::string&, const std::vector<double>& a) { g.push_back(&a); });
  adam_step(std::move(p), g, state, lr);
}

namespace {

std::vector<LossSample> loss_view(const std::vector<ChannelPair>& data,
                                  const std::vector<std::size_t>& idx,
                                  const SystemConfig& system) {
  std::vector<LossSample> out;
  out.reserve(idx.size());
  for (std::size_t k : idx)
    out.push_back({&data[k].est_h, data[k].per_user_eps, system.noise_power});
  return out;
}

std::vector<CTensor> estimates(const std::vector<ChannelPair>& data,
                               const std::vector<std::size_t>& idx) {
  std::vector<CTensor> out;
  out.reserve(idx.size());
  for (std::size_t k : idx) out.push_back(data[k].est_h);
  return out;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

bool finite(const LossReport& r) { return std::isfinite(r.total); }

}  // namespace

LossReport evaluate(const std::vector<ChannelPair>& data, const nn::NetworkSpec& spec,
                    const nn::NetParams& params, const SystemConfig& system, double lambda,
                    ProjectionRule rule, bool certify_outputs) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty data set");
  const auto idx = iota_n(data.size());
  nn::ForwardOptions opt{nn::Mode::Eval, system.max_power, rule};
  const nn::ForwardTrace tr = nn::forward_batch(estimates(data, idx), spec, params, opt);
  LossReport rep = loss(loss_view(data, idx, system), tr.beamformers(), lambda, nullptr,
                        certify_outputs);
  // Q_ave uses the power-scaled zero tolerance.
  rep.q_ave = 0.0;
  for (const CTensor& v : tr.beamformers())
    rep.q_ave += q_ave(v, zero_tolerance(system.max_power)) / static_cast<double>(data.size());
  return rep;
}

TrainResult train(const std::vector<ChannelPair>& train_set, const std::vector<ChannelPair>& test_set,
                  nn::NetworkSpec spec, const SystemConfig& system, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  Rng init_rng = make_rng(cfg.seed, 1);
  nn::NetParams params =
      nn::init_params(spec, static_cast<int>(train_set.front().est_h.antennas()), init_rng);
  return train_from(std::move(params), train_set, test_set, std::move(spec), system, cfg, on_epoch);
}

TrainResult train_from(nn::NetParams params, const std::vector<ChannelPair>& train_set,
                       const std::vector<ChannelPair>& test_set, nn::NetworkSpec spec,
                       const SystemConfig& system, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  system.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  spec.amplification = cfg.amplification;
  const CTensor& shape = train_set.front().est_h;
  if (auto v = nn::validate_architecture(spec, static_cast<int>(shape.aps()),
                                         static_cast<int>(shape.users()),
                                         static_cast<int>(shape.antennas())))
    throw std::invalid_argument("train: invalid architecture: " + v->message);

  const nn::ForwardOptions opt{nn::Mode::Train, system.max_power, cfg.rule};
  Rng shuffle_rng = make_rng(cfg.seed, 2);
  AdamState adam;
  TrainResult result;
  nn::NetParams last_good = params;
  std::vector<std::size_t> order = iota_n(train_set.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      // Batch statistics of a single sample are degenerate.
      if (stop - start < 2 && order.size() >= 2) continue;
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const nn::ForwardTrace tr = nn::forward_batch(estimates(train_set, idx), spec, params, opt);
      std::vector<CTensor> grad_v;
      const LossReport rep =
          loss(loss_view(train_set, idx, system), tr.beamformers(), cfg.lambda, &grad_v);
      if (!finite(rep))
        throw TrainingDiverged("train: non-finite loss in epoch " + std::to_string(epoch),
                               last_good, epoch);
      const nn::NetParams g = nn::backward_batch(tr, spec, params, grad_v, opt);
      try {
        adam_step(params, g, adam, cfg.learning_rate);
      } catch (const std::runtime_error& e) {
        throw TrainingDiverged(std::string("train: ") + e.what(), last_good, epoch);
      }
      nn::update_running_stats(params, tr);
      const double w = static_cast<double>(idx.size());
      rec.train.total += w * rep.total;
      rec.train.rate += w * rep.rate;
      rec.train.sparsity += w * rep.sparsity;
      rec.train.q_ave += w * rep.q_ave;
      weight += w;
    }
    if (weight > 0.0) {
      rec.train.total /= weight;
      rec.train.rate /= weight;
      rec.train.sparsity /= weight;
      rec.train.q_ave /= weight;
    }
    rec.train.certified_rate = kNaN;

    if (!test_set.empty()) {
      const bool certify_now = epoch == cfg.epochs ||
                               (cfg.certify_every > 0 && epoch % cfg.certify_every == 0);
      rec.held_out = evaluate(test_set, spec, params, system, cfg.lambda, cfg.rule, certify_now);
      if (!finite(rec.held_out))
        throw TrainingDiverged("train: non-finite held-out loss in epoch " + std::to_string(epoch),
                               last_good, epoch);
    } else {
      rec.held_out.total = rec.held_out.rate = rec.held_out.sparsity = kNaN;
      rec.held_out.certified_rate = rec.held_out.q_ave = kNaN;
    }
    last_good = params;
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec, params);
  }
  result.params = std::move(params);
  return result;
}

double relative_error(double analytic, double numeric, double floor) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / den;
}

GradCheckReport finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                                        const std::vector<double>& x,
                                        const std::vector<double>& grad, double step, double floor) {
  if (grad.size() != x.size()) throw ShapeError("finite_difference_check: size mismatch");
  GradCheckReport rep;
  std::vector<double> y = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double h = step * std::max(1.0, std::abs(x[k]));
    y[k] = x[k] + h;
    const double fp = f(y);
    y[k] = x[k] - h;
    const double fm = f(y);
    y[k] = x[k];
    GradCheckEntry e;
    e.parameter = "x";
    e.index = k;
    e.analytic = grad[k];
    e.numeric = (fp - fm) / (2.0 * h);
    e.rel_error = relative_error(e.analytic, e.numeric, floor);
    rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
    ++rep.checked;
    rep.entries.push_back(e);
  }
  return rep;
}

GradCheckReport gradient_check(const nn::NetworkSpec& spec, const nn::NetParams& params,
                               const std::vector<ChannelPair>& batch, std::span<const double> noise,
                               const GradCheckOptions& opt) {
  if (batch.empty()) throw std::invalid_argument("gradient_check: empty batch");
  const nn::ForwardOptions fopt{nn::Mode::Train, opt.max_power, opt.rule};
  const auto idx = iota_n(batch.size());
  const std::vector<CTensor> inputs = estimates(batch, idx);
  std::vector<LossSample> view;
  for (const ChannelPair& c : batch) view.push_back({&c.est_h, c.per_user_eps, noise});

  struct Eval {
    double value;
    std::vector<std::uint8_t> signature;
  };
  auto evaluate_at = [&](const nn::NetParams& p, std::vector<CTensor>* grad_v,
                         nn::ForwardTrace* keep) {
    nn::ForwardTrace tr = nn::forward_batch(inputs, spec, p, fopt);
    const std::vector<CTensor> v = tr.beamformers();
    Eval e{loss(view, v, opt.lambda, grad_v).total, nn::branch_signature(tr, spec, fopt)};
    const auto s2 = surrogate_signature(view, v);
    e.signature.insert(e.signature.end(), s2.begin(), s2.end());
    if (keep) *keep = std::move(tr);
    return e;
  };

  nn::ForwardTrace centre_trace;
  std::vector<CTensor> grad_v;
  const Eval centre = evaluate_at(params, &grad_v, &centre_trace);
  const nn::NetParams analytic = nn::backward_batch(centre_trace, spec, params, grad_v, fopt);

  // Flat index of every trainable scalar.
  struct Slot {
    std::string name;
    std::size_t array, index;
  };
  std::vector<Slot> slots;
  std::vector<const std::vector<double>*> grad_arrays;
  {
    std::size_t a = 0;
    nn::for_each_trainable(params, [&](const std::string& n, const std::vector<double>& v) {
      for (std::size_t k = 0; k < v.size(); ++k) slots.push_back({n, a, k});
      ++a;
    });
    nn::for_each_trainable(analytic, [&](const std::string&, const std::vector<double>& v) {
      grad_arrays.push_back(&v);
    });
  }

  Rng rng = make_rng(opt.seed, 3);
  std::uniform_int_distribution<std::size_t> pick(0, slots.size() - 1);
  GradCheckReport rep;
  nn::NetParams work = params;
  std::vector<std::vector<double>*> work_arrays;
  nn::for_each_trainable(work, [&](const std::string&, std::vector<double>& v) {
    work_arrays.push_back(&v);
  });

  for (std::size_t p = 0; p < opt.probes; ++p) {
    const Slot& s = slots[pick(rng)];
    double& theta = (*work_arrays[s.array])[s.index];
    const double base = theta;
    const double h = opt.step * std::max(1.0, std::abs(base));
    theta = base + h;
    const Eval plus = evaluate_at(work, nullptr, nullptr);
    theta = base - h;
    const Eval minus = evaluate_at(work, nullptr, nullptr);
    theta = base;

    GradCheckEntry e;
    e.parameter = s.name;
    e.index = s.index;
    e.analytic = (*grad_arrays[s.array])[s.index];
    e.numeric = (plus.value - minus.value) / (2.0 * h);
    // Round-off of a central difference is about ulp(L) / h; gradients below
    // that level (e.g. conv biases ahead of batch norm, exactly zero) cannot be
    // resolved, so the denominator never drops under it.
    const double noise = 1e5 * std::numeric_limits<double>::epsilon() *
                         std::max(1.0, std::abs(centre.value)) / h;
    e.rel_error = relative_error(e.analytic, e.numeric, std::max(opt.floor, noise));
    e.excluded = plus.signature != centre.signature || minus.signature != centre.signature;
    if (e.excluded) {
      ++rep.excluded;
    } else {
      ++rep.checked;
      rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
    }
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace rcf
