#pragma once

// Unsupervised training of the clustering/beamforming network against a
// differentiable lower bound on the worst-case SINR.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robustcf/nn/network.hpp"
#include "robustcf/sysmodel.hpp"

namespace rcf {

struct TrainConfig {
  double lambda = 0.1;          // sparsity weight
  double amplification = 50.0;  // gate slope k
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::size_t train_size = 500;
  std::size_t test_size = 200;
  std::uint64_t seed = 1;
  std::size_t certify_every = 1;  // certified held-out evaluation period in epochs; 0 = last only
  ProjectionRule rule = ProjectionRule::LinearInPower;

  void validate() const;
};

struct LossReport {
  double total = 0.0;
  double rate = 0.0;      // mean over the batch of sum_i log2(1 + surrogate gamma_i)
  double sparsity = 0.0;  // mean l1 norm of the beamformer
  double certified_rate = 0.0;  // mean certified worst-case sum rate (NaN when not evaluated)
  double q_ave = 0.0;
};

/// (max(|h^H v_i| - eps ||v_i||, 0))^2 / (sum_{j != i} (|h^H v_j| + eps ||v_j||)^2 + sigma2).
double surrogate_gamma(const Eigen::VectorXcd& h_hat, const Eigen::MatrixXcd& beamformers,
                       std::size_t user, double eps, double sigma2);

struct SurrogateGradient {
  double value = 0.0;
  Eigen::MatrixXcd grad;  // d gamma / d V as dRe + i dIm, same shape as beamformers
};
SurrogateGradient surrogate_gamma_grad(const Eigen::VectorXcd& h_hat,
                                       const Eigen::MatrixXcd& beamformers, std::size_t user,
                                       double eps, double sigma2);

/// One channel realisation seen by the loss.
struct LossSample {
  const CTensor* est_h;
  std::span<const double> eps;    // per user
  std::span<const double> noise;  // per user
};

/// Batch-mean loss; fills `grads` (one per sample, dL/dV) when non-null.
/// Certified fields are left NaN unless `certify_batch` is set.
LossReport loss(const std::vector<LossSample>& batch, const std::vector<CTensor>& v, double lambda,
                std::vector<CTensor>* grads = nullptr, bool certify_batch = false);

/// Per-sample branch bits of the surrogate (numerator clipping).
std::vector<std::uint8_t> surrogate_signature(const std::vector<LossSample>& batch,
                                              const std::vector<CTensor>& v);

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Throws std::runtime_error on a non-finite gradient before touching params.
void adam_step(std::vector<std::vector<double>*> params, const std::vector<const std::vector<double>*>& grads,
               AdamState& state, double lr);
void adam_step(nn::NetParams& params, const nn::NetParams& grads, AdamState& state, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  LossReport train;     // mean over the epoch's batches
  LossReport held_out;  // eval-mode forward on the held-out split
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, nn::NetParams last_good, std::size_t epoch)
      : std::runtime_error(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const nn::NetParams& last_good() const { return last_good_; }
  std::size_t epoch() const { return epoch_; }

 private:
  nn::NetParams last_good_;
  std::size_t epoch_;
};

struct TrainResult {
  nn::NetParams params;
  std::vector<EpochRecord> curve;
};

using EpochCallback = std::function<void(const EpochRecord&, const nn::NetParams&)>;

/// Evaluates a network in eval mode (running statistics, hard gate).
/// Certification is skipped (certified_rate NaN) when `certify_outputs` is false.
LossReport evaluate(const std::vector<ChannelPair>& data, const nn::NetworkSpec& spec,
                    const nn::NetParams& params, const SystemConfig& system, double lambda,
                    ProjectionRule rule, bool certify_outputs);

/// Mini-batch Adam on the surrogate loss. Initial parameters come from
/// cfg.seed; the network spec's amplification is replaced by cfg.amplification.
TrainResult train(const std::vector<ChannelPair>& train_set, const std::vector<ChannelPair>& test_set,
                  nn::NetworkSpec spec, const SystemConfig& system, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Same, continuing from given parameters.
TrainResult train_from(nn::NetParams params, const std::vector<ChannelPair>& train_set,
                       const std::vector<ChannelPair>& test_set, nn::NetworkSpec spec,
                       const SystemConfig& system, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool excluded = false;  // branch changed inside the stencil
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  double max_rel_error = 0.0;
};

struct GradCheckOptions {
  std::size_t probes = 100;
  std::uint64_t seed = 7;
  double step = 1e-5;        // scaled by max(1, |theta|)
  double floor = 1e-8;       // denominator floor of the relative error, raised to the
                             // finite-difference noise level 1e5 eps_mach max(1, |L|) / h
  double lambda = 0.1;
  ProjectionRule rule = ProjectionRule::LinearInPower;
  double max_power = 1.0;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Central differences of the full training loss on `batch` at randomly
/// chosen parameter coordinates. Probes whose +-h evaluations take a different
/// branch than the centre are flagged and excluded.
GradCheckReport gradient_check(const nn::NetworkSpec& spec, const nn::NetParams& params,
                               const std::vector<ChannelPair>& batch, std::span<const double> noise,
                               const GradCheckOptions& opt);

/// Generic checker for a scalar function with analytic gradient; used on toy
/// models.
GradCheckReport finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                                        const std::vector<double>& x,
                                        const std::vector<double>& grad, double step, double floor);

}  // namespace rcf
