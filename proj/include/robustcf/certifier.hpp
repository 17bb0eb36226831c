#pragma once

// Worst-case SINR certification under the bounded CSI-error model.
//
// For a fixed beamformer the slack problem decouples per user into
//   alpha* = max { alpha : exists delta >= 0, C4(alpha, delta) >= 0 }
//   beta*  = min { beta  : exists mu    >= 0, C5(beta, mu)     >= 0 }
// and gamma* = alpha* / beta*. Each side is solved by bisection on the slack
// with an inner maximisation of the (concave) minimum eigenvalue over the
// multiplier.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "robustcf/random.hpp"
#include "robustcf/tensor.hpp"

namespace rcf {

struct CertifierTolerances {
  double bisection_rel = 1e-8;
  double search_rel = 1e-8;
  double psd_rel = 1e-7;  // witness tolerance, relative to the spectral norm
  int max_doublings = 200;
};

/// E_ii = v_i v_i^H, e_ii = E_ii h_i and the interference matrix of all
/// other users' beamformers (QM x (I-1)).
struct LmiBlocks {
  Eigen::MatrixXcd signal;
  Eigen::VectorXcd cross;
  Eigen::MatrixXcd interference;

  static LmiBlocks build(const Eigen::VectorXcd& h_hat, const Eigen::MatrixXcd& beamformers,
                         Eigen::Index user);
};

/// [[E + delta I, e], [e^H, h^H E h - alpha - delta eps^2]].
Eigen::MatrixXcd build_c4_lmi(const LmiBlocks& blocks, const Eigen::VectorXcd& h_hat,
                              double alpha, double delta, double eps);

/// [[beta - sigma2 - mu, h^H V, 0], [V^H h, I, eps V^H], [0, eps V, mu I]].
Eigen::MatrixXcd build_c5_lmi(const Eigen::VectorXcd& h_hat, const Eigen::MatrixXcd& interference,
                              double beta, double mu, double eps, double sigma2);

struct SlackSolution {
  double value = 0.0;       // alpha* or beta*
  double multiplier = 0.0;  // delta* or mu*
};

SlackSolution max_alpha(const Eigen::VectorXcd& h_hat, const Eigen::VectorXcd& v, double eps,
                        const CertifierTolerances& tol = {});

SlackSolution min_beta(const Eigen::VectorXcd& h_hat, const Eigen::MatrixXcd& interference,
                       double eps, double sigma2, const CertifierTolerances& tol = {});

/// (max(|h^H v| - eps ||v||, 0))^2: exact minimum of |(h + dh)^H v|^2 over the ball.
double closed_form_numerator(const Eigen::VectorXcd& h_hat, const Eigen::VectorXcd& v, double eps);

/// sum_j (|h^H v_j| + eps ||v_j||)^2 + sigma2, an upper bound on the
/// worst-case interference plus noise.
double envelope_denominator(const Eigen::VectorXcd& h_hat, const Eigen::MatrixXcd& interference,
                            double eps, double sigma2);

struct UserCertificate {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  double mu = 0.0;
  // Minimum eigenvalue and spectral norm of the LMIs at the certified point.
  double c4_min_eig = 0.0;
  double c4_norm = 0.0;
  double c5_min_eig = 0.0;
  double c5_norm = 0.0;
};

struct RobustCertificate {
  std::vector<UserCertificate> users;

  std::vector<double> gammas() const;
};

UserCertificate certify_user(const Eigen::VectorXcd& h_hat, const Eigen::MatrixXcd& beamformers,
                             Eigen::Index user, double eps, double sigma2,
                             const CertifierTolerances& tol = {});

/// Certifies every user of a (estimate, beamformer) pair.
RobustCertificate certify(const CTensor& est_h, const CTensor& beamformer,
                          std::span<const double> eps, std::span<const double> noise,
                          const CertifierTolerances& tol = {});

/// sum_i log2(1 + gamma_i).
double worst_case_sum_rate(const RobustCertificate& cert);

/// Minimum SINR of `user` over n draws of dh uniform on the sphere ||dh|| = eps.
double sampling_oracle(const Eigen::VectorXcd& h_hat, const Eigen::MatrixXcd& beamformers,
                       Eigen::Index user, double eps, double sigma2, std::size_t n, Rng& rng);

struct SinrBound {
  double certified = 0.0;
  double sampled_min = 0.0;
  std::size_t samples = 0;
};

SinrBound check_user_bound(const Eigen::VectorXcd& h_hat, const Eigen::MatrixXcd& beamformers,
                           Eigen::Index user, double eps, double sigma2, std::size_t n, Rng& rng,
                           const CertifierTolerances& tol = {});

}  // namespace rcf
