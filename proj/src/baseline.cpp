#include "robustcf/baseline.hpp"

#include <cmath>
#include <stdexcept>

#include "robustcf/metrics.hpp"

namespace rcf {
namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::VectorXd;

// Solves V = (A + nu I)^{-1} B with the smallest nu >= 0 such that
// ||V||_F^2 <= budget, through the eigendecomposition of A.
MatrixXcd regularized_update(const MatrixXcd& A, const MatrixXcd& B, double budget) {
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(A);
  const VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  const MatrixXcd Bp = es.eigenvectors().adjoint() * B;
  const VectorXd row_energy = Bp.rowwise().squaredNorm();
  const double lam_max = lam.size() ? lam.maxCoeff() : 0.0;
  const double floor = 1e-14 * std::max(lam_max, 1e-300);

  auto power = [&](double nu) {
    double p = 0.0;
    for (Index k = 0; k < lam.size(); ++k) {
      const double d = lam(k) + nu;
      if (d <= floor) continue;  // null-space directions carry no energy of B
      p += row_energy(k) / (d * d);
    }
    return p;
  };

  double nu = 0.0;
  if (power(0.0) > budget) {
    double lo = 0.0;
    double hi = std::sqrt(row_energy.sum() / budget);
    while (power(hi) > budget) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (power(mid) > budget ? lo : hi) = mid;
    }
    nu = hi;
  }
  VectorXd inv(lam.size());
  for (Index k = 0; k < lam.size(); ++k) {
    const double d = lam(k) + nu;
    inv(k) = d <= floor ? 0.0 : 1.0 / d;
  }
  return es.eigenvectors() * inv.asDiagonal() * Bp;
}

}  // namespace

WmmseResult wmmse_solve(const CTensor& channel, double max_power, std::span<const double> noise,
                        int iters, ProjectionRule rule) {
  if (iters < 1) throw std::invalid_argument("wmmse_solve: iters must be >= 1");
  if (!(max_power > 0.0)) throw std::domain_error("wmmse_solve: P_max must be positive");
  const std::size_t Q = channel.aps(), I = channel.users(), M = channel.antennas();
  if (noise.size() != I) throw ShapeError("wmmse_solve: noise needs one entry per user");

  const MatrixXcd H = channel.stacked();
  const double budget = static_cast<double>(Q) * max_power;

  // Matched-filter warm start with an equal per-user power share.
  MatrixXcd V = MatrixXcd::Zero(H.rows(), H.cols());
  for (Index i = 0; i < H.cols(); ++i) {
    const double n = H.col(i).norm();
    if (n > 0.0) V.col(i) = H.col(i) / n * std::sqrt(budget / static_cast<double>(I));
  }

  WmmseResult result;
  result.state.receivers.assign(I, cplx{});
  result.state.weights.assign(I, 1.0);
  auto rate_of = [&](const MatrixXcd& v) {
    return sum_rate(nominal_sinr(channel, CTensor::from_stacked(v, Q, M), noise));
  };
  result.objective_history.push_back(rate_of(V));

  for (int t = 0; t < iters; ++t) {
    const MatrixXcd G = H.adjoint() * V;  // G(i, j) = h_i^H v_j
    MatrixXcd A = MatrixXcd::Zero(H.rows(), H.rows());
    MatrixXcd B(H.rows(), H.cols());
    for (Index i = 0; i < H.cols(); ++i) {
      double total = noise[i];
      for (Index j = 0; j < H.cols(); ++j) total += std::norm(G(i, j));
      const cplx u = G(i, i) / total;
      const double w = total / (total - std::norm(G(i, i)));  // 1 / MSE
      result.state.receivers[i] = u;
      result.state.weights[i] = w;
      A.noalias() += (w * std::norm(u)) * H.col(i) * H.col(i).adjoint();
      B.col(i) = (w * u) * H.col(i);
    }
    V = regularized_update(A, B, budget);
    result.objective_history.push_back(rate_of(V));
  }

  result.unprojected = CTensor::from_stacked(V, Q, M);
  result.state.beamformer = result.unprojected;
  result.state.objective = result.objective_history.back();
  result.beamformer = power_project(result.unprojected, max_power, rule);
  result.rate = sum_rate(nominal_sinr(channel, result.beamformer, noise));
  return result;
}

}  // namespace rcf
