#pragma once

#include <Eigen/Dense>

namespace rcf {

struct EigenSummary {
  double min = 0.0;
  double max = 0.0;
  /// Spectral norm, max |eigenvalue|.
  double norm() const;
};

/// Throws std::domain_error when m is not square or deviates from Hermitian
/// by more than 1e-10 (relative to max(1, max |m_ij|)).
void require_hermitian(const Eigen::MatrixXcd& m);

/// Smallest eigenvalue of a Hermitian matrix.
double min_eigenvalue(const Eigen::MatrixXcd& m);

/// Smallest and largest eigenvalue of a Hermitian matrix.
EigenSummary eigen_extremes(const Eigen::MatrixXcd& m);

/// True when min eigenvalue >= -rel_tol * spectral norm.
bool is_psd(const Eigen::MatrixXcd& m, double rel_tol = 1e-7);

}  // namespace rcf
