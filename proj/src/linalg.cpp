#include "robustcf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcf {

double EigenSummary::norm() const { return std::max(std::abs(min), std::abs(max)); }

void require_hermitian(const Eigen::MatrixXcd& m) {
  if (m.rows() != m.cols()) throw std::domain_error("Hermitian matrix must be square");
  if (m.size() == 0) throw std::domain_error("Hermitian matrix must be non-empty");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) throw std::domain_error("matrix is not Hermitian");
}

EigenSummary eigen_extremes(const Eigen::MatrixXcd& m) {
  require_hermitian(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("Hermitian eigensolver failed");
  const auto& ev = solver.eigenvalues();  // ascending
  return {ev(0), ev(ev.size() - 1)};
}

double min_eigenvalue(const Eigen::MatrixXcd& m) { return eigen_extremes(m).min; }

bool is_psd(const Eigen::MatrixXcd& m, double rel_tol) {
  const EigenSummary s = eigen_extremes(m);
  return s.min >= -rel_tol * s.norm();
}

}  // namespace rcf
