#include "robustcf/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace rcf {

std::vector<double> nominal_sinr(const CTensor& h, const CTensor& v, std::span<const double> noise) {
  require_same_shape(h, v, "nominal_sinr");
  const std::size_t I = h.users();
  if (noise.size() != I) throw ShapeError("nominal_sinr: noise needs one entry per user");
  const Eigen::MatrixXcd H = h.stacked();
  const Eigen::MatrixXcd V = v.stacked();
  const Eigen::MatrixXcd G = H.adjoint() * V;  // G(i, j) = h_i^H v_j
  std::vector<double> out(I);
  for (std::size_t i = 0; i < I; ++i) {
    double interf = 0.0;
    for (std::size_t j = 0; j < I; ++j)
      if (j != i) interf += std::norm(G(i, j));
    out[i] = std::norm(G(i, i)) / (interf + noise[i]);
  }
  return out;
}

double sum_rate(std::span<const double> sinr) {
  double r = 0.0;
  for (double s : sinr) {
    if (s < 0.0) throw std::domain_error("sum_rate: negative SINR");
    r += std::log2(1.0 + s);
  }
  return r;
}

double l1_norm(const CTensor& v) {
  double s = 0.0;
  for (const cplx& z : v.data()) s += std::abs(z.real()) + std::abs(z.imag());
  return s;
}

double penalized_sparse_sum_rate(std::span<const double> sinr, const CTensor& v, double lambda) {
  return sum_rate(sinr) - lambda * l1_norm(v);
}

double zero_tolerance(double max_power) { return 1e-9 * std::sqrt(max_power); }

std::size_t count_zeros(const CTensor& v, double tol) {
  std::size_t n = 0;
  for (const cplx& z : v.data())
    if (std::abs(z) < tol) ++n;
  return n;
}

double q_ave(const CTensor& v, double tol) {
  if (v.size() == 0) return 0.0;
  const double Q = static_cast<double>(v.aps());
  return Q * (1.0 - static_cast<double>(count_zeros(v, tol)) / static_cast<double>(v.size()));
}

std::uint64_t mult_count_rjapcbn(std::uint64_t Q, std::uint64_t I, std::uint64_t M, std::uint64_t C,
                                 std::uint64_t L, std::uint64_t kw, std::uint64_t kh) {
  if (Q == 0 || I == 0 || M == 0 || C == 0 || L == 0 || kw == 0 || kh == 0)
    throw std::invalid_argument("mult_count_rjapcbn: arguments must be positive");
  const std::uint64_t qi = Q * I;
  const std::uint64_t k = kw * kh;
  return qi * qi * C + qi * M * C + qi + qi * M * C * k + (L - 1) * qi * C * C * k;
}

}  // namespace rcf
