#include "robustcf/tensor.hpp"

#include <complex>

namespace rcf {

CTensor::CTensor(std::size_t num_aps, std::size_t num_users, std::size_t num_antennas)
    : q_(num_aps), i_(num_users), m_(num_antennas),
      data_(num_aps * num_users * num_antennas, cplx{0.0, 0.0}) {}

Eigen::VectorXcd CTensor::user_vector(std::size_t i) const {
  Eigen::VectorXcd v(q_ * m_);
  for (std::size_t q = 0; q < q_; ++q)
    for (std::size_t m = 0; m < m_; ++m) v(q * m_ + m) = (*this)(q, i, m);
  return v;
}

void CTensor::set_user_vector(std::size_t i, const Eigen::VectorXcd& v) {
  if (static_cast<std::size_t>(v.size()) != q_ * m_)
    throw ShapeError("set_user_vector: expected length " + std::to_string(q_ * m_));
  for (std::size_t q = 0; q < q_; ++q)
    for (std::size_t m = 0; m < m_; ++m) (*this)(q, i, m) = v(q * m_ + m);
}

Eigen::MatrixXcd CTensor::stacked() const {
  Eigen::MatrixXcd out(q_ * m_, i_);
  for (std::size_t i = 0; i < i_; ++i) out.col(i) = user_vector(i);
  return out;
}

CTensor CTensor::from_stacked(const Eigen::MatrixXcd& m, std::size_t num_aps,
                              std::size_t num_antennas) {
  if (static_cast<std::size_t>(m.rows()) != num_aps * num_antennas)
    throw ShapeError("from_stacked: row count is not Q*M");
  CTensor t(num_aps, m.cols(), num_antennas);
  for (Eigen::Index i = 0; i < m.cols(); ++i) t.set_user_vector(i, m.col(i));
  return t;
}

double CTensor::ap_power(std::size_t q) const {
  double p = 0.0;
  for (std::size_t i = 0; i < i_; ++i)
    for (std::size_t m = 0; m < m_; ++m) p += std::norm((*this)(q, i, m));
  return p;
}

void require_same_shape(const CTensor& a, const CTensor& b, const std::string& what) {
  if (!a.same_shape(b)) throw ShapeError(what + ": tensor shapes differ");
}

}  // namespace rcf
