#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rcf {

using cplx = std::complex<double>;

/// Raised when operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Complex tensor indexed (AP q, user i, antenna m), row-major.
///
/// Used for channels H, estimates Ĥ and beamformers V. The stacked per-user
/// vector h_i in C^{QM} is [h_i^1; ...; h_i^Q], see user_vector().
class CTensor {
 public:
  CTensor() = default;
  CTensor(std::size_t num_aps, std::size_t num_users, std::size_t num_antennas);

  std::size_t aps() const { return q_; }
  std::size_t users() const { return i_; }
  std::size_t antennas() const { return m_; }
  std::size_t size() const { return data_.size(); }

  cplx& operator()(std::size_t q, std::size_t i, std::size_t m) {
    return data_[(q * i_ + i) * m_ + m];
  }
  const cplx& operator()(std::size_t q, std::size_t i, std::size_t m) const {
    return data_[(q * i_ + i) * m_ + m];
  }

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }

  /// Stacked QM-vector for user i.
  Eigen::VectorXcd user_vector(std::size_t i) const;
  void set_user_vector(std::size_t i, const Eigen::VectorXcd& v);

  /// QM x I matrix whose column i is user_vector(i).
  Eigen::MatrixXcd stacked() const;
  static CTensor from_stacked(const Eigen::MatrixXcd& m, std::size_t num_aps,
                              std::size_t num_antennas);

  /// Sum over users of ||v_i^q||^2.
  double ap_power(std::size_t q) const;

  bool same_shape(const CTensor& other) const {
    return q_ == other.q_ && i_ == other.i_ && m_ == other.m_;
  }

  bool operator==(const CTensor& other) const = default;

 private:
  std::size_t q_ = 0, i_ = 0, m_ = 0;
  std::vector<cplx> data_;
};

void require_same_shape(const CTensor& a, const CTensor& b, const std::string& what);

}  // namespace rcf
