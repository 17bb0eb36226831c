#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "robustcf/tensor.hpp"

namespace rcf {

/// |h_i^H v_i|^2 / (sum_{j != i} |h_i^H v_j|^2 + sigma_i^2) for every user.
std::vector<double> nominal_sinr(const CTensor& h, const CTensor& v, std::span<const double> noise);

/// sum_i log2(1 + sinr_i).
double sum_rate(std::span<const double> sinr);

/// sum_i sum_q sum_m (|Re v| + |Im v|).
double l1_norm(const CTensor& v);

/// sum_rate(sinr) - lambda * l1_norm(v).
double penalized_sparse_sum_rate(std::span<const double> sinr, const CTensor& v, double lambda);

/// Default modulus below which a beamformer entry counts as zero.
double zero_tolerance(double max_power);

/// Number of complex entries with modulus < tol.
std::size_t count_zeros(const CTensor& v, double tol);

/// Q (1 - V_zero / (Q I M)): average number of serving APs per user.
double q_ave(const CTensor& v, double tol);

/// Real multiplications of one RJAPCBN forward pass:
/// Q^2 I^2 C + QIMC + QI + QIMC kw kh + (L - 1) QI C^2 kw kh.
std::uint64_t mult_count_rjapcbn(std::uint64_t Q, std::uint64_t I, std::uint64_t M, std::uint64_t C,
                                 std::uint64_t L, std::uint64_t kw, std::uint64_t kh);

}  // namespace rcf
