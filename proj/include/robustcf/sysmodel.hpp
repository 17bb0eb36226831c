#pragma once

// Cell-free downlink world model: AP/user placement, geographic fading
// channels and bounded CSI-error perturbations.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "robustcf/random.hpp"
#include "robustcf/tensor.hpp"

namespace rcf {

struct SystemConfig {
  std::size_t num_aps = 4;       // Q
  std::size_t num_users = 4;     // I
  std::size_t num_antennas = 2;  // M
  double max_power = 1.0;        // P_max per AP, watts
  std::vector<double> noise_power = std::vector<double>(4, 1.0);  // sigma_i^2
  double area_side = 500.0;      // meters
  double min_distance = 10.0;    // d_min, meters
  double shadow_std_db = 8.0;    // 10log10(L) ~ N(0, shadow_std_db^2)
  bool small_scale_fading = true;
  std::uint64_t rng_seed = 1;

  /// Throws std::invalid_argument if any invariant is broken.
  void validate() const;

  /// Same config with every user's noise set to `sigma2`.
  static SystemConfig with_uniform_noise(std::size_t q, std::size_t i, std::size_t m,
                                         double sigma2);
};

using Point = std::array<double, 2>;

struct Topology {
  std::vector<Point> ap_positions;
  std::vector<Point> user_positions;

  double distance(std::size_t q, std::size_t i) const;
  bool operator==(const Topology&) const = default;
};

struct ChannelPair {
  CTensor true_h;
  CTensor est_h;
  std::vector<double> per_link_eps;  // Q x I, index q * I + i
  std::vector<double> per_user_eps;  // length I
  double error_level = 0.0;          // eta

  double link_eps(std::size_t q, std::size_t i) const {
    return per_link_eps[q * est_h.users() + i];
  }
};

/// Independent uniform placement in [0, area_side]^2; pairs closer than
/// min_distance are resampled. Throws std::invalid_argument when the area
/// cannot host a valid placement.
Topology sample_topology(const SystemConfig& config, Rng& rng);

/// Deterministic path gain (200/d)^3.
double path_gain(double d);

/// (200/d)^3 * L with 10log10(L) ~ N(0, shadow_std_db^2). shadow_std_db = 0
/// disables shadowing. Throws std::domain_error for d <= 0.
double large_scale_gain(double d, Rng& rng, double shadow_std_db = 8.0);

/// h_i^q = sqrt(gain(d_i^q)) * g with g ~ CN(0, I_M) (or g = 1 when small-scale
/// fading is disabled).
CTensor sample_channel(const SystemConfig& config, const Topology& topo, Rng& rng);

/// Draws Delta h_i uniformly on the sphere of radius eta * ||h_i|| and sets
/// est = h - Delta. Throws std::domain_error for eta < 0.
ChannelPair perturb_channel(const CTensor& h, double eta, Rng& rng);

/// sqrt(sum of squares). Throws std::domain_error on a negative entry.
double epsilon_aggregate(std::span<const double> per_link);

/// One independent sample: fresh topology, channel and perturbation drawn
/// from the sub-stream `index` of `seed`.
ChannelPair sample_channel_pair(const SystemConfig& config, double eta,
                                std::uint64_t seed, std::uint64_t index);

std::vector<ChannelPair> generate_dataset(const SystemConfig& config, double eta,
                                          std::size_t count, std::uint64_t seed);

}  // namespace rcf
