#include "robustcf/sysmodel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rcf {

void SystemConfig::validate() const {
  if (num_aps < 1 || num_users < 1 || num_antennas < 1)
    throw std::invalid_argument("SystemConfig: Q, I and M must be at least 1");
  if (!(max_power > 0.0)) throw std::invalid_argument("SystemConfig: P_max must be positive");
  if (noise_power.size() != num_users)
    throw std::invalid_argument("SystemConfig: noise_power needs one entry per user");
  for (double s : noise_power)
    if (!(s > 0.0)) throw std::invalid_argument("SystemConfig: noise power must be positive");
  if (!(area_side > 0.0)) throw std::invalid_argument("SystemConfig: area_side must be positive");
  if (min_distance < 0.0) throw std::invalid_argument("SystemConfig: min_distance must be >= 0");
  if (shadow_std_db < 0.0) throw std::invalid_argument("SystemConfig: shadow_std_db must be >= 0");
}

SystemConfig SystemConfig::with_uniform_noise(std::size_t q, std::size_t i, std::size_t m,
                                              double sigma2) {
  SystemConfig c;
  c.num_aps = q;
  c.num_users = i;
  c.num_antennas = m;
  c.noise_power.assign(i, sigma2);
  return c;
}

double Topology::distance(std::size_t q, std::size_t i) const {
  const auto& a = ap_positions.at(q);
  const auto& u = user_positions.at(i);
  return std::hypot(a[0] - u[0], a[1] - u[1]);
}

Topology sample_topology(const SystemConfig& config, Rng& rng) {
  config.validate();
  // Two points at distance >= d_min must fit inside the square.
  if (config.min_distance > config.area_side * std::sqrt(2.0))
    throw std::invalid_argument("sample_topology: min_distance exceeds the area diagonal");

  std::uniform_real_distribution<double> coord(0.0, config.area_side);
  auto draw = [&] { return Point{coord(rng), coord(rng)}; };

  Topology topo;
  topo.ap_positions.reserve(config.num_aps);
  for (std::size_t q = 0; q < config.num_aps; ++q) topo.ap_positions.push_back(draw());

  constexpr int kMaxAttempts = 100000;
  topo.user_positions.resize(config.num_users);
  for (std::size_t i = 0; i < config.num_users; ++i) {
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == kMaxAttempts)
        throw std::invalid_argument("sample_topology: could not satisfy min_distance");
      const Point u = draw();
      bool ok = true;
      for (const auto& a : topo.ap_positions) {
        const double d = std::hypot(a[0] - u[0], a[1] - u[1]);
        if (d < config.min_distance || d <= 0.0) {
          ok = false;
          break;
        }
      }
      if (ok) {
        topo.user_positions[i] = u;
        break;
      }
    }
  }
  return topo;
}

double path_gain(double d) {
  if (!(d > 0.0)) throw std::domain_error("path_gain: distance must be positive");
  const double r = 200.0 / d;
  return r * r * r;
}

double large_scale_gain(double d, Rng& rng, double shadow_std_db) {
  const double g = path_gain(d);
  if (shadow_std_db == 0.0) return g;
  std::normal_distribution<double> shadow_db(0.0, shadow_std_db);
  return g * std::pow(10.0, shadow_db(rng) / 10.0);
}

CTensor sample_channel(const SystemConfig& config, const Topology& topo, Rng& rng) {
  config.validate();
  if (topo.ap_positions.size() != config.num_aps ||
      topo.user_positions.size() != config.num_users)
    throw ShapeError("sample_channel: topology does not match the config");

  CTensor h(config.num_aps, config.num_users, config.num_antennas);
  for (std::size_t q = 0; q < config.num_aps; ++q) {
    for (std::size_t i = 0; i < config.num_users; ++i) {
      const double amp = std::sqrt(large_scale_gain(topo.distance(q, i), rng, config.shadow_std_db));
      for (std::size_t m = 0; m < config.num_antennas; ++m) {
        const cplx g = config.small_scale_fading ? complex_gaussian(rng) : cplx{1.0, 0.0};
        h(q, i, m) = amp * g;
      }
    }
  }
  return h;
}

ChannelPair perturb_channel(const CTensor& h, double eta, Rng& rng) {
  if (!(eta >= 0.0)) throw std::domain_error("perturb_channel: error level must be >= 0");
  const std::size_t Q = h.aps(), I = h.users(), M = h.antennas();

  ChannelPair out;
  out.true_h = h;
  out.est_h = h;
  out.error_level = eta;
  out.per_link_eps.assign(Q * I, 0.0);
  out.per_user_eps.assign(I, 0.0);
  if (eta == 0.0) return out;

  for (std::size_t i = 0; i < I; ++i) {
    const Eigen::VectorXcd hi = h.user_vector(i);
    const double radius = eta * hi.norm();
    const Eigen::VectorXcd dir = unit_sphere_sample(static_cast<Eigen::Index>(Q * M), rng);
    const Eigen::VectorXcd delta = radius * dir;
    out.est_h.set_user_vector(i, hi - delta);
    out.per_user_eps[i] = radius;
    // Split the radius across APs in proportion to the sampled error blocks.
    for (std::size_t q = 0; q < Q; ++q) {
      const double block = delta.segment(q * M, M).norm();
      out.per_link_eps[q * I + i] = radius > 0.0 ? radius * block / delta.norm() : 0.0;
    }
  }
  return out;
}

double epsilon_aggregate(std::span<const double> per_link) {
  double s = 0.0;
  for (double e : per_link) {
    if (e < 0.0) throw std::domain_error("epsilon_aggregate: negative radius");
    s += e * e;
  }
  return std::sqrt(s);
}

ChannelPair sample_channel_pair(const SystemConfig& config, double eta, std::uint64_t seed,
                                std::uint64_t index) {
  Rng rng = make_rng(seed, index);
  const Topology topo = sample_topology(config, rng);
  const CTensor h = sample_channel(config, topo, rng);
  return perturb_channel(h, eta, rng);
}

std::vector<ChannelPair> generate_dataset(const SystemConfig& config, double eta,
                                          std::size_t count, std::uint64_t seed) {
  std::vector<ChannelPair> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) out.push_back(sample_channel_pair(config, eta, seed, n));
  return out;
}

}  // namespace rcf
