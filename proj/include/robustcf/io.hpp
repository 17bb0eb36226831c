#pragma once

// File formats: binary channel datasets, JSON checkpoints, certificate CSV.
// Layouts are described in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "robustcf/certifier.hpp"
#include "robustcf/nn/network.hpp"
#include "robustcf/sysmodel.hpp"
#include "robustcf/trainer.hpp"

namespace rcf::io {

inline constexpr char kDatasetMagic[8] = {'R', 'C', 'F', 'D', 'A', 'T', 'A', '\0'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr int kCheckpointVersion = 1;

struct DatasetHeader {
  std::uint32_t num_aps = 0, num_users = 0, num_antennas = 0;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t count = 0;
  double max_power = 1.0;
  std::vector<double> noise_power;  // length num_users
};

struct Dataset {
  DatasetHeader header;
  std::vector<ChannelPair> samples;
};

/// Throws std::runtime_error on I/O failure or a malformed file.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

nlohmann::json to_json(const nn::NetworkSpec& spec);
nn::NetworkSpec network_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SystemConfig& c);
nlohmann::json to_json(const TrainConfig& c);

struct Checkpoint {
  nn::NetworkSpec spec;
  int num_antennas = 0;
  nn::NetParams params;
  nlohmann::json meta = nlohmann::json::object();
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// One row per user: user,alpha,beta,gamma,delta,mu,c4_min_eig,c4_norm,c5_min_eig,c5_norm.
std::string certificate_csv(const RobustCertificate& cert);

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest representation that parses back to the same double.
std::string format_double(double x);

}  // namespace rcf::io
