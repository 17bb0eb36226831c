#pragma once

// Sweep orchestration: data generation, training or baseline design,
// certification, metrics CSV and SVG charts.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "robustcf/nn/architecture.hpp"
#include "robustcf/sysmodel.hpp"
#include "robustcf/trainer.hpp"

namespace rcf {

enum class SweepVariable { Eta, Users, Antennas, Lambda, Kernel };
std::string to_string(SweepVariable v);
SweepVariable sweep_variable_from_string(const std::string& s);

enum class Method { Rjapcbn, WmmseImperfect, WmmsePerfect };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct NetworkShape {
  int layers = 5;
  int channels = 8;
  int kernel = 5;
};

struct ExperimentConfig {
  SweepVariable variable = SweepVariable::Eta;
  std::vector<double> grid;
  std::size_t replications = 1;
  SystemConfig system;
  TrainConfig train;
  NetworkShape network;
  double eta = 0.05;  // used when the sweep variable is not eta
  std::vector<Method> methods = {Method::Rjapcbn, Method::WmmseImperfect};
  std::size_t wmmse_iterations = 15;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MetricsRow {
  std::string method;
  double sweep_value = 0.0;
  std::size_t replication = 0;
  double eta = 0.0;
  std::size_t Q = 0, I = 0, M = 0;
  double worst_case_sum_rate = 0.0;  // bits/s/Hz, mean over the evaluation set
  double q_ave = 0.0;
  std::uint64_t mult_count = 0;  // 0 when no formula is implemented for the method
  double wall_time = 0.0;        // seconds; written to timings.csv only
  std::uint64_t seed = 0;
};

inline constexpr int kMetricsSchemaVersion = 1;

/// Header line and row encoding of metrics.csv.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& r);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// Appends rows; writes the schema comment and header when the file is new
/// and refuses to append to a file with a different header.
void append_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

/// Evaluates every method at one grid value and replication. Deterministic.
std::vector<MetricsRow> run_cell(const ExperimentConfig& cfg, double sweep_value, std::size_t replication);

/// Runs every cell, writes metrics.csv, timings.csv, config.json, rate.svg and
/// q_ave.svg under `out_dir`. Returns the rows in write order.
std::vector<MetricsRow> run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Mean-over-replication line chart, one series per method.
std::string svg_line_chart(const std::vector<MetricsRow>& rows, const std::string& x_label,
                           bool q_ave_axis);

/// Re-renders the charts and a Markdown summary from an existing metrics.csv.
std::string report(const std::filesystem::path& run_dir, const std::string& x_label);

}  // namespace rcf
