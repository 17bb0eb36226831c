#include "robustcf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "robustcf/baseline.hpp"
#include "robustcf/certifier.hpp"
#include "robustcf/io.hpp"
#include "robustcf/metrics.hpp"

namespace rcf {

namespace fs = std::filesystem;

std::string to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::Eta: return "eta";
    case SweepVariable::Users: return "users";
    case SweepVariable::Antennas: return "antennas";
    case SweepVariable::Lambda: return "lambda";
    case SweepVariable::Kernel: return "kernel";
  }
  return "unknown";
}

SweepVariable sweep_variable_from_string(const std::string& s) {
  for (auto v : {SweepVariable::Eta, SweepVariable::Users, SweepVariable::Antennas,
                 SweepVariable::Lambda, SweepVariable::Kernel})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown sweep variable: " + s);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Rjapcbn: return "rjapcbn";
    case Method::WmmseImperfect: return "wmmse-imperfect";
    case Method::WmmsePerfect: return "wmmse-perfect";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  for (auto m : {Method::Rjapcbn, Method::WmmseImperfect, Method::WmmsePerfect})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method: " + s);
}

void ExperimentConfig::validate() const {
  if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (methods.empty()) throw std::invalid_argument("no methods selected");
  for (double v : grid) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite grid value");
    const bool integral = variable == SweepVariable::Users || variable == SweepVariable::Antennas ||
                          variable == SweepVariable::Kernel;
    if (integral && (v < 1 || v != std::floor(v)))
      throw std::invalid_argument("grid value " + io::format_double(v) + " must be a positive integer for " +
                                  to_string(variable));
    if (!integral && v < 0) throw std::invalid_argument("grid values must be >= 0");
  }
  system.validate();
  train.validate();
}

std::string metrics_csv_header() {
  return "method,sweep_value,replication,eta,Q,I,M,worst_case_sum_rate,q_ave,mult_count,seed";
}

std::string metrics_csv_row(const MetricsRow& r) {
  std::ostringstream os;
  os << r.method << ',' << io::format_double(r.sweep_value) << ',' << r.replication << ','
     << io::format_double(r.eta) << ',' << r.Q << ',' << r.I << ',' << r.M << ','
     << io::format_double(r.worst_case_sum_rate) << ',' << io::format_double(r.q_ave) << ','
     << r.mult_count << ',' << r.seed;
  return os.str();
}

namespace {

std::string schema_line() { return "# robustcf-metrics v" + std::to_string(kMetricsSchemaVersion); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open metrics file: " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != schema_line())
    throw std::runtime_error("metrics file lacks the expected schema line: " + path.string());
  if (!std::getline(is, line) || line != metrics_csv_header())
    throw std::runtime_error("metrics file has an unexpected header: " + path.string());
  std::vector<MetricsRow> rows;
  std::size_t lineno = 2;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 11)
      throw std::runtime_error("metrics line " + std::to_string(lineno) + ": expected 11 fields");
    try {
      MetricsRow r;
      r.method = f[0];
      r.sweep_value = std::stod(f[1]);
      r.replication = std::stoul(f[2]);
      r.eta = std::stod(f[3]);
      r.Q = std::stoul(f[4]);
      r.I = std::stoul(f[5]);
      r.M = std::stoul(f[6]);
      r.worst_case_sum_rate = std::stod(f[7]);
      r.q_ave = std::stod(f[8]);
      r.mult_count = std::stoull(f[9]);
      r.seed = std::stoull(f[10]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw std::runtime_error("metrics line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

void append_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  if (!fresh) read_metrics_csv(path);  // validates the header
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  if (fresh) os << schema_line() << '\n' << metrics_csv_header() << '\n';
  for (const MetricsRow& r : rows) os << metrics_csv_row(r) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

namespace {

struct Cell {
  SystemConfig system;
  TrainConfig train;
  NetworkShape network;
  double eta;
};

Cell apply_sweep(const ExperimentConfig& cfg, double value) {
  Cell c{cfg.system, cfg.train, cfg.network, cfg.eta};
  switch (cfg.variable) {
    case SweepVariable::Eta: c.eta = value; break;
    case SweepVariable::Users:
      c.system.num_users = static_cast<std::size_t>(value);
      c.system.noise_power.assign(c.system.num_users, cfg.system.noise_power.front());
      break;
    case SweepVariable::Antennas: c.system.num_antennas = static_cast<std::size_t>(value); break;
    case SweepVariable::Lambda: c.train.lambda = value; break;
    case SweepVariable::Kernel: c.network.kernel = static_cast<int>(value); break;
  }
  return c;
}

double mean_certified_rate(const std::vector<ChannelPair>& data, const std::vector<CTensor>& v,
                           const std::vector<double>& noise, bool perfect) {
  double s = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const std::vector<double> zero(noise.size(), 0.0);
    const CTensor& h = perfect ? data[n].true_h : data[n].est_h;
    const auto& eps = perfect ? zero : data[n].per_user_eps;
    s += worst_case_sum_rate(certify(h, v[n], eps, noise));
  }
  return s / static_cast<double>(data.size());
}

}  // namespace

namespace {

MetricsRow run_method(const Cell& cell, Method method, const std::vector<ChannelPair>& train_set,
                      const std::vector<ChannelPair>& test_set, std::size_t wmmse_iters,
                      std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const SystemConfig& sys = cell.system;
  MetricsRow r;
  r.method = to_string(method);
  r.eta = cell.eta;
  r.Q = sys.num_aps;
  r.I = sys.num_users;
  r.M = sys.num_antennas;
  r.seed = seed;

  if (method == Method::Rjapcbn) {
    const auto Q = static_cast<int>(sys.num_aps), I = static_cast<int>(sys.num_users),
               M = static_cast<int>(sys.num_antennas);
    const nn::NetworkSpec spec = nn::default_network(Q, I, M, cell.network.layers, cell.network.channels,
                                                     cell.network.kernel, cell.train.amplification);
    TrainConfig tc = cell.train;
    tc.seed = seed;
    tc.certify_every = 0;
    const TrainResult res = train(train_set, {}, spec, sys, tc);
    const LossReport rep = evaluate(test_set, spec, res.params, sys, tc.lambda, tc.rule, true);
    r.worst_case_sum_rate = rep.certified_rate;
    r.q_ave = rep.q_ave;
    r.mult_count = mult_count_rjapcbn(sys.num_aps, sys.num_users, sys.num_antennas,
                                      static_cast<std::uint64_t>(cell.network.channels),
                                      static_cast<std::uint64_t>(cell.network.layers),
                                      static_cast<std::uint64_t>(cell.network.kernel),
                                      static_cast<std::uint64_t>(cell.network.kernel));
  } else {
    const bool perfect = method == Method::WmmsePerfect;
    std::vector<CTensor> v;
    for (const ChannelPair& c : test_set)
      v.push_back(wmmse_solve(perfect ? c.true_h : c.est_h, sys.max_power, sys.noise_power,
                              static_cast<int>(wmmse_iters), cell.train.rule)
                      .beamformer);
    r.worst_case_sum_rate = mean_certified_rate(test_set, v, sys.noise_power, perfect);
    double qa = 0.0;
    for (const CTensor& t : v) qa += q_ave(t, zero_tolerance(sys.max_power));
    r.q_ave = qa / static_cast<double>(v.size());
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

std::vector<MetricsRow> run_cell(const ExperimentConfig& cfg, double sweep_value,
                                 std::size_t replication) {
  const Cell cell = apply_sweep(cfg, sweep_value);
  cell.system.validate();
  // Replication r sees the same random streams at every grid value.
  const std::uint64_t seed = derive_seed(cfg.seed, replication);
  std::vector<ChannelPair> train_set;
  if (std::find(cfg.methods.begin(), cfg.methods.end(), Method::Rjapcbn) != cfg.methods.end())
    train_set = generate_dataset(cell.system, cell.eta, cell.train.train_size, derive_seed(seed, 0));
  const std::vector<ChannelPair> test_set =
      generate_dataset(cell.system, cell.eta, cell.train.test_size, derive_seed(seed, 1));
  std::vector<MetricsRow> rows;
  for (Method m : cfg.methods) {
    MetricsRow r = run_method(cell, m, train_set, test_set, cfg.wmmse_iterations, seed);
    r.sweep_value = sweep_value;
    r.replication = replication;
    rows.push_back(r);
  }
  return rows;
}

std::vector<MetricsRow> run(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const fs::path metrics = out_dir / "metrics.csv";
  if (fs::exists(metrics)) fs::remove(metrics);

  nlohmann::json echo = {{"variable", to_string(cfg.variable)},
                         {"grid", cfg.grid},
                         {"replications", cfg.replications},
                         {"eta", cfg.eta},
                         {"seed", cfg.seed},
                         {"wmmse_iterations", cfg.wmmse_iterations},
                         {"network",
                          {{"layers", cfg.network.layers},
                           {"channels", cfg.network.channels},
                           {"kernel", cfg.network.kernel}}},
                         {"system", io::to_json(cfg.system)},
                         {"train", io::to_json(cfg.train)}};
  for (Method m : cfg.methods) echo["methods"].push_back(to_string(m));
  io::write_text(out_dir / "config.json", echo.dump(2) + "\n");

  std::vector<MetricsRow> all;
  std::ostringstream timings;
  timings << "method,sweep_value,replication,wall_time_s\n";
  for (double value : cfg.grid) {
    for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
      const std::vector<MetricsRow> rows = run_cell(cfg, value, rep);
      for (const MetricsRow& r : rows)
        timings << r.method << ',' << io::format_double(value) << ',' << rep << ','
                << io::format_double(r.wall_time) << '\n';
      append_metrics_csv(metrics, rows);
      all.insert(all.end(), rows.begin(), rows.end());
    }
  }
  io::write_text(out_dir / "timings.csv", timings.str());
  io::write_text(out_dir / "rate.svg", svg_line_chart(all, to_string(cfg.variable), false));
  io::write_text(out_dir / "q_ave.svg", svg_line_chart(all, to_string(cfg.variable), true));
  return all;
}

namespace {

struct Series {
  std::string method;
  std::vector<std::pair<double, double>> points;  // (x, mean y)
};

std::vector<Series> aggregate(const std::vector<MetricsRow>& rows, bool q_axis) {
  std::map<std::string, std::map<double, std::pair<double, int>>> acc;
  std::vector<std::string> order;
  for (const MetricsRow& r : rows) {
    if (!acc.count(r.method)) order.push_back(r.method);
    auto& cell = acc[r.method][r.sweep_value];
    cell.first += q_axis ? r.q_ave : r.worst_case_sum_rate;
    cell.second += 1;
  }
  std::vector<Series> out;
  for (const std::string& m : order) {
    Series s{m, {}};
    for (const auto& [x, sum] : acc[m]) s.points.emplace_back(x, sum.first / sum.second);
    out.push_back(std::move(s));
  }
  return out;
}

std::string tick(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

std::string svg_line_chart(const std::vector<MetricsRow>& rows, const std::string& x_label,
                           bool q_ave_axis) {
  const std::vector<Series> series = aggregate(rows, q_ave_axis);
  const double W = 640, H = 420, left = 70, right = 170, top = 30, bottom = 60;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const Series& s : series)
    for (const auto& [x, y] : s.points) {
      if (!any) {
        xmin = xmax = x;
        ymax = y;
        any = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  ymax *= 1.05;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
     << top + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
       << tick(xv) << "</text>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << tick(yv)
       << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << py(yv) << "\" x2=\"" << left + pw << "\" y2=\""
       << py(yv) << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
     << x_label << "</text>\n";
  os << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << top + ph / 2 << ")\">"
     << (q_ave_axis ? "Q_ave (serving APs)" : "worst-case sum rate (bits/s/Hz)") << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* col = colors[s % 5];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[s].points) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    for (const auto& [x, y] : series[s].points)
      os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35
       << "\" y2=\"" << ly << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4 << "\">" << series[s].method
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string report(const fs::path& run_dir, const std::string& x_label) {
  const std::vector<MetricsRow> rows = read_metrics_csv(run_dir / "metrics.csv");
  io::write_text(run_dir / "rate.svg", svg_line_chart(rows, x_label, false));
  io::write_text(run_dir / "q_ave.svg", svg_line_chart(rows, x_label, true));
  std::ostringstream os;
  os << "| method | " << x_label << " | worst-case sum rate | Q_ave |\n|---|---|---|---|\n";
  const auto rates = aggregate(rows, false), qs = aggregate(rows, true);
  for (std::size_t s = 0; s < rates.size(); ++s)
    for (std::size_t k = 0; k < rates[s].points.size(); ++k)
      os << "| " << rates[s].method << " | " << tick(rates[s].points[k].first) << " | "
         << tick(rates[s].points[k].second) << " | " << tick(qs[s].points[k].second) << " |\n";
  io::write_text(run_dir / "summary.md", os.str());
  return os.str();
}

}  // namespace rcf
