#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "robustcf/baseline.hpp"
#include "robustcf/experiment.hpp"
#include "robustcf/metrics.hpp"

using namespace rcf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rcf-exp-test" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig tiny(SweepVariable var, std::vector<double> grid) {
  ExperimentConfig c;
  c.variable = var;
  c.grid = std::move(grid);
  c.system = SystemConfig::with_uniform_noise(3, 3, 2, 1.0);
  c.train.train_size = 32;
  c.train.test_size = 12;
  c.train.epochs = 2;
  c.train.batch_size = 16;
  c.network = {2, 4, 3};
  c.wmmse_iterations = 8;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("names round trip") {
  for (auto v : {SweepVariable::Eta, SweepVariable::Users, SweepVariable::Antennas, SweepVariable::Lambda,
                 SweepVariable::Kernel})
    CHECK(sweep_variable_from_string(to_string(v)) == v);
  for (auto m : {Method::Rjapcbn, Method::WmmseImperfect, Method::WmmsePerfect})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(sweep_variable_from_string("snr"), std::invalid_argument);
  CHECK_THROWS_AS(method_from_string("zf"), std::invalid_argument);
}

TEST_CASE("config validation") {
  ExperimentConfig c = tiny(SweepVariable::Eta, {0.1});
  CHECK_NOTHROW(c.validate());
  c.grid.clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny(SweepVariable::Users, {2.5});
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny(SweepVariable::Eta, {-0.1});
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny(SweepVariable::Eta, {0.1});
  c.replications = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny(SweepVariable::Eta, {0.1});
  c.methods.clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("metrics CSV round trip and header guard") {
  MetricsRow r{"wmmse-imperfect", 0.05, 2, 0.05, 4, 4, 2, 3.25, 1.5, 0, 1.0, 123};
  const fs::path dir = scratch("csv");
  const fs::path p = dir / "metrics.csv";
  append_metrics_csv(p, {r});
  append_metrics_csv(p, {r, r});
  const auto rows = read_metrics_csv(p);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].method == r.method);
  CHECK(rows[0].worst_case_sum_rate == 3.25);
  CHECK(rows[0].seed == 123);
  CHECK(rows[0].wall_time == 0.0);  // not stored
  const std::string text = slurp(p);
  CHECK(text.rfind("# robustcf-metrics v1\n" + metrics_csv_header() + "\n", 0) == 0);

  const fs::path other = dir / "other.csv";
  std::ofstream(other) << "# robustcf-metrics v1\nmethod,rate\n";
  CHECK_THROWS_AS(append_metrics_csv(other, {r}), std::runtime_error);
  std::ofstream(other, std::ios::trunc) << "# robustcf-metrics v1\n" << metrics_csv_header() << "\nx,1\n";
  CHECK_THROWS_AS(read_metrics_csv(other), std::runtime_error);
}

TEST_CASE("zero error: certified rate equals the nominal sum rate") {
  ExperimentConfig c = tiny(SweepVariable::Eta, {0.0});
  c.methods = {Method::WmmseImperfect};
  const auto rows = run_cell(c, 0.0, 0);
  REQUIRE(rows.size() == 1);

  const std::uint64_t seed = derive_seed(c.seed, 0);
  const auto test = generate_dataset(c.system, 0.0, c.train.test_size, derive_seed(seed, 1));
  double want = 0.0;
  for (const ChannelPair& p : test) {
    const CTensor v = wmmse_solve(p.est_h, c.system.max_power, c.system.noise_power, 8).beamformer;
    want += sum_rate(nominal_sinr(p.est_h, v, c.system.noise_power));
  }
  want /= static_cast<double>(test.size());
  CHECK(rows[0].worst_case_sum_rate == doctest::Approx(want).epsilon(1e-6));
  CHECK(rows[0].seed == seed);
}

TEST_CASE("certified rate falls as the error level grows") {
  ExperimentConfig c = tiny(SweepVariable::Eta, {0.0, 0.05, 0.1});
  c.methods = {Method::WmmseImperfect, Method::WmmsePerfect};
  std::vector<MetricsRow> rows;
  for (double eta : c.grid) {
    const auto r = run_cell(c, eta, 0);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  // rows: (imperfect, perfect) for each eta
  for (std::size_t k = 2; k < rows.size(); ++k) CHECK(rows[k].worst_case_sum_rate <= rows[k - 2].worst_case_sum_rate + 1e-9);
  for (const MetricsRow& r : rows) {
    CHECK(r.q_ave >= 0.0);
    CHECK(r.q_ave <= 3.0);
    CHECK(r.worst_case_sum_rate >= 0.0);
    CHECK(r.mult_count == 0);
  }
}

TEST_CASE("sweep output is reproducible byte for byte") {
  ExperimentConfig c = tiny(SweepVariable::Lambda, {0.01, 0.1, 1.0});
  c.methods = {Method::Rjapcbn};
  const fs::path a = scratch("run-a"), b = scratch("run-b");
  const auto rows = run(c, a);
  run(c, b);
  CHECK(rows.size() == 3 * c.replications);
  for (const char* f : {"metrics.csv", "config.json", "rate.svg", "q_ave.svg"}) {
    CAPTURE(f);
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(fs::exists(a / "timings.csv"));
  CHECK(read_metrics_csv(a / "metrics.csv").size() == 3);
  CHECK(rows[0].mult_count == mult_count_rjapcbn(3, 3, 2, 4, 2, 3, 3));
  CHECK(slurp(a / "rate.svg").find("<svg") != std::string::npos);

  const std::string md = report(a, "lambda");
  CHECK(md.find("rjapcbn") != std::string::npos);
  CHECK(fs::exists(a / "summary.md"));
  CHECK(slurp(a / "rate.svg") == slurp(b / "rate.svg"));
}

TEST_CASE("shape sweeps change the system") {
  ExperimentConfig c = tiny(SweepVariable::Users, {2, 4});
  c.methods = {Method::WmmseImperfect};
  CHECK(run_cell(c, 2, 0)[0].I == 2);
  CHECK(run_cell(c, 4, 0)[0].I == 4);
  c = tiny(SweepVariable::Antennas, {1});
  c.methods = {Method::WmmseImperfect};
  CHECK(run_cell(c, 1, 0)[0].M == 1);
}

TEST_CASE("svg chart handles a single point") {
  MetricsRow r{"wmmse-imperfect", 1.0, 0, 0.05, 2, 2, 1, 0.0, 0.0, 0, 0.0, 1};
  const std::string svg = svg_line_chart({r}, "eta", false);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);
}
