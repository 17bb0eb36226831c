#include <optional>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "robustcf/baseline.hpp"
#include "robustcf/certifier.hpp"
#include "robustcf/experiment.hpp"
#include "robustcf/io.hpp"
#include "robustcf/metrics.hpp"
#include "robustcf/power.hpp"
#include "robustcf/sysmodel.hpp"
#include "robustcf/trainer.hpp"

namespace py = pybind11;
using namespace rcf;

namespace {

using CArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;

CTensor to_tensor(const CArray& a) {
  if (a.ndim() != 3) throw ShapeError("expected a (Q, I, M) complex array");
  CTensor t(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

CArray to_array(const CTensor& t) {
  CArray a({t.aps(), t.users(), t.antennas()});
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::dict pair_dict(const ChannelPair& c) {
  py::dict d;
  d["true_h"] = to_array(c.true_h);
  d["est_h"] = to_array(c.est_h);
  py::array_t<double> link({c.est_h.aps(), c.est_h.users()});
  std::copy(c.per_link_eps.begin(), c.per_link_eps.end(), link.mutable_data());
  d["per_link_eps"] = link;
  d["per_user_eps"] = py::array_t<double>(c.per_user_eps.size(), c.per_user_eps.data());
  d["eta"] = c.error_level;
  return d;
}

py::dict certificate_dict(const RobustCertificate& cert) {
  std::vector<double> alpha, beta, gamma, delta, mu;
  for (const UserCertificate& u : cert.users) {
    alpha.push_back(u.alpha);
    beta.push_back(u.beta);
    gamma.push_back(u.gamma);
    delta.push_back(u.delta);
    mu.push_back(u.mu);
  }
  py::dict d;
  d["alpha"] = py::array_t<double>(alpha.size(), alpha.data());
  d["beta"] = py::array_t<double>(beta.size(), beta.data());
  d["gamma"] = py::array_t<double>(gamma.size(), gamma.data());
  d["delta"] = py::array_t<double>(delta.size(), delta.data());
  d["mu"] = py::array_t<double>(mu.size(), mu.data());
  d["worst_case_sum_rate"] = worst_case_sum_rate(cert);
  return d;
}

ProjectionRule rule_from(const std::string& s) {
  if (s == "linear") return ProjectionRule::LinearInPower;
  if (s == "norm") return ProjectionRule::NormCorrect;
  throw std::invalid_argument("projection must be 'linear' or 'norm', got '" + s + "'");
}

py::dict row_dict(const MetricsRow& r) {
  py::dict d;
  d["method"] = r.method;
  d["sweep_value"] = r.sweep_value;
  d["replication"] = r.replication;
  d["eta"] = r.eta;
  d["Q"] = r.Q;
  d["I"] = r.I;
  d["M"] = r.M;
  d["worst_case_sum_rate"] = r.worst_case_sum_rate;
  d["q_ave"] = r.q_ave;
  d["mult_count"] = r.mult_count;
  d["seed"] = r.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "robust joint AP clustering and beamforming (C++ core)";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  py::class_<SystemConfig>(m, "SystemConfig")
      .def(py::init([](std::size_t aps, std::size_t users, std::size_t antennas, double max_power,
                       double noise_power, double area_side, double min_distance, double shadow_std_db,
                       bool small_scale_fading) {
             SystemConfig c = SystemConfig::with_uniform_noise(aps, users, antennas, noise_power);
             c.max_power = max_power;
             c.area_side = area_side;
             c.min_distance = min_distance;
             c.shadow_std_db = shadow_std_db;
             c.small_scale_fading = small_scale_fading;
             c.validate();
             return c;
           }),
           py::arg("aps") = 4, py::arg("users") = 4, py::arg("antennas") = 2, py::arg("max_power") = 1.0,
           py::arg("noise_power") = 1.0, py::arg("area_side") = 500.0, py::arg("min_distance") = 10.0,
           py::arg("shadow_std_db") = 8.0, py::arg("small_scale_fading") = true)
      .def_readwrite("num_aps", &SystemConfig::num_aps)
      .def_readwrite("num_users", &SystemConfig::num_users)
      .def_readwrite("num_antennas", &SystemConfig::num_antennas)
      .def_readwrite("max_power", &SystemConfig::max_power)
      .def_readwrite("noise_power", &SystemConfig::noise_power)
      .def_readwrite("area_side", &SystemConfig::area_side)
      .def_readwrite("min_distance", &SystemConfig::min_distance)
      .def_readwrite("shadow_std_db", &SystemConfig::shadow_std_db)
      .def_readwrite("small_scale_fading", &SystemConfig::small_scale_fading)
      .def("validate", &SystemConfig::validate)
      .def("__repr__", [](const SystemConfig& c) {
        return "SystemConfig(aps=" + std::to_string(c.num_aps) + ", users=" + std::to_string(c.num_users) +
               ", antennas=" + std::to_string(c.num_antennas) + ")";
      });

  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("stream"));

  m.def(
      "generate_dataset",
      [](const SystemConfig& sys, double eta, std::size_t count, std::uint64_t seed) {
        py::list out;
        for (const ChannelPair& c : generate_dataset(sys, eta, count, seed)) out.append(pair_dict(c));
        return out;
      },
      py::arg("system"), py::arg("eta"), py::arg("count"), py::arg("seed"),
      "List of dicts with true_h, est_h (Q x I x M complex), per_link_eps, per_user_eps and eta.");

  m.def(
      "certify",
      [](const CArray& est_h, const CArray& v, std::vector<double> eps, std::vector<double> noise) {
        return certificate_dict(certify(to_tensor(est_h), to_tensor(v), eps, noise));
      },
      py::arg("est_h"), py::arg("beamformer"), py::arg("eps"), py::arg("noise"));

  m.def("closed_form_numerator", &closed_form_numerator, py::arg("h_hat"), py::arg("v"), py::arg("eps"));
  m.def(
      "max_alpha",
      [](const Eigen::VectorXcd& h, const Eigen::VectorXcd& v, double eps) { return max_alpha(h, v, eps).value; },
      py::arg("h_hat"), py::arg("v"), py::arg("eps"));
  m.def(
      "min_beta",
      [](const Eigen::VectorXcd& h, const Eigen::MatrixXcd& interference, double eps, double sigma2) {
        return min_beta(h, interference, eps, sigma2).value;
      },
      py::arg("h_hat"), py::arg("interference"), py::arg("eps"), py::arg("sigma2"));
  m.def(
      "sampling_oracle",
      [](const CArray& est_h, const CArray& v, std::size_t user, double eps, double sigma2, std::size_t n,
         std::uint64_t seed) {
        const CTensor h = to_tensor(est_h), b = to_tensor(v);
        if (user >= h.users()) throw std::out_of_range("user index out of range");
        Rng rng = make_rng(seed);
        return sampling_oracle(h.user_vector(user), b.stacked(), static_cast<Eigen::Index>(user), eps, sigma2, n,
                               rng);
      },
      py::arg("est_h"), py::arg("beamformer"), py::arg("user"), py::arg("eps"), py::arg("sigma2"),
      py::arg("samples"), py::arg("seed"));

  m.def(
      "nominal_sinr",
      [](const CArray& h, const CArray& v, std::vector<double> noise) {
        return nominal_sinr(to_tensor(h), to_tensor(v), noise);
      },
      py::arg("h"), py::arg("beamformer"), py::arg("noise"));
  m.def(
      "sum_rate", [](std::vector<double> sinr) { return sum_rate(sinr); }, py::arg("sinr"));
  m.def(
      "q_ave", [](const CArray& v, double tol) { return q_ave(to_tensor(v), tol); }, py::arg("beamformer"),
      py::arg("tol"));
  m.def("zero_tolerance", &zero_tolerance, py::arg("max_power"));
  m.def("mult_count_rjapcbn", &mult_count_rjapcbn, py::arg("Q"), py::arg("I"), py::arg("M"), py::arg("C"),
        py::arg("L"), py::arg("kernel_w"), py::arg("kernel_h"));
  m.def(
      "power_project",
      [](const CArray& v, double max_power, const std::string& rule) {
        return to_array(power_project(to_tensor(v), max_power, rule_from(rule)));
      },
      py::arg("beamformer"), py::arg("max_power"), py::arg("rule") = "linear");

  m.def(
      "wmmse",
      [](const CArray& h, double max_power, std::vector<double> noise, int iters, const std::string& rule) {
        const WmmseResult r = wmmse_solve(to_tensor(h), max_power, noise, iters, rule_from(rule));
        py::dict d;
        d["beamformer"] = to_array(r.beamformer);
        d["unprojected"] = to_array(r.unprojected);
        d["objective_history"] = r.objective_history;
        d["rate"] = r.rate;
        return d;
      },
      py::arg("channel"), py::arg("max_power"), py::arg("noise"), py::arg("iterations") = 15,
      py::arg("rule") = "linear");

  m.def(
      "train",
      [](const SystemConfig& sys, double eta, double lambda, std::size_t epochs, std::size_t train_size,
         std::size_t test_size, int layers, int channels, int kernel, double lr, std::size_t batch_size,
         std::uint64_t seed, std::optional<std::filesystem::path> checkpoint) {
        TrainConfig cfg;
        cfg.lambda = lambda;
        cfg.epochs = epochs;
        cfg.train_size = train_size;
        cfg.test_size = test_size;
        cfg.learning_rate = lr;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        cfg.certify_every = 0;
        cfg.validate();
        const auto tr = generate_dataset(sys, eta, train_size, derive_seed(seed, 0));
        const auto te = generate_dataset(sys, eta, test_size, derive_seed(seed, 1));
        const auto Q = static_cast<int>(sys.num_aps), I = static_cast<int>(sys.num_users),
                   M = static_cast<int>(sys.num_antennas);
        const nn::NetworkSpec spec = nn::default_network(Q, I, M, layers, channels, kernel, cfg.amplification);
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = train(tr, te, spec, sys, cfg);
        }
        if (checkpoint)
          io::write_checkpoint(*checkpoint, {spec, M, res.params, {{"seed", seed}, {"train", io::to_json(cfg)}}});
        py::list curve;
        for (const EpochRecord& e : res.curve) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["train_loss"] = e.train.total;
          d["held_out_rate"] = e.held_out.rate;
          d["held_out_certified_rate"] = e.held_out.certified_rate;
          d["held_out_q_ave"] = e.held_out.q_ave;
          curve.append(d);
        }
        return curve;
      },
      py::arg("system"), py::arg("eta") = 0.05, py::arg("lam") = 0.1, py::arg("epochs") = 20,
      py::arg("train_size") = 500, py::arg("test_size") = 200, py::arg("layers") = 5, py::arg("channels") = 8,
      py::arg("kernel") = 5, py::arg("lr") = 1e-3, py::arg("batch_size") = 64, py::arg("seed"),
      py::arg("checkpoint") = py::none(), "Trains on generated data; returns the per-epoch curve.");

  m.def(
      "run_sweep",
      [](const std::string& variable, std::vector<double> grid, const std::filesystem::path& out_dir,
         std::uint64_t seed, std::vector<std::string> methods, const SystemConfig& sys, double eta,
         std::size_t replications, std::size_t train_size, std::size_t test_size, std::size_t epochs, int layers,
         int channels, int kernel) {
        ExperimentConfig c;
        c.variable = sweep_variable_from_string(variable);
        c.grid = std::move(grid);
        c.system = sys;
        c.eta = eta;
        c.replications = replications;
        c.train.train_size = train_size;
        c.train.test_size = test_size;
        c.train.epochs = epochs;
        c.network = {layers, channels, kernel};
        c.methods.clear();
        for (const std::string& s : methods) c.methods.push_back(method_from_string(s));
        c.seed = seed;
        c.validate();
        std::vector<MetricsRow> rows;
        {
          py::gil_scoped_release release;
          rows = run(c, out_dir);
        }
        py::list out;
        for (const MetricsRow& r : rows) out.append(row_dict(r));
        return out;
      },
      py::arg("variable"), py::arg("grid"), py::arg("out_dir"), py::arg("seed"),
      py::arg("methods") = std::vector<std::string>{"rjapcbn", "wmmse-imperfect"},
      py::arg("system") = SystemConfig{}, py::arg("eta") = 0.05, py::arg("replications") = 1,
      py::arg("train_size") = 500, py::arg("test_size") = 200, py::arg("epochs") = 20, py::arg("layers") = 5,
      py::arg("channels") = 8, py::arg("kernel") = 5);

  m.def(
      "read_metrics",
      [](const std::filesystem::path& p) {
        py::list out;
        for (const MetricsRow& r : read_metrics_csv(p)) out.append(row_dict(r));
        return out;
      },
      py::arg("path"));
}
