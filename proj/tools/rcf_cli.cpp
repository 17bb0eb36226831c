// rcf: data generation, training, certification, baselines and sweeps.
//
// Relative output paths are resolved under $RCF_OUTPUT_ROOT (default: ./rcf-out).

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "robustcf/baseline.hpp"
#include "robustcf/certifier.hpp"
#include "robustcf/experiment.hpp"
#include "robustcf/io.hpp"
#include "robustcf/metrics.hpp"
#include "robustcf/trainer.hpp"

namespace fs = std::filesystem;
using namespace rcf;

namespace {

fs::path output_root() {
  const char* env = std::getenv("RCF_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("rcf-out");
}

fs::path resolve_out(const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : output_root() / path;
}

struct SystemFlags {
  std::size_t aps = 4, users = 4, antennas = 2;
  double max_power = 1.0;
  std::vector<double> noise{1.0};
  double area_side = 500.0, min_distance = 10.0, shadow_std_db = 8.0;
  bool no_small_scale = false;
  double eta = 0.05;

  void add(CLI::App* app) {
    app->add_option("--aps", aps, "number of access points Q")->check(CLI::PositiveNumber);
    app->add_option("--users", users, "number of users I")->check(CLI::PositiveNumber);
    app->add_option("--antennas", antennas, "antennas per AP M")->check(CLI::PositiveNumber);
    app->add_option("--max-power", max_power, "per-AP power budget P_max (W)");
    app->add_option("--noise-power", noise,
                    "noise power per user (W); one value is applied to every user")
        ->expected(1, -1);
    app->add_option("--area-side", area_side, "side of the square deployment area (m)");
    app->add_option("--min-distance", min_distance, "minimum AP-user distance (m)");
    app->add_option("--shadow-std-db", shadow_std_db, "shadowing standard deviation (dB)");
    app->add_flag("--no-small-scale-fading", no_small_scale, "unit small-scale gain");
    app->add_option("--eta", eta, "CSI error level ||dh||/||h||")->check(CLI::NonNegativeNumber);
  }

  SystemConfig build(std::uint64_t seed) const {
    SystemConfig c;
    c.num_aps = aps;
    c.num_users = users;
    c.num_antennas = antennas;
    c.max_power = max_power;
    if (noise.size() == 1) c.noise_power.assign(users, noise.front());
    else c.noise_power = noise;
    c.area_side = area_side;
    c.min_distance = min_distance;
    c.shadow_std_db = shadow_std_db;
    c.small_scale_fading = !no_small_scale;
    c.rng_seed = seed;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string projection = "linear";
  int layers = 5, channels = 8, kernel = 5;
  std::string pool = "mean";
  bool raw_csi = false;

  void add(CLI::App* app) {
    app->add_option("--lambda", cfg.lambda, "sparsity weight")->check(CLI::NonNegativeNumber);
    app->add_option("--amplification", cfg.amplification, "gate slope k")->check(CLI::PositiveNumber);
    app->add_option("--lr", cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    app->add_option("--batch-size", cfg.batch_size)->check(CLI::PositiveNumber);
    app->add_option("--epochs", cfg.epochs);
    app->add_option("--train-size", cfg.train_size)->check(CLI::PositiveNumber);
    app->add_option("--test-size", cfg.test_size);
    app->add_option("--certify-every", cfg.certify_every,
                    "epochs between certified held-out evaluations (0: last epoch only)");
    app->add_option("--projection", projection, "power projection rule")
        ->check(CLI::IsMember({"linear", "norm"}));
    app->add_option("--layers", layers, "convolution units L")->check(CLI::PositiveNumber);
    app->add_option("--channels", channels, "hidden channels C")->check(CLI::PositiveNumber);
    app->add_option("--kernel", kernel, "square kernel size")->check(CLI::PositiveNumber);
    app->add_option("--pool", pool)->check(CLI::IsMember({"mean", "max"}));
    app->add_flag("--raw-csi", raw_csi, "feed unnormalised CSI magnitudes to the network");
  }

  TrainConfig build(std::uint64_t seed) {
    cfg.seed = seed;
    cfg.rule = projection == "norm" ? ProjectionRule::NormCorrect : ProjectionRule::LinearInPower;
    cfg.validate();
    return cfg;
  }

  nn::NetworkSpec spec(std::size_t Q, std::size_t I, std::size_t M) const {
    nn::NetworkSpec s = nn::default_network(static_cast<int>(Q), static_cast<int>(I),
                                            static_cast<int>(M), layers, channels, kernel,
                                            cfg.amplification);
    s.pool = pool == "max" ? nn::PoolKind::Max : nn::PoolKind::Mean;
    s.normalize_csi = !raw_csi;
    return s;
  }
};

SystemConfig system_from_header(const io::DatasetHeader& h) {
  SystemConfig c;
  c.num_aps = h.num_aps;
  c.num_users = h.num_users;
  c.num_antennas = h.num_antennas;
  c.max_power = h.max_power;
  c.noise_power = h.noise_power;
  c.rng_seed = h.seed;
  c.validate();
  return c;
}

io::Dataset make_dataset(const SystemConfig& sys, double eta, std::size_t count, std::uint64_t seed) {
  io::Dataset d;
  d.header.num_aps = static_cast<std::uint32_t>(sys.num_aps);
  d.header.num_users = static_cast<std::uint32_t>(sys.num_users);
  d.header.num_antennas = static_cast<std::uint32_t>(sys.num_antennas);
  d.header.eta = eta;
  d.header.seed = seed;
  d.header.count = count;
  d.header.max_power = sys.max_power;
  d.header.noise_power = sys.noise_power;
  d.samples = generate_dataset(sys, eta, count, seed);
  return d;
}

std::string fmt(double x) { return io::format_double(x); }

std::string curve_header() {
  return "epoch,loss,rate,sparsity,certified_rate,q_ave,test_loss,test_rate,test_sparsity,"
         "test_certified_rate,test_q_ave";
}

std::string curve_row(const EpochRecord& e) {
  std::ostringstream os;
  os << e.epoch << ',' << fmt(e.train.total) << ',' << fmt(e.train.rate) << ','
     << fmt(e.train.sparsity) << ',' << fmt(e.train.certified_rate) << ',' << fmt(e.train.q_ave)
     << ',' << fmt(e.held_out.total) << ',' << fmt(e.held_out.rate) << ','
     << fmt(e.held_out.sparsity) << ',' << fmt(e.held_out.certified_rate) << ','
     << fmt(e.held_out.q_ave);
  return os.str();
}

int cmd_gen_data(SystemFlags& sf, std::size_t count, std::uint64_t seed, const std::string& out) {
  const SystemConfig sys = sf.build(seed);
  const io::Dataset d = make_dataset(sys, sf.eta, count, seed);
  const fs::path path = resolve_out(out);
  io::write_dataset(path, d);
  std::cout << "wrote " << count << " channel pairs to " << path.string() << '\n';
  return 0;
}

int cmd_train(SystemFlags& sf, TrainFlags& tf, std::uint64_t seed, const std::string& data,
              const std::string& test_data, const std::string& out) {
  const TrainConfig cfg = tf.build(seed);
  SystemConfig sys;
  std::vector<ChannelPair> train_set, test_set;
  if (!data.empty()) {
    io::Dataset d = io::read_dataset(data);
    sys = system_from_header(d.header);
    train_set = std::move(d.samples);
    if (!test_data.empty()) {
      io::Dataset t = io::read_dataset(test_data);
      if (t.header.num_aps != d.header.num_aps || t.header.num_users != d.header.num_users ||
          t.header.num_antennas != d.header.num_antennas)
        throw std::runtime_error("test data dimensions differ from the training data");
      test_set = std::move(t.samples);
    }
  } else {
    sys = sf.build(seed);
    train_set = generate_dataset(sys, sf.eta, cfg.train_size, derive_seed(seed, 0));
    test_set = generate_dataset(sys, sf.eta, cfg.test_size, derive_seed(seed, 1));
  }
  const nn::NetworkSpec spec = tf.spec(sys.num_aps, sys.num_users, sys.num_antennas);
  const fs::path dir = resolve_out(out);
  fs::create_directories(dir / "checkpoints");
  io::write_text(dir / "config.json",
                 nlohmann::json{{"system", io::to_json(sys)},
                                {"train", io::to_json(cfg)},
                                {"network", io::to_json(spec)},
                                {"data", data},
                                {"test_data", test_data}}
                         .dump(2) +
                     "\n");
  std::ofstream curve(dir / "curve.csv");
  if (!curve) throw std::runtime_error("cannot write " + (dir / "curve.csv").string());
  curve << curve_header() << '\n';
  auto checkpoint = [&](const nn::NetParams& p, const fs::path& path, std::size_t epoch) {
    io::Checkpoint ck{spec, static_cast<int>(sys.num_antennas), p,
                      {{"epoch", epoch}, {"seed", seed}, {"train", io::to_json(cfg)}}};
    io::write_checkpoint(path, ck);
  };
  try {
    const TrainResult res = train(train_set, test_set, spec, sys, cfg, [&](const EpochRecord& e, const nn::NetParams& p) {
      curve << curve_row(e) << '\n' << std::flush;
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << e.epoch << ".json";
      checkpoint(p, dir / "checkpoints" / name.str(), e.epoch);
      std::cout << "epoch " << e.epoch << " loss " << fmt(e.train.total) << " held-out certified rate "
                << fmt(e.held_out.certified_rate) << " Q_ave " << fmt(e.held_out.q_ave) << '\n';
    });
    checkpoint(res.params, dir / "final.json", cfg.epochs);
  } catch (const TrainingDiverged& e) {
    checkpoint(e.last_good(), dir / "last_good.json", e.epoch() - 1);
    throw;
  }
  std::cout << "run directory: " << dir.string() << '\n';
  return 0;
}

std::vector<CTensor> network_beamformers(const io::Dataset& d, const std::string& checkpoint) {
  const io::Checkpoint ck = io::read_checkpoint(checkpoint);
  if (ck.num_antennas != static_cast<int>(d.header.num_antennas))
    throw std::runtime_error("checkpoint antenna count differs from the dataset");
  std::vector<CTensor> h;
  for (const ChannelPair& c : d.samples) h.push_back(c.est_h);
  const std::string rule = ck.meta.value("train", nlohmann::json::object()).value("projection", "linear");
  const nn::ForwardOptions opt{nn::Mode::Eval, d.header.max_power,
                               rule == "norm" ? ProjectionRule::NormCorrect : ProjectionRule::LinearInPower};
  return nn::forward_batch(h, ck.spec, ck.params, opt).beamformers();
}

int cmd_certify(const std::string& data, const std::string& checkpoint, bool use_wmmse, int iters,
                std::size_t oracle_samples, std::uint64_t seed, bool seed_given, const std::string& out) {
  if (checkpoint.empty() == !use_wmmse)
    throw std::runtime_error("choose exactly one of --checkpoint or --wmmse");
  if (oracle_samples > 0 && !seed_given)
    throw std::runtime_error("--seed is required with --oracle-samples");
  const io::Dataset d = io::read_dataset(data);
  std::vector<CTensor> v;
  if (use_wmmse) {
    for (const ChannelPair& c : d.samples)
      v.push_back(wmmse_solve(c.est_h, d.header.max_power, d.header.noise_power, iters).beamformer);
  } else {
    v = network_beamformers(d, checkpoint);
  }
  std::ostringstream csv;
  csv << "sample,user,alpha,beta,gamma,delta,mu,c4_min_eig,c4_norm,c5_min_eig,c5_norm"
      << (oracle_samples ? ",sampled_min" : "") << '\n';
  Rng rng = make_rng(seed, 4);
  double total = 0.0;
  std::size_t violations = 0;
  for (std::size_t n = 0; n < d.samples.size(); ++n) {
    const ChannelPair& c = d.samples[n];
    const RobustCertificate cert = certify(c.est_h, v[n], c.per_user_eps, d.header.noise_power);
    total += worst_case_sum_rate(cert);
    const Eigen::MatrixXcd H = c.est_h.stacked(), V = v[n].stacked();
    for (std::size_t i = 0; i < cert.users.size(); ++i) {
      const UserCertificate& u = cert.users[i];
      csv << n << ',' << i;
      for (double x : {u.alpha, u.beta, u.gamma, u.delta, u.mu, u.c4_min_eig, u.c4_norm, u.c5_min_eig,
                       u.c5_norm})
        csv << ',' << fmt(x);
      if (oracle_samples) {
        const double s = sampling_oracle(H.col(static_cast<Eigen::Index>(i)), V, i, c.per_user_eps[i],
                                         d.header.noise_power[i], oracle_samples, rng);
        csv << ',' << fmt(s);
        if (u.gamma > s + 1e-6) ++violations;
      }
      csv << '\n';
    }
  }
  const fs::path path = resolve_out(out);
  io::write_text(path, csv.str());
  std::cout << "mean certified worst-case sum rate " << fmt(total / static_cast<double>(d.samples.size()))
            << " bits/s/Hz over " << d.samples.size() << " samples\n";
  if (oracle_samples) std::cout << "sampling-oracle violations: " << violations << '\n';
  std::cout << "certificates: " << path.string() << '\n';
  return violations == 0 ? 0 : 2;
}

int cmd_baseline(const std::string& data, int iters, bool perfect, const std::string& projection,
                 const std::string& out) {
  const io::Dataset d = io::read_dataset(data);
  const ProjectionRule rule =
      projection == "norm" ? ProjectionRule::NormCorrect : ProjectionRule::LinearInPower;
  std::ostringstream csv;
  csv << "sample,nominal_rate,certified_rate,q_ave\n";
  double sum_nom = 0.0, sum_cert = 0.0, sum_q = 0.0;
  for (std::size_t n = 0; n < d.samples.size(); ++n) {
    const ChannelPair& c = d.samples[n];
    const CTensor& h = perfect ? c.true_h : c.est_h;
    const WmmseResult r = wmmse_solve(h, d.header.max_power, d.header.noise_power, iters, rule);
    const std::vector<double> zero(c.per_user_eps.size(), 0.0);
    const double cert = worst_case_sum_rate(
        certify(h, r.beamformer, perfect ? zero : c.per_user_eps, d.header.noise_power));
    const double q = q_ave(r.beamformer, zero_tolerance(d.header.max_power));
    csv << n << ',' << fmt(r.rate) << ',' << fmt(cert) << ',' << fmt(q) << '\n';
    sum_nom += r.rate;
    sum_cert += cert;
    sum_q += q;
  }
  const double N = static_cast<double>(d.samples.size());
  const fs::path path = resolve_out(out);
  io::write_text(path, csv.str());
  std::cout << (perfect ? "wmmse-perfect" : "wmmse-imperfect") << ": nominal rate " << fmt(sum_nom / N)
            << ", certified rate " << fmt(sum_cert / N) << ", Q_ave " << fmt(sum_q / N) << '\n'
            << "results: " << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust joint AP clustering and beamforming laboratory"};
  app.require_subcommand(1);
  app.footer("Relative output paths are resolved under $RCF_OUTPUT_ROOT (default ./rcf-out).");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a channel dataset");
  SystemFlags gen_sys;
  gen_sys.add(gen);
  std::size_t gen_count = 100;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "channels.bin";
  gen->add_option("--count", gen_count, "number of channel pairs")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "random seed")->required();
  gen->add_option("-o,--output", gen_out, "dataset path");

  // train
  auto* tr = app.add_subcommand("train", "train the network on the surrogate loss");
  SystemFlags tr_sys;
  tr_sys.add(tr);
  TrainFlags tr_flags;
  tr_flags.add(tr);
  std::uint64_t tr_seed = 0;
  std::string tr_data, tr_test, tr_out = "train";
  tr->add_option("--seed", tr_seed, "random seed (initialisation, shuffling, generated data)")->required();
  tr->add_option("--data", tr_data, "training dataset (default: generate from the system flags)")
      ->check(CLI::ExistingFile);
  tr->add_option("--test-data", tr_test, "held-out dataset")->check(CLI::ExistingFile);
  tr->add_option("-o,--out-dir", tr_out, "run directory");

  // certify
  auto* cert = app.add_subcommand("certify", "certify worst-case SINR of a design on a dataset");
  std::string ce_data, ce_ckpt, ce_out = "certificates.csv";
  bool ce_wmmse = false;
  int ce_iters = 15;
  std::size_t ce_oracle = 0;
  std::uint64_t ce_seed = 0;
  cert->add_option("--data", ce_data, "dataset")->required()->check(CLI::ExistingFile);
  cert->add_option("--checkpoint", ce_ckpt, "network checkpoint")->check(CLI::ExistingFile);
  cert->add_flag("--wmmse", ce_wmmse, "certify the WMMSE design instead of a network");
  cert->add_option("--iters", ce_iters, "WMMSE iterations")->check(CLI::PositiveNumber);
  cert->add_option("--oracle-samples", ce_oracle, "boundary draws for the sampling cross-check");
  auto* ce_seed_opt = cert->add_option("--seed", ce_seed, "seed for the sampling oracle");
  cert->add_option("-o,--output", ce_out, "certificate CSV");

  // baseline
  auto* base = app.add_subcommand("baseline", "run the WMMSE baseline on a dataset");
  std::string ba_data, ba_out = "baseline.csv", ba_proj = "linear";
  int ba_iters = 15;
  bool ba_perfect = false;
  base->add_option("--data", ba_data, "dataset")->required()->check(CLI::ExistingFile);
  base->add_option("--iters", ba_iters, "iterations")->check(CLI::PositiveNumber);
  base->add_flag("--perfect", ba_perfect, "design and evaluate on the true channel");
  base->add_option("--projection", ba_proj)->check(CLI::IsMember({"linear", "norm"}));
  base->add_option("-o,--output", ba_out, "result CSV");

  // sweep
  auto* sw = app.add_subcommand("sweep", "run a parameter sweep");
  SystemFlags sw_sys;
  sw_sys.add(sw);
  TrainFlags sw_flags;
  sw_flags.add(sw);
  std::string sw_var = "eta", sw_out = "sweep";
  std::vector<double> sw_grid;
  std::vector<std::string> sw_methods{"rjapcbn", "wmmse-imperfect"};
  std::size_t sw_reps = 1, sw_iters = 15;
  std::uint64_t sw_seed = 0;
  sw->add_option("--variable", sw_var)->check(CLI::IsMember({"eta", "users", "antennas", "lambda", "kernel"}));
  sw->add_option("--grid", sw_grid, "grid values (comma separated)")->required()->delimiter(',');
  sw->add_option("--replications", sw_reps)->check(CLI::PositiveNumber);
  sw->add_option("--methods", sw_methods)
      ->delimiter(',')
      ->check(CLI::IsMember({"rjapcbn", "wmmse-imperfect", "wmmse-perfect"}));
  sw->add_option("--wmmse-iters", sw_iters)->check(CLI::PositiveNumber);
  sw->add_option("--seed", sw_seed, "random seed")->required();
  sw->add_option("-o,--out-dir", sw_out, "run directory");

  // report
  auto* rep = app.add_subcommand("report", "summarise a sweep directory and redraw its charts");
  std::string rep_dir, rep_label;
  rep->add_option("--run-dir", rep_dir, "sweep run directory")->required();
  rep->add_option("--x-label", rep_label, "x axis label (default: the sweep variable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen_data(gen_sys, gen_count, gen_seed, gen_out);
    if (*tr) return cmd_train(tr_sys, tr_flags, tr_seed, tr_data, tr_test, tr_out);
    if (*cert)
      return cmd_certify(ce_data, ce_ckpt, ce_wmmse, ce_iters, ce_oracle, ce_seed,
                         ce_seed_opt->count() > 0, ce_out);
    if (*base) return cmd_baseline(ba_data, ba_iters, ba_perfect, ba_proj, ba_out);
    if (*sw) {
      ExperimentConfig cfg;
      cfg.variable = sweep_variable_from_string(sw_var);
      cfg.grid = sw_grid;
      cfg.replications = sw_reps;
      cfg.system = sw_sys.build(sw_seed);
      cfg.train = sw_flags.build(sw_seed);
      cfg.network = {sw_flags.layers, sw_flags.channels, sw_flags.kernel};
      cfg.eta = sw_sys.eta;
      cfg.methods.clear();
      for (const auto& m : sw_methods) cfg.methods.push_back(method_from_string(m));
      cfg.wmmse_iterations = sw_iters;
      cfg.seed = sw_seed;
      const fs::path dir = resolve_out(sw_out);
      const auto rows = run(cfg, dir);
      std::cout << "wrote " << rows.size() << " rows to " << (dir / "metrics.csv").string() << '\n'
                << report(dir, sw_var);
      return 0;
    }
    if (*rep) {
      fs::path dir(rep_dir);
      if (!fs::exists(dir / "metrics.csv")) dir = resolve_out(rep_dir);
      std::string label = rep_label;
      if (label.empty() && fs::exists(dir / "config.json")) {
        std::ifstream is(dir / "config.json");
        label = nlohmann::json::parse(is).value("variable", "x");
      }
      std::cout << report(dir, label.empty() ? "x" : label);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "rcf: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
