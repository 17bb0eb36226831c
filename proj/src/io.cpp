#include "robustcf/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rcf::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const fs::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated dataset file: " + path.string());
  return v;
}

void put_tensor(std::ostream& os, const CTensor& t) {
  for (const cplx& z : t.data()) {
    put(os, z.real());
    put(os, z.imag());
  }
}

CTensor get_tensor(std::istream& is, const DatasetHeader& h, const fs::path& path) {
  CTensor t(h.num_aps, h.num_users, h.num_antennas);
  for (cplx& z : t.data()) {
    const double re = get<double>(is, path);
    const double im = get<double>(is, path);
    z = {re, im};
  }
  return t;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, mode);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

}  // namespace

void write_dataset(const fs::path& path, const Dataset& data) {
  const DatasetHeader& h = data.header;
  if (h.count != data.samples.size())
    throw std::invalid_argument("write_dataset: header count does not match the sample count");
  if (h.noise_power.size() != h.num_users)
    throw std::invalid_argument("write_dataset: noise length must equal the user count");
  for (const ChannelPair& c : data.samples)
    if (c.true_h.aps() != h.num_aps || c.true_h.users() != h.num_users ||
        c.true_h.antennas() != h.num_antennas || !c.true_h.same_shape(c.est_h))
      throw ShapeError("write_dataset: sample shape does not match the header");

  std::ofstream os = open_out(path, std::ios::binary | std::ios::trunc);
  os.write(kDatasetMagic, sizeof(kDatasetMagic));
  put(os, kDatasetVersion);
  put(os, h.num_aps);
  put(os, h.num_users);
  put(os, h.num_antennas);
  put(os, h.eta);
  put(os, h.seed);
  put(os, h.count);
  put(os, h.max_power);
  for (double s : h.noise_power) put(os, s);
  for (const ChannelPair& c : data.samples) {
    put_tensor(os, c.true_h);
    put_tensor(os, c.est_h);
    for (double e : c.per_link_eps) put(os, e);
    for (double e : c.per_user_eps) put(os, e);
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Dataset read_dataset(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset: " + path.string());
  char magic[sizeof(kDatasetMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a channel dataset (bad magic): " + path.string());
  const auto version = get<std::uint32_t>(is, path);
  if (version != kDatasetVersion)
    throw std::runtime_error("unsupported dataset version " + std::to_string(version));
  Dataset d;
  DatasetHeader& h = d.header;
  h.num_aps = get<std::uint32_t>(is, path);
  h.num_users = get<std::uint32_t>(is, path);
  h.num_antennas = get<std::uint32_t>(is, path);
  h.eta = get<double>(is, path);
  h.seed = get<std::uint64_t>(is, path);
  h.count = get<std::uint64_t>(is, path);
  h.max_power = get<double>(is, path);
  if (h.num_aps == 0 || h.num_users == 0 || h.num_antennas == 0)
    throw std::runtime_error("dataset header has a zero dimension");
  for (std::uint32_t i = 0; i < h.num_users; ++i) h.noise_power.push_back(get<double>(is, path));
  d.samples.reserve(h.count);
  for (std::uint64_t n = 0; n < h.count; ++n) {
    ChannelPair c;
    c.true_h = get_tensor(is, h, path);
    c.est_h = get_tensor(is, h, path);
    c.per_link_eps.resize(std::size_t{h.num_aps} * h.num_users);
    for (double& e : c.per_link_eps) e = get<double>(is, path);
    c.per_user_eps.resize(h.num_users);
    for (double& e : c.per_user_eps) e = get<double>(is, path);
    c.error_level = h.eta;
    d.samples.push_back(std::move(c));
  }
  is.peek();
  if (!is.eof()) throw std::runtime_error("trailing bytes in dataset: " + path.string());
  return d;
}

namespace {

json layer_json(const nn::LayerSpec& l) {
  return {{"kernel", {l.kernel_w, l.kernel_h}}, {"padding", {l.pad_w, l.pad_h}},
          {"stride", {l.stride_w, l.stride_h}}, {"out_channels", l.out_channels},
          {"activation", nn::to_string(l.activation)}};
}

nn::LayerSpec layer_from_json(const json& j) {
  nn::LayerSpec l;
  l.kernel_w = j.at("kernel").at(0);
  l.kernel_h = j.at("kernel").at(1);
  l.pad_w = j.at("padding").at(0);
  l.pad_h = j.at("padding").at(1);
  l.stride_w = j.at("stride").at(0);
  l.stride_h = j.at("stride").at(1);
  l.out_channels = j.at("out_channels");
  const std::string act = j.at("activation");
  if (act == "relu") l.activation = nn::Activation::Relu;
  else if (act == "tanh") l.activation = nn::Activation::Tanh;
  else throw std::runtime_error("unknown activation: " + act);
  return l;
}

json conv_json(const nn::ConvParams& c) {
  return {{"shape", {c.out, c.in, c.kw, c.kh}}, {"weight", c.weight}, {"bias", c.bias}};
}

nn::ConvParams conv_from_json(const json& j) {
  const auto& s = j.at("shape");
  nn::ConvParams c(s.at(0), s.at(1), s.at(2), s.at(3));
  std::vector<double> w = j.at("weight"), b = j.at("bias");
  if (w.size() != c.weight.size() || b.size() != c.bias.size())
    throw std::runtime_error("checkpoint: convolution array size does not match its shape");
  c.weight = std::move(w);
  c.bias = std::move(b);
  return c;
}

}  // namespace

json to_json(const nn::NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_json(l));
  return {{"layers", layers},
          {"identity_map", layer_json(spec.identity_map)},
          {"attention", layer_json(spec.attention)},
          {"amplification", spec.amplification},
          {"pool", nn::to_string(spec.pool)},
          {"normalize_csi", spec.normalize_csi}};
}

nn::NetworkSpec network_spec_from_json(const json& j) {
  nn::NetworkSpec s;
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
  s.identity_map = layer_from_json(j.at("identity_map"));
  s.attention = layer_from_json(j.at("attention"));
  s.amplification = j.at("amplification");
  const std::string pool = j.at("pool");
  if (pool == "mean") s.pool = nn::PoolKind::Mean;
  else if (pool == "max") s.pool = nn::PoolKind::Max;
  else throw std::runtime_error("unknown pool kind: " + pool);
  s.normalize_csi = j.value("normalize_csi", true);
  return s;
}

json to_json(const SystemConfig& c) {
  return {{"num_aps", c.num_aps},           {"num_users", c.num_users},
          {"num_antennas", c.num_antennas}, {"max_power", c.max_power},
          {"noise_power", c.noise_power},   {"area_side", c.area_side},
          {"min_distance", c.min_distance}, {"shadow_std_db", c.shadow_std_db},
          {"small_scale_fading", c.small_scale_fading}, {"rng_seed", c.rng_seed}};
}

json to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"amplification", c.amplification},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"train_size", c.train_size},
          {"test_size", c.test_size},
          {"seed", c.seed},
          {"certify_every", c.certify_every},
          {"projection", c.rule == ProjectionRule::LinearInPower ? "linear" : "norm"}};
}

void write_checkpoint(const fs::path& path, const Checkpoint& ck) {
  const nn::NetParams& p = ck.params;
  json layers = json::array();
  for (std::size_t l = 0; l < p.conv.size(); ++l)
    layers.push_back({{"conv", conv_json(p.conv[l])},
                      {"bn_gamma", p.bn_gamma[l]},
                      {"bn_beta", p.bn_beta[l]},
                      {"running_mean", p.running_mean[l]},
                      {"running_var", p.running_var[l]}});
  const json j = {{"format", "robustcf-checkpoint"},
                  {"version", kCheckpointVersion},
                  {"num_antennas", ck.num_antennas},
                  {"spec", to_json(ck.spec)},
                  {"params",
                   {{"layers", layers},
                    {"identity", conv_json(p.identity)},
                    {"attention", conv_json(p.attention)}}},
                  {"meta", ck.meta}};
  write_text(path, j.dump(1) + "\n");
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint is not valid JSON: " + std::string(e.what()));
  }
  if (j.value("format", "") != "robustcf-checkpoint")
    throw std::runtime_error("not a checkpoint file: " + path.string());
  if (j.at("version") != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ck;
  ck.spec = network_spec_from_json(j.at("spec"));
  ck.num_antennas = j.at("num_antennas");
  ck.meta = j.value("meta", json::object());
  const json& pj = j.at("params");
  for (const auto& lj : pj.at("layers")) {
    ck.params.conv.push_back(conv_from_json(lj.at("conv")));
    ck.params.bn_gamma.push_back(lj.at("bn_gamma"));
    ck.params.bn_beta.push_back(lj.at("bn_beta"));
    ck.params.running_mean.push_back(lj.at("running_mean"));
    ck.params.running_var.push_back(lj.at("running_var"));
  }
  ck.params.identity = conv_from_json(pj.at("identity"));
  ck.params.attention = conv_from_json(pj.at("attention"));

  const nn::NetParams expect = nn::zero_params(ck.spec, ck.num_antennas);
  bool ok = expect.conv.size() == ck.params.conv.size();
  for (std::size_t l = 0; ok && l < expect.conv.size(); ++l)
    ok = expect.conv[l].weight.size() == ck.params.conv[l].weight.size() &&
         expect.bn_gamma[l].size() == ck.params.bn_gamma[l].size() &&
         expect.bn_beta[l].size() == ck.params.bn_beta[l].size() &&
         expect.running_mean[l].size() == ck.params.running_mean[l].size() &&
         expect.running_var[l].size() == ck.params.running_var[l].size();
  ok = ok && expect.identity.weight.size() == ck.params.identity.weight.size();
  if (!ok) throw std::runtime_error("checkpoint parameters do not match the embedded spec");
  return ck;
}

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

std::string certificate_csv(const RobustCertificate& cert) {
  std::ostringstream os;
  os << "user,alpha,beta,gamma,delta,mu,c4_min_eig,c4_norm,c5_min_eig,c5_norm\n";
  for (std::size_t i = 0; i < cert.users.size(); ++i) {
    const UserCertificate& u = cert.users[i];
    os << i;
    for (double v : {u.alpha, u.beta, u.gamma, u.delta, u.mu, u.c4_min_eig, u.c4_norm,
                     u.c5_min_eig, u.c5_norm})
      os << ',' << format_double(v);
    os << '\n';
  }
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os = open_out(path, std::ios::trunc);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace rcf::io
