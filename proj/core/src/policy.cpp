#include "densedrive/policy.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "densedrive/rng.hpp"

namespace densedrive {

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MlpPolicy MlpPolicy::make(const std::vector<int>& widths, std::uint64_t seed) {
  if (widths.size() < 2)
    throw std::invalid_argument("MlpPolicy: need at least input and output widths");
  MlpPolicy p;
  p.widths = widths;
  rng::Engine eng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int rows = widths[l + 1];
    const int cols = widths[l];
    // Xavier-style scale for tanh layers
    const double scale = std::sqrt(2.0 / (rows + cols));
    Eigen::VectorXd w(static_cast<Eigen::Index>(rows) * cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = scale * eng.normal();
    p.w_flat.push_back(std::move(w));
    p.bias.push_back(Eigen::VectorXd::Zero(rows));
  }
  return p;
}

int MlpPolicy::n_params() const {
  int n = 0;
  for (std::size_t l = 0; l < w_flat.size(); ++l)
    n += static_cast<int>(w_flat[l].size() + bias[l].size());
  return n;
}

Eigen::VectorXd MlpPolicy::flatten() const {
  Eigen::VectorXd theta(n_params());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < w_flat.size(); ++l) {
    theta.segment(off, w_flat[l].size()) = w_flat[l];
    off += w_flat[l].size();
    theta.segment(off, bias[l].size()) = bias[l];
    off += bias[l].size();
  }
  return theta;
}

void MlpPolicy::unflatten(const Eigen::VectorXd& theta) {
  if (theta.size() != n_params())
    throw std::invalid_argument("MlpPolicy: parameter size mismatch");
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < w_flat.size(); ++l) {
    w_flat[l] = theta.segment(off, w_flat[l].size());
    off += w_flat[l].size();
    bias[l] = theta.segment(off, bias[l].size());
    off += bias[l].size();
  }
}

Eigen::VectorXd MlpPolicy::forward_value(const Eigen::VectorXd& x) const {
  if (x.size() != widths.front())
    throw std::invalid_argument("MlpPolicy: input width mismatch");
  Eigen::VectorXd h = x;
  for (int l = 0; l < n_layers(); ++l) {
    Eigen::Map<const RowMajor> W(w_flat[l].data(), widths[l + 1], widths[l]);
    h = W * h + bias[l];
    if (l + 1 < n_layers()) h = h.array().tanh();
  }
  return h;
}

std::vector<ad::Var> MlpPolicy::push_params(ad::Tape& t) const {
  std::vector<ad::Var> params;
  params.reserve(2 * w_flat.size());
  for (int l = 0; l < n_layers(); ++l) {
    params.push_back(t.input(w_flat[l]));
    params.push_back(t.input(bias[l]));
  }
  return params;
}

ad::Var MlpPolicy::forward_with(ad::Tape& t, ad::Var x,
                                const std::vector<ad::Var>& params) const {
  if (params.size() != 2 * w_flat.size())
    throw std::invalid_argument("MlpPolicy: parameter var count mismatch");
  ad::Var h = x;
  for (int l = 0; l < n_layers(); ++l) {
    h = t.dense(params[2 * l], params[2 * l + 1], h, widths[l + 1], widths[l]);
    if (l + 1 < n_layers()) h = t.tanh(h);
  }
  return h;
}

MlpPolicy::TapedPass MlpPolicy::forward(ad::Tape& t, ad::Var x) const {
  TapedPass pass;
  pass.params = push_params(t);
  pass.out = forward_with(t, x, pass.params);
  return pass;
}

Eigen::VectorXd CvaePolicy::flatten() const {
  Eigen::VectorXd theta(n_params());
  theta << encoder.flatten(), decoder.flatten();
  return theta;
}

void CvaePolicy::unflatten(const Eigen::VectorXd& theta) {
  if (theta.size() != n_params())
    throw std::invalid_argument("CvaePolicy: parameter size mismatch");
  encoder.unflatten(theta.head(encoder.n_params()));
  decoder.unflatten(theta.tail(decoder.n_params()));
}

ad::Var squash(ad::Tape& t, ad::Var u, const Eigen::VectorXd& lo,
               const Eigen::VectorXd& hi) {
  const Eigen::VectorXd mid = 0.5 * (lo + hi);
  const Eigen::VectorXd half = 0.5 * (hi - lo);
  return t.add(t.constant(mid), t.mul(t.constant(half), t.tanh(u)));
}

Eigen::VectorXd squash_value(const Eigen::VectorXd& u, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  return 0.5 * (lo + hi).array() +
         0.5 * (hi - lo).array() * u.array().tanh();
}

Eigen::VectorXd normalize_observation(const Eigen::VectorXd& o,
                                      const ObservationScaling& s) {
  if (o.size() != 55)
    throw std::invalid_argument("normalize_observation: expected 55 entries");
  Eigen::VectorXd n = o;
  // layout: [psi, ydot, xdot | 10 x (dx, dy, vx, vy, present) | lane lo, hi]
  n(1) /= s.vel_scale;
  n(2) /= s.vel_scale;
  for (int k = 0; k < 10; ++k) {
    const int base = 3 + 5 * k;
    n(base + 0) /= s.pos_scale;
    n(base + 1) /= s.pos_scale;
    n(base + 2) /= s.vel_scale;
    n(base + 3) /= s.vel_scale;
  }
  n(53) /= s.pos_scale;
  n(54) /= s.pos_scale;
  return n;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'D', 'P', 'W'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_blob(std::ofstream& f, const Eigen::VectorXd& v, std::uint32_t rows,
                std::uint32_t cols) {
  write_u32(f, rows);
  write_u32(f, cols);
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void write_mlp_blobs(std::ofstream& f, const MlpPolicy& p) {
  for (int l = 0; l < p.n_layers(); ++l) {
    write_blob(f, p.w_flat[l], p.widths[l + 1], p.widths[l]);
    write_blob(f, p.bias[l], p.widths[l + 1], 1);
  }
}

nlohmann::json mlp_json(const MlpPolicy& p) {
  return nlohmann::json{{"widths", p.widths}};
}

nlohmann::json meta_json(const PolicyMetadata& m) {
  return nlohmann::json{
      {"kind", m.kind},
      {"activation", m.activation},
      {"pos_scale", m.scaling.pos_scale},
      {"vel_scale", m.scaling.vel_scale},
      {"seed", m.seed},
      {"latent_dim", m.latent_dim},
      {"beta", m.beta},
      {"ss_weight", m.ss_weight},
  };
}

void write_files(const std::string& path, const nlohmann::json& meta,
                 const std::function<void(std::ofstream&)>& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save policy: cannot open " + path);
  f.write(kMagic, 4);
  write_u32(f, kVersion);
  body(f);
  if (!f) throw std::runtime_error("save policy: write failed for " + path);
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("save policy: cannot open " + path + ".json");
  side << meta.dump(2) << "\n";
}

MlpPolicy read_mlp_blobs(std::ifstream& f, const std::vector<int>& widths) {
  MlpPolicy p;
  p.widths = widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::uint32_t rows = read_u32(f);
    const std::uint32_t cols = read_u32(f);
    if (rows != static_cast<std::uint32_t>(widths[l + 1]) ||
        cols != static_cast<std::uint32_t>(widths[l]))
      throw std::runtime_error("load policy: weight shape header mismatch");
    Eigen::VectorXd w(static_cast<Eigen::Index>(rows) * cols);
    f.read(reinterpret_cast<char*>(w.data()),
           static_cast<std::streamsize>(w.size() * sizeof(double)));
    const std::uint32_t brows = read_u32(f);
    read_u32(f);  // bias cols, always 1
    if (brows != rows) throw std::runtime_error("load policy: bias shape mismatch");
    Eigen::VectorXd b(rows);
    f.read(reinterpret_cast<char*>(b.data()),
           static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load policy: truncated weight file");
    p.w_flat.push_back(std::move(w));
    p.bias.push_back(std::move(b));
  }
  return p;
}

}  // namespace

void save_mlp(const std::string& path, const MlpPolicy& policy,
              const PolicyMetadata& meta_in) {
  PolicyMetadata meta = meta_in;
  meta.kind = "mlp";
  nlohmann::json j = meta_json(meta);
  j["mlp"] = mlp_json(policy);
  write_files(path, j, [&](std::ofstream& f) { write_mlp_blobs(f, policy); });
}

void save_cvae(const std::string& path, const CvaePolicy& policy,
               const PolicyMetadata& meta_in) {
  PolicyMetadata meta = meta_in;
  meta.kind = "cvae";
  meta.latent_dim = policy.latent_dim;
  meta.beta = policy.beta;
  meta.ss_weight = policy.ss_weight;
  nlohmann::json j = meta_json(meta);
  j["encoder"] = mlp_json(policy.encoder);
  j["decoder"] = mlp_json(policy.decoder);
  write_files(path, j, [&](std::ofstream& f) {
    write_mlp_blobs(f, policy.encoder);
    write_mlp_blobs(f, policy.decoder);
  });
}

LoadedPolicy load_policy(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw std::runtime_error("load policy: missing sidecar " + path + ".json");
  nlohmann::json j;
  side >> j;

  LoadedPolicy out;
  out.meta.kind = j.at("kind").get<std::string>();
  out.meta.activation = j.value("activation", "tanh");
  out.meta.scaling.pos_scale = j.value("pos_scale", 50.0);
  out.meta.scaling.vel_scale = j.value("vel_scale", 10.0);
  out.meta.seed = j.value("seed", 0ull);
  out.meta.latent_dim = j.value("latent_dim", 0);
  out.meta.beta = j.value("beta", 0.0);
  out.meta.ss_weight = j.value("ss_weight", 0.0);

  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load policy: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load policy: bad magic bytes");
  if (read_u32(f) != kVersion)
    throw std::runtime_error("load policy: unsupported version");

  if (out.meta.kind == "mlp") {
    out.mlp = read_mlp_blobs(f, j.at("mlp").at("widths").get<std::vector<int>>());
  } else if (out.meta.kind == "cvae") {
    out.cvae.encoder =
        read_mlp_blobs(f, j.at("encoder").at("widths").get<std::vector<int>>());
    out.cvae.decoder =
        read_mlp_blobs(f, j.at("decoder").at("widths").get<std::vector<int>>());
    out.cvae.latent_dim = out.meta.latent_dim;
    out.cvae.beta = out.meta.beta;
    out.cvae.ss_weight = out.meta.ss_weight;
  } else {
    throw std::runtime_error("load policy: unknown kind " + out.meta.kind);
  }
  return out;
}

}  // namespace densedrive
