#include "densedrive/learn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "densedrive/rng.hpp"

namespace densedrive {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

std::vector<ExpertRecord> load_expert_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_expert_jsonl: cannot open " + path);
  std::vector<ExpertRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    ExpertRecord r;
    const auto o = j.at("o").get<std::vector<double>>();
    const auto tau = j.at("tau_e").get<std::vector<double>>();
    r.o = Eigen::Map<const Eigen::VectorXd>(o.data(), o.size());
    r.tau_e = Eigen::Map<const Eigen::VectorXd>(tau.data(), tau.size());
    out.push_back(std::move(r));
  }
  return out;
}

void save_expert_jsonl(const std::string& path,
                       const std::vector<ExpertRecord>& records) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_expert_jsonl: cannot open " + path);
  for (const auto& r : records) {
    nlohmann::json j;
    j["o"] = std::vector<double>(r.o.data(), r.o.data() + r.o.size());
    j["tau_e"] =
        std::vector<double>(r.tau_e.data(), r.tau_e.data() + r.tau_e.size());
    f << j.dump() << "\n";
  }
}

std::vector<Eigen::VectorXd> observations_of(
    const std::vector<ExpertRecord>& records) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.o);
  return out;
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu,
                               const Eigen::VectorXd& sigma,
                               const Eigen::VectorXd& noise) {
  if (mu.size() != sigma.size() || mu.size() != noise.size())
    throw std::invalid_argument("reparameterize: size mismatch");
  return mu.array() + sigma.array() * noise.array();
}

double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma) {
  if (mu.size() != sigma.size())
    throw std::invalid_argument("kl_divergence: size mismatch");
  const Eigen::ArrayXd s2 = sigma.array().square();
  return 0.5 * (s2 + mu.array().square() - 1.0 - s2.log()).sum();
}

UnrolledForward unrolled_forward(ad::Tape& t, ad::Var p_flat, ad::Var lambda0,
                                 const Planner& planner,
                                 const BoundaryConditions& bc,
                                 const ProjectionSolver& proj,
                                 const SceneConstraints& scene, int K) {
  if (planner.terminal_mode() == TerminalMode::kFullPterm)
    throw std::invalid_argument(
        "unrolled_forward: taped pipeline supports cost-side p only");
  // eta = [-q(p); b]; b carries no p dependence here
  const ad::Var neg_q = t.scale(t.matvec(&planner.q_of_p(), p_flat), -1.0);
  const ad::Var b_eq =
      t.constant(equality_rhs(BehavioralInput{}, bc, planner.basis()));
  const ad::Var sol =
      t.solve(&planner.factor(), t.concat({neg_q, b_eq}));

  UnrolledForward out;
  out.xi_star = t.slice(sol, 0, planner.factor().n_primal());
  if (K == 0) {
    out.xi_bar = out.xi_star;
    return out;
  }
  const UnrolledProjection u =
      proj.unroll(t, scene, out.xi_star, lambda0, out.xi_star, b_eq, K);
  out.xi_bar = u.xi_bar;
  out.stages = u.stages;
  return out;
}

CvaeLossParts cvae_loss_graph(ad::Tape& t, const UnrolledForward& fwd,
                              const SceneConstraints& scene, ad::Var mu,
                              ad::Var logvar, const Eigen::VectorXd& tau_e,
                              double beta, double ss_weight, int ss_stride,
                              const MetaCostConfig& mc) {
  const BasisMatrices& basis = *scene.basis;
  const int m = basis.n_coef();
  if (tau_e.size() != 2 * basis.n_steps())
    throw std::invalid_argument("cvae_loss_graph: tau_e must hold 2*n_steps samples");

  const ad::Var px = t.matvec(&basis.W, t.slice(fwd.xi_bar, 0, m));
  const ad::Var py = t.matvec(&basis.W, t.slice(fwd.xi_bar, m, m));
  CvaeLossParts parts;
  parts.recon = t.sumsq(t.sub(t.concat({px, py}), t.constant(tau_e)));

  // 0.5 sum(sigma^2 + mu^2 - 1 - log sigma^2) with sigma^2 = exp(logvar)
  const ad::Var ones =
      t.constant(Eigen::VectorXd::Ones(t.value(mu).size()));
  parts.kl = t.scale(
      t.sum(t.sub(t.add(t.exp(logvar), t.mul(mu, mu)), t.add(logvar, ones))),
      0.5);

  parts.total = t.add(parts.recon, t.scale(parts.kl, beta));
  if (ss_weight > 0.0 && !fwd.stages.empty()) {
    if (ss_stride < 1)
      throw std::invalid_argument("cvae_loss_graph: ss_stride must be >= 1");
    ad::Var acc;
    bool first = true;
    for (std::size_t k = 0; k < fwd.stages.size(); k += ss_stride) {
      const ad::Var c = meta_cost_on_tape(t, fwd.stages[k], scene, mc);
      acc = first ? c : t.add(acc, c);
      first = false;
    }
    parts.ss = acc;
    parts.total = t.add(parts.total, t.scale(parts.ss, ss_weight));
  } else {
    parts.ss = t.constant(Eigen::VectorXd::Zero(1));
  }
  return parts;
}

ad::Var self_supervised_loss_graph(ad::Tape& t, const UnrolledForward& fwd,
                                   const SceneConstraints& scene,
                                   const MetaCostConfig& mc, int stage_stride) {
  ad::Var loss = meta_cost_on_tape(t, fwd.xi_bar, scene, mc);
  if (stage_stride > 0) {
    for (std::size_t k = 0; k + 1 < fwd.stages.size();
         k += static_cast<std::size_t>(stage_stride))
      loss = t.add(loss, meta_cost_on_tape(t, fwd.stages[k], scene, mc));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)), lr_(lr),
      b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (theta.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  theta.array() -=
      lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

void check_env(const TrainEnv& env) {
  if (!env.planner || !env.projection || !env.scene_of || !env.bc_of)
    throw std::invalid_argument("TrainEnv: planner, projection and callbacks required");
}

std::vector<int> shuffled_indices(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng::Engine eng(rng::derive(seed, 0x5f1e, epoch));
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[eng.next() % i]);
  return idx;
}

/// Squash bounds for the flat p vector derived from the scene.
void p_bounds(const SceneConstraints& scene, int m_seg, Eigen::VectorXd& lo,
              Eigen::VectorXd& hi) {
  BehaviorBounds b;
  b.y_lo = scene.geom.y_lb;
  b.y_hi = scene.geom.y_ub;
  b.v_lo = scene.geom.v_min;
  b.v_hi = scene.geom.v_max;
  lo = b.lower(m_seg);
  hi = b.upper(m_seg);
}

void accumulate_grads(const ad::Tape& t, const std::vector<ad::Var>& params,
                      Eigen::VectorXd& grad) {
  Eigen::Index off = 0;
  for (const ad::Var v : params) {
    const Eigen::VectorXd g = t.grad(v);
    grad.segment(off, g.size()) += g;
    off += g.size();
  }
}

[[noreturn]] void abort_nonfinite(const char* mode, int epoch, int batch_index,
                                  const std::string& components) {
  std::ostringstream os;
  os << mode << ": non-finite loss at epoch " << epoch << ", minibatch "
     << batch_index << " (" << components << ")";
  throw std::runtime_error(os.str());
}

}  // namespace

TrainResult train_self_supervised(const std::vector<Eigen::VectorXd>& observations,
                                  MlpPolicy& policy, const TrainEnv& env,
                                  const TrainConfig& cfg) {
  check_env(env);
  if (observations.empty())
    throw std::invalid_argument("train_self_supervised: empty dataset");
  const auto factor_count_before = qp::kkt_stats().factorizations;

  const int m_seg = env.planner->m_seg();
  const int n_xi = env.planner->factor().n_primal();
  TrainResult res;
  res.initial_loss = evaluate_self_supervised(policy, observations, env, cfg);

  Eigen::VectorXd theta = policy.flatten();
  Adam adam(theta.size(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Eigen::VectorXd grad(theta.size());
  ad::Tape tape;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(observations.size(), cfg.seed, epoch);
    double epoch_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.minibatch, ++batch_index) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      grad.setZero();
      for (std::size_t k = start; k < stop; ++k) {
        const Eigen::VectorXd& o = observations[order[k]];
        const SceneConstraints scene = env.scene_of(o);
        const BoundaryConditions bc = env.bc_of(o);
        Eigen::VectorXd lo, hi;
        p_bounds(scene, m_seg, lo, hi);

        tape.reset();
        const ad::Var o_norm =
            tape.constant(normalize_observation(o, env.scaling));
        const auto pass = policy.forward(tape, o_norm);
        const ad::Var p =
            squash(tape, tape.slice(pass.out, 0, 2 * m_seg), lo, hi);
        const ad::Var lambda0 = tape.slice(pass.out, 2 * m_seg, n_xi);
        const UnrolledForward fwd = unrolled_forward(
            tape, p, lambda0, *env.planner, bc, *env.projection, scene,
            cfg.use_projection ? cfg.unroll_depth : 0);
        const ad::Var loss = self_supervised_loss_graph(
            tape, fwd, scene, cfg.metacost, cfg.ss_final_stride);
        const double lv = tape.scalar(loss);
        if (!std::isfinite(lv))
          abort_nonfinite("train_self_supervised", epoch, batch_index,
                          "loss=" + std::to_string(lv));
        epoch_loss += lv;
        tape.backward(loss);
        accumulate_grads(tape, pass.params, grad);
      }
      grad /= static_cast<double>(stop - start);
      adam.step(theta, grad);
      policy.unflatten(theta);
    }
    res.loss_curve.push_back(epoch_loss / observations.size());
  }

  res.final_loss = evaluate_self_supervised(policy, observations, env, cfg);
  if (qp::kkt_stats().factorizations != factor_count_before)
    throw std::logic_error(
        "train_self_supervised: a KKT factorization happened inside the loop");
  return res;
}

TrainResult train_supervised(const std::vector<ExpertRecord>& dataset,
                             CvaePolicy& policy, const TrainEnv& env,
                             const TrainConfig& cfg) {
  check_env(env);
  if (dataset.empty())
    throw std::invalid_argument("train_supervised: empty dataset");
  const auto factor_count_before = qp::kkt_stats().factorizations;

  const int m_seg = env.planner->m_seg();
  const int n_xi = env.planner->factor().n_primal();
  const int L = policy.latent_dim;
  TrainResult res;
  res.initial_loss = evaluate_reconstruction(policy, dataset, env, cfg);

  Eigen::VectorXd theta = policy.flatten();
  Adam adam(theta.size(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Eigen::VectorXd grad(theta.size());
  ad::Tape tape;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(dataset.size(), cfg.seed, epoch);
    double epoch_loss = 0.0, epoch_recon = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.minibatch, ++batch_index) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      grad.setZero();
      for (std::size_t k = start; k < stop; ++k) {
        const ExpertRecord& rec = dataset[order[k]];
        const SceneConstraints scene = env.scene_of(rec.o);
        const BoundaryConditions bc = env.bc_of(rec.o);
        Eigen::VectorXd lo, hi;
        p_bounds(scene, m_seg, lo, hi);

        tape.reset();
        const ad::Var o_norm =
            tape.constant(normalize_observation(rec.o, env.scaling));
        const ad::Var tau_norm =
            tape.constant((rec.tau_e / env.scaling.pos_scale).eval());
        const auto enc = policy.encoder.forward(
            tape, tape.concat({o_norm, tau_norm}));
        const ad::Var mu = tape.slice(enc.out, 0, L);
        const ad::Var logvar = tape.slice(enc.out, L, L);
        const ad::Var sigma = tape.exp(tape.scale(logvar, 0.5));

        rng::Engine eng(
            rng::derive(cfg.seed, 0x201e, epoch * 1000003ull + order[k]));
        Eigen::VectorXd noise(L);
        for (int i = 0; i < L; ++i) noise(i) = eng.normal();
        const ad::Var z =
            tape.add(mu, tape.mul(sigma, tape.constant(noise)));

        const auto dec =
            policy.decoder.forward(tape, tape.concat({z, o_norm}));
        const ad::Var p =
            squash(tape, tape.slice(dec.out, 0, 2 * m_seg), lo, hi);
        const ad::Var lambda0 = tape.slice(dec.out, 2 * m_seg, n_xi);
        const UnrolledForward fwd = unrolled_forward(
            tape, p, lambda0, *env.planner, bc, *env.projection, scene,
            cfg.use_projection ? cfg.unroll_depth : 0);
        const CvaeLossParts parts = cvae_loss_graph(
            tape, fwd, scene, mu, logvar, rec.tau_e, policy.beta,
            policy.ss_weight, cfg.ss_stage_stride, cfg.metacost);

        const double lv = tape.scalar(parts.total);
        if (!std::isfinite(lv)) {
          abort_nonfinite(
              "train_supervised", epoch, batch_index,
              "recon=" + std::to_string(tape.scalar(parts.recon)) +
                  " kl=" + std::to_string(tape.scalar(parts.kl)) +
                  " ss=" + std::to_string(tape.scalar(parts.ss)));
        }
        epoch_loss += lv;
        epoch_recon += tape.scalar(parts.recon);
        tape.backward(parts.total);
        accumulate_grads(tape, enc.params, grad);
        Eigen::VectorXd dec_grad(policy.decoder.n_params());
        dec_grad.setZero();
        accumulate_grads(tape, dec.params, dec_grad);
        grad.tail(policy.decoder.n_params()) += dec_grad;
      }
      grad /= static_cast<double>(stop - start);
      adam.step(theta, grad);
      policy.unflatten(theta);
    }
    res.loss_curve.push_back(epoch_loss / dataset.size());
    res.recon_curve.push_back(epoch_recon / dataset.size());
  }

  res.final_loss = evaluate_reconstruction(policy, dataset, env, cfg);
  if (qp::kkt_stats().factorizations != factor_count_before)
    throw std::logic_error(
        "train_supervised: a KKT factorization happened inside the loop");
  return res;
}

double evaluate_self_supervised(const MlpPolicy& policy,
                                const std::vector<Eigen::VectorXd>& observations,
                                const TrainEnv& env, const TrainConfig& cfg) {
  check_env(env);
  const int m_seg = env.planner->m_seg();
  const int n_xi = env.planner->factor().n_primal();
  ad::Tape tape;
  double total = 0.0;
  for (const auto& o : observations) {
    const SceneConstraints scene = env.scene_of(o);
    const BoundaryConditions bc = env.bc_of(o);
    Eigen::VectorXd lo, hi;
    p_bounds(scene, m_seg, lo, hi);
    tape.reset();
    const ad::Var o_norm = tape.constant(normalize_observation(o, env.scaling));
    const Eigen::VectorXd out = policy.forward_value(tape.value(o_norm));
    const ad::Var p = tape.constant(
        squash_value(out.head(2 * m_seg), lo, hi));
    const ad::Var lambda0 = tape.constant(out.segment(2 * m_seg, n_xi).eval());
    const UnrolledForward fwd = unrolled_forward(
        tape, p, lambda0, *env.planner, bc, *env.projection, scene,
        cfg.use_projection ? cfg.unroll_depth : 0);
    total += tape.scalar(self_supervised_loss_graph(tape, fwd, scene,
                                                    cfg.metacost,
                                                    cfg.ss_final_stride));
  }
  return total / static_cast<double>(observations.size());
}

double evaluate_reconstruction(const CvaePolicy& policy,
                               const std::vector<ExpertRecord>& dataset,
                               const TrainEnv& env, const TrainConfig& cfg) {
  check_env(env);
  const int m_seg = env.planner->m_seg();
  const int n_xi = env.planner->factor().n_primal();
  const int L = policy.latent_dim;
  const BasisMatrices& basis = env.planner->basis();
  const int m = basis.n_coef();
  ad::Tape tape;
  double total = 0.0;
  for (const auto& rec : dataset) {
    const SceneConstraints scene = env.scene_of(rec.o);
    const BoundaryConditions bc = env.bc_of(rec.o);
    Eigen::VectorXd lo, hi;
    p_bounds(scene, m_seg, lo, hi);
    const Eigen::VectorXd o_norm = normalize_observation(rec.o, env.scaling);
    Eigen::VectorXd enc_in(o_norm.size() + rec.tau_e.size());
    enc_in << o_norm, rec.tau_e / env.scaling.pos_scale;
    const Eigen::VectorXd enc_out = policy.encoder.forward_value(enc_in);
    // deterministic evaluation at z = mu
    Eigen::VectorXd dec_in(L + o_norm.size());
    dec_in << enc_out.head(L), o_norm;
    const Eigen::VectorXd dec_out = policy.decoder.forward_value(dec_in);

    tape.reset();
    const ad::Var p =
        tape.constant(squash_value(dec_out.head(2 * m_seg), lo, hi));
    const ad::Var lambda0 =
        tape.constant(dec_out.segment(2 * m_seg, n_xi).eval());
    const UnrolledForward fwd = unrolled_forward(
        tape, p, lambda0, *env.planner, bc, *env.projection, scene,
        cfg.use_projection ? cfg.unroll_depth : 0);
    const Eigen::VectorXd xi = tape.value(fwd.xi_bar);
    Eigen::VectorXd tau(2 * basis.n_steps());
    tau << basis.W * xi.head(m), basis.W * xi.tail(m);
    total += (tau - rec.tau_e).squaredNorm();
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace densedrive
