#include "densedrive/projection.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace densedrive {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_geometry(const SceneGeometry& g, int n_steps) {
  if (g.ellipse_a <= 0 || g.ellipse_b <= 0)
    throw std::invalid_argument("SceneGeometry: ellipse axes must be positive");
  if (g.v_min < 0 || g.v_max < g.v_min)
    throw std::invalid_argument("SceneGeometry: need 0 <= v_min <= v_max");
  if (g.a_max <= 0)
    throw std::invalid_argument("SceneGeometry: a_max must be positive");
  if (!(g.y_lb < g.y_ub))
    throw std::invalid_argument("SceneGeometry: need y_lb < y_ub");
  for (const auto& o : g.obstacles)
    if (o.x.size() != n_steps || o.y.size() != n_steps)
      throw std::invalid_argument(
          "SceneGeometry: obstacle paths must be sampled on the grid");
}
}  // namespace

Eigen::MatrixXd SceneConstraints::stacked_F() const {
  if (!has_matrices())
    throw std::logic_error("SceneConstraints: matrices were not built");
  Eigen::MatrixXd F(F_tilde.rows() + G.rows(), n_xi);
  F << F_tilde, G;
  return F;
}

SceneConstraints reformulate_constraints(const SceneGeometry& geom,
                                         const BasisMatrices& basis,
                                         bool build_matrices) {
  basis.grid.validate();
  const int n = basis.n_steps();
  const int m = basis.n_coef();
  validate_geometry(geom, n);

  SceneConstraints sc;
  sc.geom = geom;
  sc.basis = &basis;
  sc.n_obs = static_cast<int>(geom.obstacles.size());
  sc.n_steps = n;
  sc.n_xi = 2 * m;

  const int rows_axis = (sc.n_obs + 2) * n;
  if (build_matrices) {
    const double c = collision_row_scale(geom);
    sc.F_tilde.setZero(2 * rows_axis, sc.n_xi);
    // x block: per-obstacle (c/a) W, then Wd, Wdd; y block mirrors with (c/b) W.
    for (int i = 0; i < sc.n_obs; ++i) {
      sc.F_tilde.block(i * n, 0, n, m) = (c / geom.ellipse_a) * basis.W;
      sc.F_tilde.block(rows_axis + i * n, m, n, m) =
          (c / geom.ellipse_b) * basis.W;
    }
    sc.F_tilde.block(sc.n_obs * n, 0, n, m) = basis.Wd;
    sc.F_tilde.block((sc.n_obs + 1) * n, 0, n, m) = basis.Wdd;
    sc.F_tilde.block(rows_axis + sc.n_obs * n, m, n, m) = basis.Wd;
    sc.F_tilde.block(rows_axis + (sc.n_obs + 1) * n, m, n, m) = basis.Wdd;

    sc.G.setZero(2 * n, sc.n_xi);
    sc.G.block(0, m, n, m) = basis.W;
    sc.G.block(n, m, n, m) = -basis.W;
  }

  sc.x_o.resize(sc.n_obs * n);
  sc.y_o.resize(sc.n_obs * n);
  for (int i = 0; i < sc.n_obs; ++i) {
    sc.x_o.segment(i * n, n) = geom.obstacles[i].x;
    sc.y_o.segment(i * n, n) = geom.obstacles[i].y;
  }

  sc.y_lane.resize(2 * n);
  sc.y_lane.head(n).setConstant(geom.y_ub);
  sc.y_lane.tail(n).setConstant(-geom.y_lb);

  const int nd = (sc.n_obs + 2) * n;
  sc.d_min.resize(nd);
  sc.d_max.resize(nd);
  sc.d_min.segment(0, sc.n_obs * n).setConstant(1.0);
  sc.d_max.segment(0, sc.n_obs * n).setConstant(kCollisionRatioMax);
  sc.d_min.segment(sc.n_obs * n, n).setConstant(geom.v_min);
  sc.d_max.segment(sc.n_obs * n, n).setConstant(geom.v_max);
  sc.d_min.segment((sc.n_obs + 1) * n, n).setConstant(0.0);
  sc.d_max.segment((sc.n_obs + 1) * n, n).setConstant(geom.a_max);
  return sc;
}

double ResidualReport::max() const {
  return std::max(std::max(collision, velocity), std::max(acceleration, lane));
}

ResidualReport residuals(const TrajectoryCoeffs& xi_bar,
                         const SceneConstraints& scene) {
  const BasisMatrices& basis = *scene.basis;
  const auto pos = eval_trajectory(xi_bar, basis, 0);
  const auto vel = eval_trajectory(xi_bar, basis, 1);
  const auto acc = eval_trajectory(xi_bar, basis, 2);
  const auto& g = scene.geom;

  ResidualReport r;
  for (const auto& obs : g.obstacles) {
    const Eigen::ArrayXd ratio =
        (((pos.x - obs.x).array() / g.ellipse_a).square() +
         ((pos.y - obs.y).array() / g.ellipse_b).square())
            .sqrt();
    r.collision = std::max(r.collision, (1.0 - ratio).maxCoeff());
  }
  r.collision = std::max(r.collision, 0.0);

  const Eigen::ArrayXd speed =
      (vel.x.array().square() + vel.y.array().square()).sqrt();
  r.velocity = std::max(
      0.0, std::max((speed - g.v_max).maxCoeff(), (g.v_min - speed).maxCoeff()));

  const Eigen::ArrayXd anorm =
      (acc.x.array().square() + acc.y.array().square()).sqrt();
  r.acceleration = std::max(0.0, (anorm - g.a_max).maxCoeff());

  r.lane = std::max(0.0, std::max((pos.y.array() - g.y_ub).maxCoeff(),
                                  (g.y_lb - pos.y.array()).maxCoeff()));
  return r;
}

// ---------------------------------------------------------------------------
// ProjectionSolver
// ---------------------------------------------------------------------------

ProjectionSolver::ProjectionSolver(const BasisMatrices& basis, int n_obs,
                                   double ellipse_a, double ellipse_b,
                                   const Eigen::MatrixXd& A, double rho,
                                   double dual_step, double over_relax)
    : basis_(&basis), n_obs_(n_obs), a_(ellipse_a), b_(ellipse_b), A_(A),
      rho_(rho), dual_step_(dual_step), over_relax_(over_relax) {
  if (rho <= 0) throw std::invalid_argument("ProjectionSolver: rho must be > 0");
  if (dual_step <= 0 || dual_step >= 2.0)
    throw std::invalid_argument("ProjectionSolver: dual_step in (0, 2)");
  if (over_relax <= 0 || over_relax >= 2.0)
    throw std::invalid_argument("ProjectionSolver: over_relax in (0, 2)");
  if (n_obs < 0) throw std::invalid_argument("ProjectionSolver: n_obs >= 0");

  // Gram matrix of the stacked penalty rows, assembled blockwise: obstacle
  // positions and bound values never enter it, so the factorization is valid
  // for every scene sharing this structure.
  const int m = basis.n_coef();
  SceneGeometry proto;
  proto.ellipse_a = ellipse_a;
  proto.ellipse_b = ellipse_b;
  const double c = collision_row_scale(proto);
  const Eigen::MatrixXd WtW = basis.W.transpose() * basis.W;
  const Eigen::MatrixXd common = basis.Wd.transpose() * basis.Wd +
                                 basis.Wdd.transpose() * basis.Wdd;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  H.topLeftCorner(m, m) =
      common + (n_obs * c * c / (ellipse_a * ellipse_a)) * WtW;
  // the y block also carries the two lane rows G = [W; -W]
  H.bottomRightCorner(m, m) =
      common + (n_obs * c * c / (ellipse_b * ellipse_b)) * WtW + 2.0 * WtW;
  H = Eigen::MatrixXd::Identity(2 * m, 2 * m) + rho * H;
  factor_ = qp::prefactor(H, A, rho);
}

ProjectionSolver::ProjectionSolver(const SceneConstraints& scene,
                                   const Eigen::MatrixXd& A, double rho,
                                   double dual_step, double over_relax)
    : ProjectionSolver(*scene.basis, scene.n_obs, scene.geom.ellipse_a,
                       scene.geom.ellipse_b, A, rho, dual_step, over_relax) {}

void ProjectionSolver::check_scene(const SceneConstraints& scene) const {
  if (scene.basis != basis_)
    throw std::invalid_argument("ProjectionSolver: scene uses a different basis");
  if (scene.n_obs != n_obs_)
    throw std::invalid_argument(
        "ProjectionSolver: obstacle count differs from the factored structure");
  if (scene.geom.ellipse_a != a_ || scene.geom.ellipse_b != b_)
    throw std::invalid_argument(
        "ProjectionSolver: ellipse axes differ from the factored structure");
}

namespace {

/// Tape handles produced by one closed-form h block. Angles never enter the
/// iteration itself (the polar targets use u/r, v/r directly); the scaled
/// displacement handles are kept so the reporting path can recover them.
struct HBlock {
  std::vector<ad::Var> u_obs, v_obs, d_obs;  // per obstacle, length n each
  ad::Var vel_x, vel_y, acc_x, acc_y;
  ad::Var d_v, d_a;
  ad::Var s_up, s_lo;
  // e blocks in stacked_F row order
  std::vector<ad::Var> e_ox, e_oy;
  ad::Var e_vx, e_vy, e_ax, e_ay, e_up, e_lo;
  ad::Var lambda_new;
  ad::Var Ft_e;  // F^T e, xi-space
};

struct SceneVars {
  std::vector<ad::Var> xo, yo;  // ellipse-scaled obstacle paths
  ad::Var yub, ylb, neg_ylb;
};

SceneVars make_scene_vars(ad::Tape& t, const SceneConstraints& sc) {
  SceneVars c;
  const int n = sc.n_steps;
  for (int i = 0; i < sc.n_obs; ++i) {
    c.xo.push_back(
        t.constant(sc.x_o.segment(i * n, n) / sc.geom.ellipse_a));
    c.yo.push_back(
        t.constant(sc.y_o.segment(i * n, n) / sc.geom.ellipse_b));
  }
  c.yub = t.constant(Eigen::VectorXd::Constant(n, sc.geom.y_ub));
  c.ylb = t.constant(Eigen::VectorXd::Constant(n, sc.geom.y_lb));
  c.neg_ylb = t.constant(Eigen::VectorXd::Constant(n, -sc.geom.y_lb));
  return c;
}

HBlock h_block(ad::Tape& t, const SceneConstraints& sc, double rho,
               double dual_step, const SceneVars& c, ad::Var xi_bar,
               ad::Var lambda) {
  const BasisMatrices& basis = *sc.basis;
  const int m = basis.n_coef();
  const double a = sc.geom.ellipse_a;
  const double b = sc.geom.ellipse_b;

  const ad::Var cx = t.slice(xi_bar, 0, m);
  const ad::Var cy = t.slice(xi_bar, m, m);
  const ad::Var px = t.matvec(&basis.W, cx);
  const ad::Var py = t.matvec(&basis.W, cy);
  const ad::Var vx = t.matvec(&basis.Wd, cx);
  const ad::Var vy = t.matvec(&basis.Wd, cy);
  const ad::Var ax = t.matvec(&basis.Wdd, cx);
  const ad::Var ay = t.matvec(&basis.Wdd, cy);

  HBlock h;

  // collision blocks: polar decomposition of the ellipse-scaled displacement;
  // the row pair carries the common weight collision_row_scale
  const double cw = collision_row_scale(sc.geom);
  const ad::Var px_a = t.scale(px, 1.0 / a);
  const ad::Var py_b = t.scale(py, 1.0 / b);
  ad::Var sum_ex, sum_ey, sum_rx, sum_ry;
  for (int i = 0; i < sc.n_obs; ++i) {
    const ad::Var u = t.sub(px_a, c.xo[i]);
    const ad::Var v = t.sub(py_b, c.yo[i]);
    const ad::Var d = t.clamp(t.hypot(u, v), 1.0, kCollisionRatioMax);
    const ad::Var ex_u = t.add(c.xo[i], t.mul(d, t.polar_cos(u, v)));
    const ad::Var ey_u = t.add(c.yo[i], t.mul(d, t.polar_sin(u, v)));
    const ad::Var ex = t.scale(ex_u, cw);
    const ad::Var ey = t.scale(ey_u, cw);
    const ad::Var rx = t.scale(t.sub(px_a, ex_u), cw);
    const ad::Var ry = t.scale(t.sub(py_b, ey_u), cw);
    h.u_obs.push_back(u);
    h.v_obs.push_back(v);
    h.d_obs.push_back(d);
    h.e_ox.push_back(ex);
    h.e_oy.push_back(ey);
    sum_ex = i == 0 ? ex : t.add(sum_ex, ex);
    sum_ey = i == 0 ? ey : t.add(sum_ey, ey);
    sum_rx = i == 0 ? rx : t.add(sum_rx, rx);
    sum_ry = i == 0 ? ry : t.add(sum_ry, ry);
  }

  // velocity and acceleration bounds in polar form
  h.vel_x = vx;
  h.vel_y = vy;
  h.d_v = t.clamp(t.hypot(vx, vy), sc.geom.v_min, sc.geom.v_max);
  h.e_vx = t.mul(h.d_v, t.polar_cos(vx, vy));
  h.e_vy = t.mul(h.d_v, t.polar_sin(vx, vy));
  const ad::Var r_vx = t.sub(vx, h.e_vx);
  const ad::Var r_vy = t.sub(vy, h.e_vy);

  h.acc_x = ax;
  h.acc_y = ay;
  h.d_a = t.clamp(t.hypot(ax, ay), 0.0, sc.geom.a_max);
  h.e_ax = t.mul(h.d_a, t.polar_cos(ax, ay));
  h.e_ay = t.mul(h.d_a, t.polar_sin(ax, ay));
  const ad::Var r_ax = t.sub(ax, h.e_ax);
  const ad::Var r_ay = t.sub(ay, h.e_ay);

  // lane slack: exact minimizer of || G xi - y_lane + s ||^2 over s >= 0
  h.s_up = t.clamp(t.sub(c.yub, py), 0.0, kInf);
  h.s_lo = t.clamp(t.sub(py, c.ylb), 0.0, kInf);
  h.e_up = t.sub(c.yub, h.s_up);
  h.e_lo = t.sub(c.neg_ylb, h.s_lo);
  const ad::Var r_up = t.sub(py, h.e_up);
  const ad::Var r_lo = t.sub(t.scale(py, -1.0), h.e_lo);

  // F^T r and F^T e assembled blockwise from the basis products
  const bool has_obs = sc.n_obs > 0;
  auto ft_axis = [&](ad::Var obs_sum, ad::Var vel_part, ad::Var acc_part,
                     double inv_axis) {
    ad::Var out = t.add(t.matvec_t(&basis.Wd, vel_part),
                        t.matvec_t(&basis.Wdd, acc_part));
    if (has_obs)
      out = t.add(out, t.scale(t.matvec_t(&basis.W, obs_sum), inv_axis));
    return out;
  };
  ad::Var ftr_x = ft_axis(sum_rx, r_vx, r_ax, cw / a);
  ad::Var ftr_y = ft_axis(sum_ry, r_vy, r_ay, cw / b);
  ftr_y = t.add(ftr_y, t.matvec_t(&basis.W, t.sub(r_up, r_lo)));

  ad::Var fte_x = ft_axis(sum_ex, h.e_vx, h.e_ax, cw / a);
  ad::Var fte_y = ft_axis(sum_ey, h.e_vy, h.e_ay, cw / b);
  fte_y = t.add(fte_y, t.matvec_t(&basis.W, t.sub(h.e_up, h.e_lo)));

  // multiplier step: xi-space pressure opposite the penalty residual,
  // over-stepped by dual_step
  h.lambda_new =
      t.sub(lambda, t.scale(t.concat({ftr_x, ftr_y}), dual_step * rho));
  h.Ft_e = t.concat({fte_x, fte_y});
  return h;
}

}  // namespace

UnrolledProjection ProjectionSolver::unroll(ad::Tape& tape,
                                            const SceneConstraints& scene,
                                            ad::Var xi_star, ad::Var lambda0,
                                            ad::Var xi_bar0, ad::Var b_eq,
                                            int iters) const {
  if (iters < 1)
    throw std::invalid_argument("ProjectionSolver: iters must be >= 1");
  check_scene(scene);
  const SceneVars c = make_scene_vars(tape, scene);

  UnrolledProjection out;
  ad::Var xi_bar = xi_bar0;
  ad::Var lambda = lambda0;
  for (int k = 0; k < iters; ++k) {
    const HBlock h = h_block(tape, scene, rho_, dual_step_, c, xi_bar, lambda);
    lambda = h.lambda_new;
    const ad::Var eta1 =
        tape.add(tape.add(xi_star, lambda), tape.scale(h.Ft_e, rho_));
    const ad::Var sol = tape.solve(&factor_, tape.concat({eta1, b_eq}));
    const ad::Var solved = tape.slice(sol, 0, scene.n_xi);
    // extrapolated iterate; both endpoints satisfy the equalities, so the
    // blend does too
    xi_bar = over_relax_ == 1.0
                 ? solved
                 : tape.add(tape.scale(xi_bar, 1.0 - over_relax_),
                            tape.scale(solved, over_relax_));
    out.stages.push_back(xi_bar);
  }
  out.xi_bar = xi_bar;
  out.lambda = lambda;
  return out;
}

void ProjectionSolver::h_update(ProjectionState& state,
                                const SceneConstraints& scene) const {
  check_scene(scene);
  const int n = scene.n_steps;
  ad::Tape t;
  const SceneVars c = make_scene_vars(t, scene);
  const ad::Var xi = t.constant(state.xi_bar);
  const ad::Var lam = t.constant(state.lambda);
  const HBlock h = h_block(t, scene, rho_, dual_step_, c, xi, lam);

  auto angles_of = [](const Eigen::VectorXd& vy_, const Eigen::VectorXd& vx_) {
    return vy_.binaryExpr(vx_, [](double yy, double xx) {
      return (yy == 0.0 && xx == 0.0) ? 0.0 : std::atan2(yy, xx);
    });
  };
  state.alpha_obs.resize(scene.n_obs * n);
  state.d_obs.resize(scene.n_obs * n);
  for (int i = 0; i < scene.n_obs; ++i) {
    state.alpha_obs.segment(i * n, n) =
        angles_of(t.value(h.v_obs[i]), t.value(h.u_obs[i]));
    state.d_obs.segment(i * n, n) = t.value(h.d_obs[i]);
  }
  state.alpha_v = angles_of(t.value(h.vel_y), t.value(h.vel_x));
  state.d_v = t.value(h.d_v);
  state.alpha_a = angles_of(t.value(h.acc_y), t.value(h.acc_x));
  state.d_a = t.value(h.d_a);
  state.s.resize(2 * n);
  state.s.head(n) = t.value(h.s_up);
  state.s.tail(n) = t.value(h.s_lo);

  const int rows_axis = (scene.n_obs + 2) * n;
  state.e.resize(2 * rows_axis + 2 * n);
  for (int i = 0; i < scene.n_obs; ++i) {
    state.e.segment(i * n, n) = t.value(h.e_ox[i]);
    state.e.segment(rows_axis + i * n, n) = t.value(h.e_oy[i]);
  }
  state.e.segment(scene.n_obs * n, n) = t.value(h.e_vx);
  state.e.segment((scene.n_obs + 1) * n, n) = t.value(h.e_ax);
  state.e.segment(rows_axis + scene.n_obs * n, n) = t.value(h.e_vy);
  state.e.segment(rows_axis + (scene.n_obs + 1) * n, n) = t.value(h.e_ay);
  state.e.segment(2 * rows_axis, n) = t.value(h.e_up);
  state.e.segment(2 * rows_axis + n, n) = t.value(h.e_lo);

  state.lambda = t.value(h.lambda_new);
}

std::vector<ProjectionState> ProjectionSolver::project(
    const std::vector<TrajectoryCoeffs>& xi_star_batch,
    const std::vector<Eigen::VectorXd>& b_batch, const SceneConstraints& scene,
    const std::vector<Eigen::VectorXd>& lambda_init_batch,
    const std::vector<TrajectoryCoeffs>& xi_bar_init_batch,
    const Options& opts) const {
  const std::size_t nb = xi_star_batch.size();
  if (b_batch.size() != nb)
    throw std::invalid_argument("project: b_batch size mismatch");
  if (!lambda_init_batch.empty() && lambda_init_batch.size() != nb)
    throw std::invalid_argument("project: lambda_init_batch size mismatch");
  if (!xi_bar_init_batch.empty() && xi_bar_init_batch.size() != nb)
    throw std::invalid_argument("project: xi_bar_init_batch size mismatch");
  if (!factor_.valid())
    throw std::logic_error("project: KKT system not prefactored");
  check_scene(scene);

  std::vector<ProjectionState> out(nb);
  ad::Tape tape;
  for (std::size_t j = 0; j < nb; ++j) {
    tape.reset();
    const ad::Var xi_star = tape.constant(xi_star_batch[j]);
    const ad::Var b = tape.constant(b_batch[j]);
    const ad::Var lam0 = tape.constant(
        lambda_init_batch.empty() ? Eigen::VectorXd::Zero(scene.n_xi).eval()
                                  : lambda_init_batch[j]);
    const ad::Var xi0 = tape.constant(
        xi_bar_init_batch.empty() ? xi_star_batch[j] : xi_bar_init_batch[j]);
    const UnrolledProjection u =
        unroll(tape, scene, xi_star, lam0, xi0, b, opts.max_iters);

    ProjectionState& st = out[j];
    st.xi_bar = tape.value(u.xi_bar);
    st.lambda = tape.value(u.lambda);
    if (opts.record_trace) {
      st.residual_trace.reserve(u.stages.size());
      for (const ad::Var stage : u.stages)
        st.residual_trace.push_back(residuals(tape.value(stage), scene).max());
    }
    // closed-form block values at the final iterate, for inspection
    ProjectionState at_final;
    at_final.xi_bar = st.xi_bar;
    at_final.lambda = st.lambda;
    h_update(at_final, scene);
    st.alpha_obs = std::move(at_final.alpha_obs);
    st.d_obs = std::move(at_final.d_obs);
    st.alpha_v = std::move(at_final.alpha_v);
    st.d_v = std::move(at_final.d_v);
    st.alpha_a = std::move(at_final.alpha_a);
    st.d_a = std::move(at_final.d_a);
    st.s = std::move(at_final.s);
    st.e = std::move(at_final.e);
  }
  return out;
}

ProjectionState ProjectionSolver::project_one(const TrajectoryCoeffs& xi_star,
                                              const Eigen::VectorXd& b_eq,
                                              const SceneConstraints& scene,
                                              const Options& opts) const {
  return project({xi_star}, {b_eq}, scene, {}, {}, opts)[0];
}

}  // namespace densedrive
