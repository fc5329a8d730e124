#include "densedrive/metacost.hpp"

#include <limits>
#include <stdexcept>

namespace densedrive {

double meta_cost(const TrajectoryCoeffs& xi_bar, const SceneConstraints& scene,
                 const MetaCostConfig& cfg) {
  const ResidualReport r = residuals(xi_bar, scene);
  const auto vel = eval_trajectory(xi_bar, *scene.basis, 1);
  const double speed_dev = (vel.x.array() - cfg.v_des).square().mean();
  return cfg.w_res * r.sum() + cfg.w_speed * speed_dev;
}

std::vector<double> meta_cost_batch(const std::vector<TrajectoryCoeffs>& batch,
                                    const SceneConstraints& scene,
                                    const MetaCostConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("meta_cost_batch: empty batch");
  std::vector<double> costs;
  costs.reserve(batch.size());
  for (const auto& xi : batch) costs.push_back(meta_cost(xi, scene, cfg));
  return costs;
}

ad::Var meta_cost_on_tape(ad::Tape& t, ad::Var xi_bar,
                          const SceneConstraints& scene,
                          const MetaCostConfig& cfg) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const BasisMatrices& basis = *scene.basis;
  const int m = basis.n_coef();
  const int n = basis.n_steps();
  const auto& g = scene.geom;

  const ad::Var cx = t.slice(xi_bar, 0, m);
  const ad::Var cy = t.slice(xi_bar, m, m);
  const ad::Var px = t.matvec(&basis.W, cx);
  const ad::Var py = t.matvec(&basis.W, cy);
  const ad::Var vx = t.matvec(&basis.Wd, cx);
  const ad::Var vy = t.matvec(&basis.Wd, cy);
  const ad::Var ax = t.matvec(&basis.Wdd, cx);
  const ad::Var ay = t.matvec(&basis.Wdd, cy);

  auto max0 = [&](ad::Var v) { return t.clamp(v, 0.0, kInf); };
  auto cvec = [&](double v) {
    return t.constant(Eigen::VectorXd::Constant(n, v));
  };

  // collision family: max over obstacles and instants of (1 - scaled distance)
  ad::Var coll;
  if (scene.n_obs == 0) {
    coll = t.constant(Eigen::VectorXd::Zero(1));
  } else {
    std::vector<ad::Var> viols;
    const ad::Var ones = cvec(1.0);
    for (int i = 0; i < scene.n_obs; ++i) {
      const ad::Var u = t.scale(
          t.sub(px, t.constant(scene.x_o.segment(i * n, n))), 1.0 / g.ellipse_a);
      const ad::Var v = t.scale(
          t.sub(py, t.constant(scene.y_o.segment(i * n, n))), 1.0 / g.ellipse_b);
      viols.push_back(max0(t.sub(ones, t.hypot(u, v))));
    }
    coll = t.maxcoef(t.concat(viols));
  }

  const ad::Var speed = t.hypot(vx, vy);
  const ad::Var vel_fam = t.maxcoef(t.concat(
      {max0(t.sub(speed, cvec(g.v_max))), max0(t.sub(cvec(g.v_min), speed))}));

  const ad::Var acc_fam = t.maxcoef(max0(t.sub(t.hypot(ax, ay), cvec(g.a_max))));

  const ad::Var lane_fam = t.maxcoef(t.concat(
      {max0(t.sub(py, cvec(g.y_ub))), max0(t.sub(cvec(g.y_lb), py))}));

  const ad::Var c_res =
      t.add(t.add(coll, vel_fam), t.add(acc_fam, lane_fam));

  const ad::Var dv = t.sub(vx, cvec(cfg.v_des));
  const ad::Var speed_dev = t.mean(t.mul(dv, dv));

  return t.add(t.scale(c_res, cfg.w_res), t.scale(speed_dev, cfg.w_speed));
}

std::pair<int, TrajectoryCoeffs> select_best(
    const std::vector<TrajectoryCoeffs>& xi_bar_batch,
    const std::vector<double>& costs) {
  if (xi_bar_batch.empty())
    throw std::invalid_argument("select_best: empty batch");
  if (xi_bar_batch.size() != costs.size())
    throw std::invalid_argument("select_best: size mismatch");
  int best = 0;
  for (int j = 1; j < static_cast<int>(costs.size()); ++j)
    if (costs[j] < costs[best]) best = j;
  return {best, xi_bar_batch[best]};
}

}  // namespace densedrive
