#include "densedrive/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "densedrive/rng.hpp"

namespace densedrive::sim {

void ScenarioConfig::validate() const {
  if (n_lanes < 1) throw std::invalid_argument("ScenarioConfig: n_lanes >= 1");
  if (lane_width <= 0) throw std::invalid_argument("ScenarioConfig: lane_width > 0");
  if (density <= 0) throw std::invalid_argument("ScenarioConfig: density > 0");
  if (n_vehicles < 0) throw std::invalid_argument("ScenarioConfig: n_vehicles >= 0");
  if (sim_dt <= 0) throw std::invalid_argument("ScenarioConfig: sim_dt > 0");
  if (episode_len <= 0) throw std::invalid_argument("ScenarioConfig: episode_len > 0");
  if (vehicle_length <= 0 || vehicle_width <= 0)
    throw std::invalid_argument("ScenarioConfig: vehicle dims > 0");
  if (v_max <= 0) throw std::invalid_argument("ScenarioConfig: v_max > 0");
}

ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("scenario config: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("scenario config: parse error: " +
                                std::string(e.what()));
  }
  ScenarioConfig c;
  c.n_lanes = j.value("n_lanes", c.n_lanes);
  c.lane_width = j.value("lane_width", c.lane_width);
  c.density = j.value("density", c.density);
  c.n_vehicles = j.value("n_vehicles", c.n_vehicles);
  c.episode_len = j.value("episode_len", c.episode_len);
  c.sim_dt = j.value("sim_dt", c.sim_dt);
  c.seed = j.value("seed", c.seed);
  c.vehicle_length = j.value("vehicle_length", c.vehicle_length);
  c.vehicle_width = j.value("vehicle_width", c.vehicle_width);
  c.v_max = j.value("v_max", c.v_max);
  c.spawn_gap = j.value("spawn_gap", c.spawn_gap);
  c.spawn_ahead = j.value("spawn_ahead", c.spawn_ahead);
  c.ego_speed0 = j.value("ego_speed0", c.ego_speed0);
  c.validate();
  return c;
}

void save_scenario_config(const std::string& path, const ScenarioConfig& c) {
  nlohmann::json j{
      {"n_lanes", c.n_lanes},         {"lane_width", c.lane_width},
      {"density", c.density},         {"n_vehicles", c.n_vehicles},
      {"episode_len", c.episode_len}, {"sim_dt", c.sim_dt},
      {"seed", c.seed},               {"vehicle_length", c.vehicle_length},
      {"vehicle_width", c.vehicle_width}, {"v_max", c.v_max},
      {"spawn_gap", c.spawn_gap},     {"spawn_ahead", c.spawn_ahead},
      {"ego_speed0", c.ego_speed0},
  };
  std::ofstream f(path);
  if (!f) throw std::runtime_error("scenario config: cannot write " + path);
  f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

bool rectangles_overlap(double cx1, double cy1, double psi1, double len1,
                        double wid1, double cx2, double cy2, double psi2,
                        double len2, double wid2) {
  struct Rect {
    double corners[4][2];
    double axes[2][2];
  };
  auto build = [](double cx, double cy, double psi, double len, double wid) {
    Rect r;
    const double c = std::cos(psi), s = std::sin(psi);
    const double hl = 0.5 * len, hw = 0.5 * wid;
    const double ex[2] = {c, s}, ey[2] = {-s, c};
    for (int i = 0; i < 4; ++i) {
      const double sx = (i == 0 || i == 3) ? hl : -hl;
      const double sy = (i < 2) ? hw : -hw;
      r.corners[i][0] = cx + sx * ex[0] + sy * ey[0];
      r.corners[i][1] = cy + sx * ex[1] + sy * ey[1];
    }
    r.axes[0][0] = ex[0]; r.axes[0][1] = ex[1];
    r.axes[1][0] = ey[0]; r.axes[1][1] = ey[1];
    return r;
  };
  const Rect r1 = build(cx1, cy1, psi1, len1, wid1);
  const Rect r2 = build(cx2, cy2, psi2, len2, wid2);
  const Rect* rects[2] = {&r1, &r2};
  for (const Rect* r : rects) {
    for (const auto& ax : r->axes) {
      double lo1 = 1e300, hi1 = -1e300, lo2 = 1e300, hi2 = -1e300;
      for (int i = 0; i < 4; ++i) {
        const double p1 = r1.corners[i][0] * ax[0] + r1.corners[i][1] * ax[1];
        const double p2 = r2.corners[i][0] * ax[0] + r2.corners[i][1] * ax[1];
        lo1 = std::min(lo1, p1); hi1 = std::max(hi1, p1);
        lo2 = std::min(lo2, p2); hi2 = std::max(hi2, p2);
      }
      if (hi1 < lo2 || hi2 < lo1) return false;  // separating axis found
    }
  }
  return true;
}

namespace {

bool ego_out_of_road(const EgoState& ego, const ScenarioConfig& cfg) {
  const double c = std::cos(ego.psi), s = std::sin(ego.psi);
  const double hl = 0.5 * cfg.vehicle_length, hw = 0.5 * cfg.vehicle_width;
  const double extent = std::abs(s) * hl + std::abs(c) * hw;
  return ego.y - extent < 0.0 || ego.y + extent > cfg.road_width();
}

bool any_collision(const SimState& st, const ScenarioConfig& cfg) {
  if (ego_out_of_road(st.ego, cfg)) return true;
  for (const auto& nb : st.neighbors)
    if (rectangles_overlap(st.ego.x, st.ego.y, st.ego.psi, cfg.vehicle_length,
                           cfg.vehicle_width, nb.x, nb.y, 0.0,
                           cfg.vehicle_length, cfg.vehicle_width))
      return true;
  return false;
}

}  // namespace

SimState spawn_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  SimState st;
  st.seed = cfg.seed;
  st.ego.x = 0.0;
  st.ego.y = cfg.lane_center((cfg.n_lanes - 1) / 2);
  st.ego.vx = cfg.ego_speed0;

  const double gap = cfg.spawn_gap / cfg.density;
  for (int attempt = 0; attempt < 100; ++attempt) {
    rng::Engine eng(rng::derive(cfg.seed, 0x5Aull, attempt));
    st.neighbors.clear();
    std::vector<double> lane_front(cfg.n_lanes, cfg.spawn_ahead);
    for (int i = 0; i < cfg.n_vehicles; ++i) {
      NeighborVehicle nb;
      nb.lane = i % cfg.n_lanes;
      nb.y = cfg.lane_center(nb.lane);
      nb.x = lane_front[nb.lane] + gap * eng.uniform(0.75, 1.25);
      lane_front[nb.lane] = nb.x;
      nb.nominal_speed = cfg.v_max * eng.uniform(0.4, 0.8);
      nb.vx = nb.nominal_speed;
      st.neighbors.push_back(nb);
    }
    bool clear = !any_collision(st, cfg);
    for (std::size_t a = 0; clear && a < st.neighbors.size(); ++a)
      for (std::size_t b = a + 1; clear && b < st.neighbors.size(); ++b) {
        const auto& na = st.neighbors[a];
        const auto& nb = st.neighbors[b];
        if (na.lane == nb.lane &&
            std::abs(na.x - nb.x) < cfg.vehicle_length + 1.0)
          clear = false;
      }
    if (clear) return st;
  }
  throw std::runtime_error("spawn_scenario: could not place vehicles without overlap");
}

namespace {

/// IDM parameters; headway and decel chosen for smooth non-aggressive flow.
struct Idm {
  static constexpr double headway = 2.0;       // s
  static constexpr double min_gap = 2.0;       // m
  static constexpr double max_accel = 1.5;     // m/s^2
  static constexpr double comfort_decel = 2.0; // m/s^2
};

double idm_accel(const NeighborVehicle& nb, const NeighborVehicle* leader,
                 double vehicle_length) {
  const double v = std::max(nb.vx, 0.0);
  const double free_term = std::pow(v / nb.nominal_speed, 4.0);
  if (!leader) return Idm::max_accel * (1.0 - free_term);
  const double gap = leader->x - nb.x - vehicle_length;
  const double dv = v - leader->vx;
  const double s_star =
      Idm::min_gap + v * Idm::headway +
      v * dv / (2.0 * std::sqrt(Idm::max_accel * Idm::comfort_decel));
  const double s = std::max(gap, 0.1);
  return Idm::max_accel *
         (1.0 - free_term - (s_star / s) * (s_star / s));
}

}  // namespace

void step(SimState& st, const ScenarioConfig& cfg, double ego_ax, double ego_ay,
          double dt) {
  if (dt <= 0) throw std::invalid_argument("sim::step: dt > 0");

  // neighbors: IDM towards the nearest same-lane leader (ego is ignored;
  // the world model is non-reactive to the planner under test)
  std::vector<double> accel(st.neighbors.size(), 0.0);
  for (std::size_t i = 0; i < st.neighbors.size(); ++i) {
    const NeighborVehicle* leader = nullptr;
    for (std::size_t j = 0; j < st.neighbors.size(); ++j) {
      if (i == j || st.neighbors[j].lane != st.neighbors[i].lane) continue;
      if (st.neighbors[j].x <= st.neighbors[i].x) continue;
      if (!leader || st.neighbors[j].x < leader->x) leader = &st.neighbors[j];
    }
    accel[i] = idm_accel(st.neighbors[i], leader, cfg.vehicle_length);
  }
  for (std::size_t i = 0; i < st.neighbors.size(); ++i) {
    auto& nb = st.neighbors[i];
    nb.vx = std::max(0.0, nb.vx + accel[i] * dt);
    nb.x += nb.vx * dt;
  }

  // ego: double integrator in the road frame
  st.ego.x += st.ego.vx * dt + 0.5 * ego_ax * dt * dt;
  st.ego.y += st.ego.vy * dt + 0.5 * ego_ay * dt * dt;
  st.ego.vx += ego_ax * dt;
  st.ego.vy += ego_ay * dt;
  st.ego.psi = (st.ego.vx == 0.0 && st.ego.vy == 0.0)
                   ? st.ego.psi
                   : std::atan2(st.ego.vy, st.ego.vx);
  st.t += dt;

  if (!st.collided && any_collision(st, cfg)) st.collided = true;
}

Eigen::VectorXd observe(const SimState& st, const ScenarioConfig& cfg) {
  Eigen::VectorXd o = Eigen::VectorXd::Zero(kObservationSize);
  o(0) = st.ego.psi;
  o(1) = st.ego.vy;
  o(2) = st.ego.vx;

  std::vector<int> idx(st.neighbors.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const auto& na = st.neighbors[a];
    const auto& nb = st.neighbors[b];
    const double da = std::hypot(na.x - st.ego.x, na.y - st.ego.y);
    const double db = std::hypot(nb.x - st.ego.x, nb.y - st.ego.y);
    return da < db;
  });
  const int slots = std::min<int>(kObservationSlots, static_cast<int>(idx.size()));
  for (int k = 0; k < slots; ++k) {
    const auto& nb = st.neighbors[idx[k]];
    const int base = 3 + 5 * k;
    o(base + 0) = nb.x - st.ego.x;
    o(base + 1) = nb.y - st.ego.y;
    o(base + 2) = nb.vx;
    o(base + 3) = 0.0;  // lane-keeping neighbors have no lateral speed
    o(base + 4) = 1.0;
  }
  o(53) = 0.0 - st.ego.y;
  o(54) = cfg.road_width() - st.ego.y;
  return o;
}

std::vector<ObstaclePath> predict_obstacles(const Eigen::VectorXd& obs,
                                            const TimeGrid& grid) {
  if (obs.size() != kObservationSize)
    throw std::invalid_argument("predict_obstacles: expected 55 entries");
  std::vector<ObstaclePath> paths;
  const int n = grid.n_steps;
  for (int k = 0; k < kObservationSlots; ++k) {
    const int base = 3 + 5 * k;
    if (obs(base + 4) == 0.0) continue;
    ObstaclePath p;
    p.x.resize(n);
    p.y.resize(n);
    for (int i = 0; i < n; ++i) {
      const double dt = grid.at(i) - grid.t0;
      p.x(i) = obs(base + 0) + obs(base + 2) * dt;
      p.y(i) = obs(base + 1) + obs(base + 3) * dt;
    }
    paths.push_back(std::move(p));
  }
  return paths;
}

std::vector<ObstaclePath> pad_obstacles(std::vector<ObstaclePath> paths,
                                        int slots, const TimeGrid& grid,
                                        double far_distance) {
  if (static_cast<int>(paths.size()) > slots)
    throw std::invalid_argument("pad_obstacles: more obstacles than slots");
  const int n = grid.n_steps;
  int k = 0;
  while (static_cast<int>(paths.size()) < slots) {
    ObstaclePath p;
    // dummies sit far behind, spread out so they never bind
    p.x = Eigen::VectorXd::Constant(n, -far_distance * (1.0 + 0.01 * k));
    p.y = Eigen::VectorXd::Constant(n, 0.0);
    paths.push_back(std::move(p));
    ++k;
  }
  return paths;
}

}  // namespace densedrive::sim
