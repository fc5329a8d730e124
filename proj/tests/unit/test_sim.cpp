#include <doctest.h>

#include "densedrive/sim.hpp"
#include "support/fixtures.hpp"

using namespace densedrive;
using namespace densedrive::sim;

TEST_SUITE_BEGIN("sim");

namespace {

ScenarioConfig two_lane(std::uint64_t seed = 0) {
  ScenarioConfig c;
  c.n_lanes = 2;
  c.n_vehicles = 8;
  c.seed = seed;
  return c;
}

bool states_equal(const SimState& a, const SimState& b) {
  if (a.neighbors.size() != b.neighbors.size()) return false;
  if (a.ego.x != b.ego.x || a.ego.y != b.ego.y || a.ego.vx != b.ego.vx ||
      a.ego.vy != b.ego.vy)
    return false;
  for (std::size_t i = 0; i < a.neighbors.size(); ++i) {
    const auto& na = a.neighbors[i];
    const auto& nb = b.neighbors[i];
    if (na.x != nb.x || na.y != nb.y || na.vx != nb.vx || na.lane != nb.lane)
      return false;
  }
  return a.collided == b.collided;
}

}  // namespace

TEST_CASE("spawn determinism and density scaling") {
  const auto a = spawn_scenario(two_lane(7));
  const auto b = spawn_scenario(two_lane(7));
  CHECK(states_equal(a, b));

  SUBCASE("different seed differs") {
    const auto c = spawn_scenario(two_lane(8));
    CHECK_FALSE(states_equal(a, c));
  }

  SUBCASE("higher density packs vehicles tighter") {
    double gap_low = 0.0, gap_high = 0.0;
    int n_low = 0, n_high = 0;
    for (int seed = 0; seed < 20; ++seed) {
      for (const double density : {1.0, 3.0}) {
        ScenarioConfig cfg = two_lane(seed);
        cfg.density = density;
        const auto st = spawn_scenario(cfg);
        // mean same-lane consecutive gap
        for (int lane = 0; lane < cfg.n_lanes; ++lane) {
          std::vector<double> xs;
          for (const auto& nb : st.neighbors)
            if (nb.lane == lane) xs.push_back(nb.x);
          std::sort(xs.begin(), xs.end());
          for (std::size_t i = 1; i < xs.size(); ++i) {
            if (density == 1.0) {
              gap_low += xs[i] - xs[i - 1];
              ++n_low;
            } else {
              gap_high += xs[i] - xs[i - 1];
              ++n_high;
            }
          }
        }
      }
    }
    CHECK(gap_high / n_high < gap_low / n_low);
  }

  SUBCASE("no vehicles means no collisions ever") {
    ScenarioConfig cfg = two_lane(3);
    cfg.n_vehicles = 0;
    auto st = spawn_scenario(cfg);
    CHECK(st.neighbors.empty());
    for (int i = 0; i < 100; ++i) step(st, cfg, 0.2, 0.0, cfg.sim_dt);
    CHECK_FALSE(st.collided);
  }

  SUBCASE("impossible packing raises a spawn error") {
    ScenarioConfig cfg = two_lane(3);
    cfg.n_lanes = 1;
    cfg.n_vehicles = 200;
    cfg.density = 50.0;
    CHECK_THROWS_AS(spawn_scenario(cfg), std::runtime_error);
  }
}

TEST_CASE("ego integrates a double integrator") {
  ScenarioConfig cfg = two_lane(1);
  cfg.n_vehicles = 0;
  auto st = spawn_scenario(cfg);
  const double x0 = st.ego.x, v0 = st.ego.vx;
  for (int i = 0; i < 50; ++i) step(st, cfg, 0.0, 0.0, cfg.sim_dt);
  CHECK(st.ego.vx == doctest::Approx(v0));
  CHECK(st.ego.x == doctest::Approx(x0 + v0 * 50 * cfg.sim_dt));

  SUBCASE("constant acceleration") {
    auto s2 = spawn_scenario(cfg);
    for (int i = 0; i < 50; ++i) step(s2, cfg, 1.0, 0.0, cfg.sim_dt);
    const double t = 50 * cfg.sim_dt;
    CHECK(s2.ego.vx == doctest::Approx(v0 + t));
    CHECK(s2.ego.x == doctest::Approx(x0 + v0 * t + 0.5 * t * t).epsilon(1e-9));
  }
}

TEST_CASE("neighbors approach but never exceed their nominal speed") {
  ScenarioConfig cfg = two_lane(5);
  cfg.n_vehicles = 6;
  auto st = spawn_scenario(cfg);
  for (auto& nb : st.neighbors) nb.vx = 0.3 * nb.nominal_speed;
  for (int i = 0; i < 2000; ++i) {
    step(st, cfg, 0.0, 0.0, cfg.sim_dt);
    for (const auto& nb : st.neighbors)
      CHECK(nb.vx <= nb.nominal_speed + 1e-6);
  }
  // the leader of each lane has free road and converges to nominal
  for (int lane = 0; lane < cfg.n_lanes; ++lane) {
    const NeighborVehicle* front = nullptr;
    for (const auto& nb : st.neighbors)
      if (nb.lane == lane && (!front || nb.x > front->x)) front = &nb;
    if (front) CHECK(front->vx == doctest::Approx(front->nominal_speed).epsilon(1e-3));
  }
}

TEST_CASE("collision latch") {
  ScenarioConfig cfg = two_lane(2);
  cfg.n_vehicles = 1;
  auto st = spawn_scenario(cfg);
  // teleport ego onto the neighbor
  st.ego.x = st.neighbors[0].x;
  st.ego.y = st.neighbors[0].y;
  step(st, cfg, 0.0, 0.0, cfg.sim_dt);
  CHECK(st.collided);
  // latched even after moving apart
  st.ego.x -= 50.0;
  for (int i = 0; i < 10; ++i) step(st, cfg, 0.0, 0.0, cfg.sim_dt);
  CHECK(st.collided);

  SUBCASE("leaving the road also latches") {
    auto s2 = spawn_scenario(cfg);
    s2.ego.vy = 0.0;
    s2.ego.y = cfg.road_width() - 0.4;  // rectangle pokes out
    step(s2, cfg, 0.0, 0.0, cfg.sim_dt);
    CHECK(s2.collided);
  }
}

TEST_CASE("rectangle overlap test") {
  CHECK(rectangles_overlap(0, 0, 0, 5, 2, 4, 0, 0, 5, 2));
  CHECK_FALSE(rectangles_overlap(0, 0, 0, 5, 2, 6, 0, 0, 5, 2));
  CHECK_FALSE(rectangles_overlap(0, 0, 0, 5, 2, 0, 2.5, 0, 5, 2));
  // rotated ego clips a laterally adjacent rectangle
  CHECK(rectangles_overlap(0, 0, 0.5, 5, 2, 0, 2.4, 0, 5, 2));
}

TEST_CASE("observation layout and ordering") {
  ScenarioConfig cfg = two_lane(4);
  cfg.n_vehicles = 12;
  auto st = spawn_scenario(cfg);
  const Eigen::VectorXd o = observe(st, cfg);
  REQUIRE(o.size() == 55);
  CHECK(o(0) == st.ego.psi);
  CHECK(o(1) == st.ego.vy);
  CHECK(o(2) == st.ego.vx);
  CHECK(o(53) == -st.ego.y);
  CHECK(o(54) == cfg.road_width() - st.ego.y);

  // distances ascend over present slots; two farthest neighbors are dropped
  double prev = 0.0;
  for (int k = 0; k < 10; ++k) {
    const int base = 3 + 5 * k;
    CHECK(o(base + 4) == 1.0);
    const double d = std::hypot(o(base), o(base + 1));
    CHECK(d >= prev);
    prev = d;
  }
  double excluded_min = 1e18;
  int present = 0;
  for (const auto& nb : st.neighbors) {
    const double d = std::hypot(nb.x - st.ego.x, nb.y - st.ego.y);
    if (d > prev) {
      excluded_min = std::min(excluded_min, d);
      ++present;
    }
  }
  CHECK(present == 2);  // 12 spawned, 10 kept

  SUBCASE("no neighbors zero the obstacle block") {
    ScenarioConfig empty = cfg;
    empty.n_vehicles = 0;
    const auto st0 = spawn_scenario(empty);
    const Eigen::VectorXd o0 = observe(st0, empty);
    CHECK(o0.segment(3, 50).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("single neighbor ahead fills slot zero") {
    ScenarioConfig one = cfg;
    one.n_vehicles = 1;
    auto st1 = spawn_scenario(one);
    st1.neighbors[0].x = st1.ego.x + 10.0;
    st1.neighbors[0].y = st1.ego.y;
    const Eigen::VectorXd o1 = observe(st1, one);
    CHECK(o1(3) == doctest::Approx(10.0));
    CHECK(o1(7) == 1.0);
  }
}

TEST_CASE("constant-velocity prediction") {
  const TimeGrid grid{0.0, 10.0, 100};
  Eigen::VectorXd o = Eigen::VectorXd::Zero(55);
  o(3) = 5.0;   // dx
  o(4) = 1.0;   // dy
  o(5) = 2.0;   // vx
  o(7) = 1.0;   // present
  const auto paths = predict_obstacles(o, grid);
  REQUIRE(paths.size() == 1);
  // dx + vx * t at t = 3
  int idx3 = -1;
  for (int i = 0; i < grid.n_steps; ++i)
    if (std::abs(grid.at(i) - 3.0) < grid.dt() / 2) idx3 = i;
  REQUIRE(idx3 >= 0);
  CHECK(paths[0].x(idx3) ==
        doctest::Approx(5.0 + 2.0 * grid.at(idx3)).epsilon(1e-12));
  CHECK(paths[0].y(idx3) == doctest::Approx(1.0));

  SUBCASE("stationary obstacle keeps a constant path") {
    Eigen::VectorXd os = Eigen::VectorXd::Zero(55);
    os(3) = 7.0;
    os(7) = 1.0;
    const auto p = predict_obstacles(os, grid);
    CHECK((p[0].x.array() - 7.0).abs().maxCoeff() == 0.0);
  }

  SUBCASE("absent slots produce no paths") {
    CHECK(predict_obstacles(Eigen::VectorXd::Zero(55), grid).empty());
  }

  SUBCASE("padding fills far dummies up to the slot count") {
    auto p = predict_obstacles(o, grid);
    const auto padded = pad_obstacles(p, 10, grid);
    CHECK(padded.size() == 10);
    for (std::size_t i = 1; i < padded.size(); ++i)
      CHECK(padded[i].x.cwiseAbs().minCoeff() >= 1e3);
  }
}

TEST_CASE("scenario config io") {
  ScenarioConfig cfg = two_lane(9);
  cfg.density = 2.5;
  cfg.n_lanes = 4;
  save_scenario_config("test_scenario.json", cfg);
  const auto back = load_scenario_config("test_scenario.json");
  CHECK(back.density == 2.5);
  CHECK(back.n_lanes == 4);
  CHECK(back.seed == 9);
  std::remove("test_scenario.json");

  SUBCASE("missing file raises a config error") {
    CHECK_THROWS_AS(load_scenario_config("no_such_file.json"),
                    std::invalid_argument);
  }
}

TEST_SUITE_END();
