#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "densedrive/basis.hpp"
#include "densedrive/projection.hpp"

namespace densedrive::sim {

struct ScenarioConfig {
  int n_lanes = 2;
  double lane_width = 4.0;
  double density = 1.0;     // scales the nominal spawn gap as spawn_gap/density
  int n_vehicles = 10;
  double episode_len = 30.0;  // seconds
  double sim_dt = 0.1;
  std::uint64_t seed = 0;
  double vehicle_length = 5.0;
  double vehicle_width = 2.0;
  double v_max = 10.0;       // speed scale for neighbor nominal speeds
  double spawn_gap = 30.0;   // nominal same-lane gap at density 1
  double spawn_ahead = 20.0; // first vehicle at least this far ahead of ego
  double ego_speed0 = 5.0;

  double road_width() const { return n_lanes * lane_width; }
  double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
  void validate() const;
};

ScenarioConfig load_scenario_config(const std::string& path);
void save_scenario_config(const std::string& path, const ScenarioConfig& cfg);

struct EgoState {
  double x = 0, y = 0, psi = 0, vx = 0, vy = 0;
};

/// Rule-based neighbor: keeps its lane, follows its leader with an
/// intelligent-driver-model longitudinal law, ignores the ego.
struct NeighborVehicle {
  double x = 0, y = 0, vx = 0;
  int lane = 0;
  double nominal_speed = 0;  // IDM free speed v0
};

struct SimState {
  EgoState ego;
  std::vector<NeighborVehicle> neighbors;
  double t = 0;
  bool collided = false;  // latched
  std::uint64_t seed = 0;
};

/// Places neighbors lane-by-lane with seeded gaps and speeds; retries the
/// jitter until no rectangles overlap. Throws on failure after 100 retries.
SimState spawn_scenario(const ScenarioConfig& cfg);

/// Advances one step: double-integrator ego under (ax, ay), IDM neighbors,
/// rectangle-overlap collision latch (neighbors and road edges).
void step(SimState& state, const ScenarioConfig& cfg, double ego_ax,
          double ego_ay, double dt);

inline constexpr int kObservationSize = 55;
inline constexpr int kObservationSlots = 10;

/// 55 entries: ego (psi, vy, vx); ten closest neighbors by Euclidean
/// distance, each (dx, dy, vx, vy, present), absent slots zeroed; road
/// boundary offsets (y_min - y_ego, y_max - y_ego).
Eigen::VectorXd observe(const SimState& state, const ScenarioConfig& cfg);

/// Constant-velocity prediction of every present obstacle slot over the
/// grid, in the ego-centered road-aligned frame of the observation.
std::vector<ObstaclePath> predict_obstacles(const Eigen::VectorXd& obs,
                                            const TimeGrid& grid);

/// Appends far-away dummy paths so the constraint structure (and with it the
/// prefactored KKT system) has a fixed obstacle-slot count.
std::vector<ObstaclePath> pad_obstacles(std::vector<ObstaclePath> paths,
                                        int slots, const TimeGrid& grid,
                                        double far_distance = 1e4);

/// Oriented-rectangle overlap test (separating axes).
bool rectangles_overlap(double cx1, double cy1, double psi1, double len1,
                        double wid1, double cx2, double cy2, double psi2,
                        double len2, double wid2);

}  // namespace densedrive::sim
