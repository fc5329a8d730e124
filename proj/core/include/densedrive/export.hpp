#pragma once

#include <string>
#include <vector>

#include "densedrive/harness.hpp"
#include "densedrive/projection.hpp"

namespace densedrive::io {

/// Writers return strings so tests can assert byte stability; write_text
/// puts them on disk. Doubles are printed with a fixed %.10g format, so
/// identical inputs always serialize identically.

std::string format_double(double v);

std::string benchmark_csv(const harness::BenchmarkReport& report);
std::string benchmark_json(const harness::BenchmarkReport& report);

/// iteration,sample_index,residual rows; one row per iteration per sample.
std::string residual_trace_csv(const std::vector<ProjectionState>& states);

std::string episode_trace_csv(const std::vector<harness::EpisodeTraceRow>& rows,
                              int n_vehicles);

/// Residual-vs-iteration curves on a log scale, one polyline per sample.
std::string svg_residual_curves(const std::vector<ProjectionState>& states);

/// Scene overlay: lane lines, obstacle footprints at t0, one polyline per
/// trajectory (positions sampled on the grid).
std::string svg_scene(const std::vector<TrajectoryCoeffs>& trajectories,
                      const SceneConstraints& scene);

/// Grouped bars of collision rate per (lanes, density) cell.
std::string svg_benchmark_bars(const harness::BenchmarkReport& report);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace densedrive::io
