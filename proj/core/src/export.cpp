#include "densedrive/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace densedrive::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string benchmark_csv(const harness::BenchmarkReport& report) {
  std::ostringstream os;
  os << "n_lanes,density,planner,collision_rate_pct,avg_speed,speed_std,"
        "n_episodes,base_seed\n";
  for (const auto& c : report.cells) {
    os << c.n_lanes << ',' << format_double(c.density) << ',' << c.planner
       << ',' << format_double(c.collision_rate_pct) << ','
       << format_double(c.avg_speed) << ',' << format_double(c.speed_std) << ','
       << c.n_episodes << ',' << c.base_seed << '\n';
  }
  return os.str();
}

std::string benchmark_json(const harness::BenchmarkReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"n_lanes", c.n_lanes},
                     {"density", c.density},
                     {"planner", c.planner},
                     {"collision_rate_pct", c.collision_rate_pct},
                     {"avg_speed", c.avg_speed},
                     {"speed_std", c.speed_std},
                     {"n_episodes", c.n_episodes},
                     {"base_seed", c.base_seed}});
  }
  return nlohmann::json{{"cells", cells}}.dump(2) + "\n";
}

std::string residual_trace_csv(const std::vector<ProjectionState>& states) {
  std::ostringstream os;
  os << "iteration,sample_index,residual\n";
  for (std::size_t j = 0; j < states.size(); ++j)
    for (std::size_t k = 0; k < states[j].residual_trace.size(); ++k)
      os << k << ',' << j << ',' << format_double(states[j].residual_trace[k])
         << '\n';
  return os.str();
}

std::string episode_trace_csv(const std::vector<harness::EpisodeTraceRow>& rows,
                              int n_vehicles) {
  std::ostringstream os;
  os << "t,ego_x,ego_y,ego_psi,ego_vx,ego_vy,collided";
  for (int i = 0; i < n_vehicles; ++i)
    os << ",nb" << i << "_x,nb" << i << "_y,nb" << i << "_vx";
  os << '\n';
  for (const auto& r : rows) {
    os << format_double(r.t) << ',' << format_double(r.ego.x) << ','
       << format_double(r.ego.y) << ',' << format_double(r.ego.psi) << ','
       << format_double(r.ego.vx) << ',' << format_double(r.ego.vy) << ','
       << (r.collided ? 1 : 0);
    for (int i = 0; i < n_vehicles; ++i) {
      if (i < static_cast<int>(r.neighbors.size())) {
        const auto& nb = r.neighbors[i];
        os << ',' << format_double(nb.x) << ',' << format_double(nb.y) << ','
           << format_double(nb.vx);
      } else {
        os << ",,,";
      }
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

namespace {

struct SvgCanvas {
  std::ostringstream os;
  double width, height;

  SvgCanvas(double w, double h) : width(w), height(h) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
       << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
       << "\">\n";
    os << "<rect width=\"" << w << "\" height=\"" << h
       << "\" fill=\"white\"/>\n";
  }
  std::string finish() {
    os << "</svg>\n";
    return os.str();
  }
};

std::string color_for(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[i % 8];
}

}  // namespace

std::string svg_residual_curves(const std::vector<ProjectionState>& states) {
  const double W = 640, H = 420, ml = 60, mr = 15, mt = 15, mb = 40;
  std::size_t n_iter = 0;
  for (const auto& s : states)
    n_iter = std::max(n_iter, s.residual_trace.size());
  if (n_iter == 0) throw std::invalid_argument("svg_residual_curves: no traces");

  const double lo = 1e-8, hi = 1e2;
  auto xmap = [&](double k) { return ml + (W - ml - mr) * k / std::max<std::size_t>(1, n_iter - 1); };
  auto ymap = [&](double r) {
    const double lr = std::log10(std::clamp(r, lo, hi));
    return mt + (H - mt - mb) * (std::log10(hi) - lr) /
                    (std::log10(hi) - std::log10(lo));
  };

  SvgCanvas svg(W, H);
  // axes and decade gridlines
  for (int d = -8; d <= 2; d += 2) {
    const double y = ymap(std::pow(10.0, d));
    svg.os << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << W - mr
           << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
    svg.os << "<text x=\"8\" y=\"" << y + 4 << "\" font-size=\"11\">1e" << d
           << "</text>\n";
  }
  svg.os << "<text x=\"" << W / 2 - 30 << "\" y=\"" << H - 10
         << "\" font-size=\"12\">iteration</text>\n";

  for (std::size_t j = 0; j < states.size(); ++j) {
    const auto& tr = states[j].residual_trace;
    if (tr.empty()) continue;
    svg.os << "<polyline fill=\"none\" stroke=\"" << color_for(j)
           << "\" stroke-opacity=\"0.35\" stroke-width=\"1\" points=\"";
    for (std::size_t k = 0; k < tr.size(); ++k)
      svg.os << xmap(static_cast<double>(k)) << ',' << ymap(tr[k]) << ' ';
    svg.os << "\"/>\n";
  }
  return svg.finish();
}

std::string svg_scene(const std::vector<TrajectoryCoeffs>& trajectories,
                      const SceneConstraints& scene) {
  const BasisMatrices& basis = *scene.basis;
  const int m = basis.n_coef();
  const int n = basis.n_steps();

  double x_min = 0, x_max = 1, y_min = scene.geom.y_lb - 2,
         y_max = scene.geom.y_ub + 2;
  for (const auto& xi : trajectories) {
    const Eigen::VectorXd px = basis.W * xi.head(m);
    x_min = std::min(x_min, px.minCoeff());
    x_max = std::max(x_max, px.maxCoeff());
  }
  for (int i = 0; i < scene.n_obs; ++i) {
    x_min = std::min(x_min, scene.x_o(i * n));
    x_max = std::max(x_max, scene.x_o(i * n));
  }
  x_min -= 5;
  x_max += 5;

  const double W = 900, H = 300;
  auto xmap = [&](double x) { return (x - x_min) / (x_max - x_min) * W; };
  auto ymap = [&](double y) { return H - (y - y_min) / (y_max - y_min) * H; };

  SvgCanvas svg(W, H);
  // lane bounds
  for (const double yb : {scene.geom.y_lb, scene.geom.y_ub})
    svg.os << "<line x1=\"0\" y1=\"" << ymap(yb) << "\" x2=\"" << W
           << "\" y2=\"" << ymap(yb)
           << "\" stroke=\"#444444\" stroke-dasharray=\"8 4\"/>\n";
  // obstacle footprints at t0 (ellipse axes as the footprint proxy)
  for (int i = 0; i < scene.n_obs; ++i) {
    const double ox = scene.x_o(i * n);
    const double oy = scene.y_o(i * n);
    if (std::abs(ox) > 1e3) continue;  // padded dummies stay off-canvas
    svg.os << "<rect x=\"" << xmap(ox - 2.5) << "\" y=\"" << ymap(oy + 1.0)
           << "\" width=\"" << xmap(ox + 2.5) - xmap(ox - 2.5) << "\" height=\""
           << ymap(oy - 1.0) - ymap(oy + 1.0)
           << "\" fill=\"#4477cc\" fill-opacity=\"0.8\"/>\n";
  }
  for (std::size_t j = 0; j < trajectories.size(); ++j) {
    const Eigen::VectorXd px = basis.W * trajectories[j].head(m);
    const Eigen::VectorXd py = basis.W * trajectories[j].tail(m);
    svg.os << "<polyline fill=\"none\" stroke=\"" << color_for(j)
           << "\" stroke-opacity=\"0.4\" points=\"";
    for (int i = 0; i < n; ++i)
      svg.os << xmap(px(i)) << ',' << ymap(py(i)) << ' ';
    svg.os << "\"/>\n";
  }
  return svg.finish();
}

std::string svg_benchmark_bars(const harness::BenchmarkReport& report) {
  if (report.cells.empty())
    throw std::invalid_argument("svg_benchmark_bars: empty report");
  const double W = 760, H = 360, ml = 50, mb = 70, mt = 20;
  const std::size_t n = report.cells.size();
  const double bw = (W - ml - 20) / static_cast<double>(n);

  double max_rate = 1.0;
  for (const auto& c : report.cells)
    max_rate = std::max(max_rate, c.collision_rate_pct);

  SvgCanvas svg(W, H);
  for (int tick = 0; tick <= 5; ++tick) {
    const double frac = tick / 5.0;
    const double y = H - mb - (H - mb - mt) * frac;
    svg.os << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << W - 10
           << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n"
           << "<text x=\"6\" y=\"" << y + 4 << "\" font-size=\"11\">"
           << format_double(max_rate * frac) << "%</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = report.cells[i];
    const double h = (H - mb - mt) * c.collision_rate_pct / max_rate;
    const double x = ml + bw * static_cast<double>(i);
    svg.os << "<rect x=\"" << x + 2 << "\" y=\"" << H - mb - h << "\" width=\""
           << bw - 4 << "\" height=\"" << h << "\" fill=\"" << color_for(i)
           << "\"/>\n";
    svg.os << "<text x=\"" << x + bw / 2 << "\" y=\"" << H - mb + 12
           << "\" font-size=\"9\" text-anchor=\"middle\">" << c.planner
           << "</text>\n";
    svg.os << "<text x=\"" << x + bw / 2 << "\" y=\"" << H - mb + 24
           << "\" font-size=\"9\" text-anchor=\"middle\">" << c.n_lanes << "L d"
           << format_double(c.density) << "</text>\n";
  }
  return svg.finish();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_text: cannot open " + path);
  f << content;
  if (!f) throw std::runtime_error("write_text: write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_text: cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace densedrive::io
