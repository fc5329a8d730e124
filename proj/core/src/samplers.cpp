#include "densedrive/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "densedrive/rng.hpp"

namespace densedrive {

std::vector<BehavioralInput> grid_sampler(const GridSpec& spec,
                                          const std::vector<double>& lane_centers,
                                          int m_seg) {
  if (spec.lateral_offsets.empty() || spec.speed_setpoints.empty())
    throw std::invalid_argument("grid_sampler: offset and speed lists must be nonempty");
  if (lane_centers.empty())
    throw std::invalid_argument("grid_sampler: need at least one lane");
  if (m_seg < 1) throw std::invalid_argument("grid_sampler: m_seg >= 1");

  const std::size_t cell = spec.lateral_offsets.size() * spec.speed_setpoints.size();
  std::size_t total = lane_centers.size();
  if (spec.per_segment) {
    for (int s = 0; s < m_seg; ++s) {
      total *= cell;
      if (total > spec.max_batch)
        throw std::invalid_argument("grid_sampler: per-segment product exceeds cap");
    }
  } else {
    total *= cell;
  }
  if (total > spec.max_batch)
    throw std::invalid_argument("grid_sampler: grid product exceeds cap");

  std::vector<BehavioralInput> out;
  out.reserve(total);

  if (!spec.per_segment) {
    for (const double lane : lane_centers)
      for (const double off : spec.lateral_offsets)
        for (const double v : spec.speed_setpoints) {
          BehavioralInput p;
          p.y_d = Eigen::VectorXd::Constant(m_seg, lane + off);
          p.v_d = Eigen::VectorXd::Constant(m_seg, v);
          out.push_back(std::move(p));
        }
    return out;
  }

  // per-segment: lexicographic enumeration of (offset, speed) per segment
  const int n_off = static_cast<int>(spec.lateral_offsets.size());
  const int n_spd = static_cast<int>(spec.speed_setpoints.size());
  const std::size_t combos_per_lane = total / lane_centers.size();
  for (const double lane : lane_centers) {
    for (std::size_t code = 0; code < combos_per_lane; ++code) {
      BehavioralInput p;
      p.y_d.resize(m_seg);
      p.v_d.resize(m_seg);
      std::size_t rem = code;
      for (int s = m_seg - 1; s >= 0; --s) {
        const std::size_t c = rem % cell;
        rem /= cell;
        p.y_d(s) = lane + spec.lateral_offsets[c / n_spd];
        p.v_d(s) = spec.speed_setpoints[c % n_spd];
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

void SamplingDistribution::validate() const {
  if (mean.size() == 0 || cov_diag.size() != mean.size())
    throw std::invalid_argument("SamplingDistribution: mean/cov size mismatch");
  if ((cov_diag.array() <= 0).any())
    throw std::invalid_argument("SamplingDistribution: variances must be positive");
}

std::vector<GaussianSample> gaussian_sampler(const SamplingDistribution& dist,
                                             int n, std::uint64_t seed,
                                             const BehaviorBounds& bounds,
                                             int m_seg, int n_lambda) {
  dist.validate();
  if (n < 1) throw std::invalid_argument("gaussian_sampler: n >= 1");
  const int np = 2 * m_seg;
  const bool with_lambda = dist.mean.size() == np + n_lambda;
  if (!with_lambda && dist.mean.size() != np)
    throw std::invalid_argument("gaussian_sampler: mean must cover p or p+lambda");

  const Eigen::VectorXd sigma = dist.cov_diag.cwiseSqrt();
  const Eigen::VectorXd lo = bounds.lower(m_seg);
  const Eigen::VectorXd hi = bounds.upper(m_seg);

  std::vector<GaussianSample> out;
  out.reserve(n);
  rng::Engine eng(seed);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd draw(dist.mean.size());
    for (Eigen::Index i = 0; i < draw.size(); ++i)
      draw(i) = dist.mean(i) + sigma(i) * eng.normal();
    GaussianSample s;
    s.p = BehavioralInput::from_flat(
        draw.head(np).cwiseMax(lo).cwiseMin(hi).eval());
    s.lambda_init = with_lambda ? draw.tail(n_lambda).eval()
                                : Eigen::VectorXd::Zero(n_lambda).eval();
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

CemResult cem_optimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                       const SamplingDistribution& init, const CemOptions& opts) {
  init.validate();
  if (opts.batch_size < 2)
    throw std::invalid_argument("cem_optimize: batch_size >= 2");
  if (!(opts.elite_frac > 0.0 && opts.elite_frac < 1.0))
    throw std::invalid_argument("cem_optimize: elite_frac in (0,1)");

  const Eigen::Index dim = init.mean.size();
  const bool boxed = opts.lower.size() == dim && opts.upper.size() == dim;

  CemResult res;
  res.dist = init;
  res.best_cost = std::numeric_limits<double>::infinity();

  std::vector<Eigen::VectorXd> samples(opts.batch_size);
  std::vector<double> costs(opts.batch_size);
  std::vector<int> order(opts.batch_size);

  for (int it = 0; it <= opts.iters; ++it) {
    rng::Engine eng(rng::derive(opts.seed, 0x9c3, it));
    const Eigen::VectorXd sigma = res.dist.cov_diag.cwiseSqrt();
    int n_finite = 0;
    for (int j = 0; j < opts.batch_size; ++j) {
      Eigen::VectorXd x(dim);
      for (Eigen::Index i = 0; i < dim; ++i)
        x(i) = res.dist.mean(i) + sigma(i) * eng.normal();
      if (boxed) x = x.cwiseMax(opts.lower).cwiseMin(opts.upper);
      costs[j] = objective(x);
      samples[j] = std::move(x);
      if (std::isfinite(costs[j])) {
        ++n_finite;
        if (costs[j] < res.best_cost) {
          res.best_cost = costs[j];
          res.best = samples[j];
        }
      }
    }
    if (n_finite == 0)
      throw std::runtime_error("cem_optimize: objective non-finite on every sample");
    res.best_history.push_back(res.best_cost);
    if (it == opts.iters) break;

    // refit to the elite fraction (finite costs only, stable order)
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double ca = std::isfinite(costs[a]) ? costs[a]
                                                : std::numeric_limits<double>::max();
      const double cb = std::isfinite(costs[b]) ? costs[b]
                                                : std::numeric_limits<double>::max();
      return ca < cb;
    });
    const int n_elite = std::max(
        1, std::min(n_finite, static_cast<int>(opts.elite_frac * opts.batch_size)));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < n_elite; ++k) mean += samples[order[k]];
    mean /= n_elite;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < n_elite; ++k)
      var += (samples[order[k]] - mean).cwiseAbs2();
    var = (var / n_elite).cwiseMax(opts.cov_floor);
    res.dist.mean = std::move(mean);
    res.dist.cov_diag = std::move(var);
  }
  return res;
}

// ---------------------------------------------------------------------------

void MppiState::validate() const {
  if (mean_controls.size() == 0 || cov_diag.size() != mean_controls.size())
    throw std::invalid_argument("MppiState: mean/cov size mismatch");
  if ((cov_diag.array() <= 0).any())
    throw std::invalid_argument("MppiState: variances must be positive");
  if (temperature <= 0)
    throw std::invalid_argument("MppiState: temperature must be positive");
}

std::vector<Eigen::VectorXd> mppi_sample(const MppiState& state, int n,
                                         std::uint64_t seed, bool antithetic) {
  state.validate();
  if (n < 1) throw std::invalid_argument("mppi_sample: n >= 1");
  const Eigen::Index dim = state.mean_controls.size();
  const Eigen::VectorXd sigma = state.cov_diag.cwiseSqrt();
  rng::Engine eng(seed);

  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  if (!antithetic) {
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd x(dim);
      for (Eigen::Index i = 0; i < dim; ++i)
        x(i) = state.mean_controls(i) + sigma(i) * eng.normal();
      out.push_back(std::move(x));
    }
    return out;
  }
  for (int j = 0; j + 1 < n; j += 2) {
    Eigen::VectorXd eps(dim);
    for (Eigen::Index i = 0; i < dim; ++i) eps(i) = sigma(i) * eng.normal();
    out.push_back(state.mean_controls + eps);
    out.push_back(state.mean_controls - eps);
  }
  if (static_cast<int>(out.size()) < n) out.push_back(state.mean_controls);
  return out;
}

void mppi_step(MppiState& state, const std::vector<Eigen::VectorXd>& samples,
               const std::vector<double>& costs) {
  state.validate();
  if (samples.empty() || samples.size() != costs.size())
    throw std::invalid_argument("mppi_step: samples/costs size mismatch");
  for (const double c : costs)
    if (!std::isfinite(c))
      throw std::invalid_argument("mppi_step: costs must be finite");

  const double cmin = *std::min_element(costs.begin(), costs.end());
  Eigen::VectorXd w(costs.size());
  for (std::size_t j = 0; j < costs.size(); ++j)
    w(j) = std::exp(-(costs[j] - cmin) / state.temperature);
  w /= w.sum();

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(state.mean_controls.size());
  for (std::size_t j = 0; j < samples.size(); ++j) mean += w(j) * samples[j];
  Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
  for (std::size_t j = 0; j < samples.size(); ++j)
    var += w(j) * (samples[j] - mean).cwiseAbs2();

  state.mean_controls = std::move(mean);
  state.cov_diag = var.cwiseMax(state.cov_floor);
}

}  // namespace densedrive
