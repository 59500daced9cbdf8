#pragma once

// Discrete chains (label-noise SGD, SGLD), the fine-step Euler-Maruyama flow
// integrator, couplings, and replica ensembles.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lnlab/common.hpp"
#include "lnlab/measure.hpp"
#include "lnlab/problems.hpp"
#include "lnlab/rng.hpp"

namespace lnlab {

enum class Algorithm { label_noise_sgd, sgld, flow };
/// Which diffusion the flow integrates.
enum class FlowNoise { label_noise, sgld };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::label_noise_sgd: return "label_noise_sgd";
    case Algorithm::sgld: return "sgld";
    case Algorithm::flow: return "flow";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "label_noise_sgd" || s == "label-noise-sgd") return Algorithm::label_noise_sgd;
  if (s == "sgld") return Algorithm::sgld;
  if (s == "flow") return Algorithm::flow;
  throw InputError("unknown algorithm '" + s + "'");
}

inline FlowNoise parse_flow_noise(const std::string& s) {
  if (s == "label_noise" || s == "label-noise") return FlowNoise::label_noise;
  if (s == "sgld") return FlowNoise::sgld;
  throw InputError("unknown flow noise '" + s + "'");
}

struct ChainConfig {
  Algorithm algorithm = Algorithm::label_noise_sgd;
  FlowNoise flow_noise = FlowNoise::label_noise;
  double eta = 0.05;
  double delta = 0.0;     // label-noise variance
  double beta_inv = 0.0;  // SGLD temperature
  std::size_t batch = 1;
  std::size_t horizon = 0;
  std::size_t substeps = 64;
  std::uint64_t seed = 1;
  std::optional<double> eta_max;
};

struct Trajectory {
  std::vector<Vector> states;       // theta_t, t = 0..T (time t * eta)
  std::vector<Batch> batches;       // batch used on interval t -> t+1
  std::vector<Vector> noise_log;    // standard normals consumed on each interval
  std::vector<std::string> warnings;
};

/// Validates a configuration against a problem; returns non-fatal warnings.
inline std::vector<std::string> validate_chain(const ProblemSpec& spec, const ChainConfig& cfg) {
  require(cfg.eta > 0.0, "step size eta must be positive");
  require(cfg.delta >= 0.0, "label-noise variance delta must be nonnegative");
  require(cfg.beta_inv >= 0.0, "beta_inv must be nonnegative");
  require(cfg.batch >= 1 && cfg.batch <= spec.data.size(),
          "batch size k must satisfy 1 <= k <= n (k = " + std::to_string(cfg.batch) +
              ", n = " + std::to_string(spec.data.size()) + ")");
  require(cfg.substeps >= 1, "substeps must be >= 1");
  std::vector<std::string> warnings;
  if (cfg.eta_max && cfg.eta > *cfg.eta_max)
    warnings.push_back("eta = " + format_double(cfg.eta) + " exceeds eta_max = " +
                       format_double(*cfg.eta_max));
  return warnings;
}

inline Batch sample_minibatch(std::size_t n, std::size_t k, Rng& rng) {
  require(k >= 1 && k <= n, "minibatch size k must satisfy 1 <= k <= n");
  return rng.subset(n, k);
}

namespace detail {

/// theta - h grad L_B(theta) + (eta/k) grad f(theta, X_B)^T xi.
/// With h = eta this is one label-noise SGD step; with h = eta/s and xi scaled
/// by sqrt(h/eta) it is one Euler-Maruyama substep of the label-noise flow.
inline Vector label_noise_update(const ProblemSpec& spec, const Vector& theta,
                                 std::span<const std::size_t> batch, const Vector& xi, double h,
                                 double eta) {
  const double k = static_cast<double>(batch.size());
  const Vector drift = minibatch_grad(spec, theta, batch);
  const Vector diffusion = batch_jacobian(spec, theta, batch).transpose() * xi;
  return theta - h * drift + (eta / k) * diffusion;
}

inline Vector sgld_update(const ProblemSpec& spec, const Vector& theta,
                          std::span<const std::size_t> batch, const Vector& xi, double h,
                          double beta_inv) {
  return theta - h * minibatch_grad(spec, theta, batch) + std::sqrt(2.0 * beta_inv * h) * xi;
}

inline bool uses_label_noise(const ChainConfig& cfg) {
  return cfg.algorithm == Algorithm::label_noise_sgd ||
         (cfg.algorithm == Algorithm::flow && cfg.flow_noise == FlowNoise::label_noise);
}

/// Standard normals consumed per step (discrete) or per substep (flow).
inline Eigen::Index noise_width(const ProblemSpec& spec, const ChainConfig& cfg) {
  return uses_label_noise(cfg) ? static_cast<Eigen::Index>(cfg.batch) : spec.param_dim();
}

inline Eigen::Index interval_noise_size(const ProblemSpec& spec, const ChainConfig& cfg) {
  const Eigen::Index w = noise_width(spec, cfg);
  return cfg.algorithm == Algorithm::flow ? w * static_cast<Eigen::Index>(cfg.substeps) : w;
}

/// Advances theta over one eta-interval given the batch and the interval's
/// standard normals.
inline Vector advance_interval(const ProblemSpec& spec, const ChainConfig& cfg, Vector theta,
                               const Batch& batch, const Vector& normals) {
  const double sqrt_delta = std::sqrt(cfg.delta);
  if (cfg.algorithm != Algorithm::flow) {
    if (cfg.algorithm == Algorithm::label_noise_sgd)
      return label_noise_update(spec, theta, batch, Vector(normals * sqrt_delta), cfg.eta, cfg.eta);
    return sgld_update(spec, theta, batch, normals, cfg.eta, cfg.beta_inv);
  }
  const std::size_t s = cfg.substeps;
  const double h = cfg.eta / static_cast<double>(s);
  const Eigen::Index w = noise_width(spec, cfg);
  const double scale = sqrt_delta * std::sqrt(h / cfg.eta);
  for (std::size_t j = 0; j < s; ++j) {
    const Vector z = normals.segment(static_cast<Eigen::Index>(j) * w, w);
    if (cfg.flow_noise == FlowNoise::label_noise)
      theta = label_noise_update(spec, theta, batch, Vector(z * scale), h, cfg.eta);
    else
      theta = sgld_update(spec, theta, batch, z, h, cfg.beta_inv);
  }
  return theta;
}

/// Per-interval randomness: a batch and the interval's standard normals.
struct IntervalDraw {
  Batch batch;
  Vector normals;
};

inline IntervalDraw draw_interval(const ProblemSpec& spec, const ChainConfig& cfg, Rng& rng,
                                  const Batch* forced_batch) {
  IntervalDraw draw;
  draw.batch = forced_batch ? *forced_batch : sample_minibatch(spec.data.size(), cfg.batch, rng);
  if (forced_batch) check_batch(spec, draw.batch);
  draw.normals = rng.normal_vector(interval_noise_size(spec, cfg));
  return draw;
}

}  // namespace detail

/// One label-noise SGD step. xi holds the batch's label perturbations, already
/// distributed as N(0, delta I_k).
inline Vector step_label_noise_sgd(const ProblemSpec& spec, const Vector& theta,
                                   std::span<const std::size_t> batch, const Vector& xi,
                                   double eta) {
  check_batch(spec, batch);
  require(xi.size() == static_cast<Eigen::Index>(batch.size()),
          "label-noise draw length must equal batch size");
  return detail::label_noise_update(spec, theta, batch, xi, eta, eta);
}

/// One SGLD step (descent sign), xi ~ N(0, I_d).
inline Vector step_sgld(const ProblemSpec& spec, const Vector& theta,
                        std::span<const std::size_t> batch, const Vector& xi, double eta,
                        double beta_inv) {
  check_batch(spec, batch);
  require(xi.size() == theta.size(), "SGLD draw must have the parameter dimension");
  return detail::sgld_update(spec, theta, batch, xi, eta, beta_inv);
}

using InitSampler = std::function<Vector(Rng&)>;

/// Runs the configured chain for cfg.horizon intervals from theta0. Batches and
/// normals come from a stream seeded with cfg.seed; in flow mode each interval
/// keeps its batch frozen across the substeps.
inline Trajectory run_discrete_chain(const ProblemSpec& spec, const ChainConfig& cfg,
                                     const Vector& theta0) {
  Trajectory traj;
  traj.warnings = validate_chain(spec, cfg);
  require(theta0.size() == spec.param_dim(), "theta0 has the wrong dimension");
  Rng rng(cfg.seed);
  traj.states.reserve(cfg.horizon + 1);
  traj.states.push_back(theta0);
  for (std::size_t t = 0; t < cfg.horizon; ++t) {
    detail::IntervalDraw draw = detail::draw_interval(spec, cfg, rng, nullptr);
    traj.states.push_back(
        detail::advance_interval(spec, cfg, traj.states.back(), draw.batch, draw.normals));
    traj.batches.push_back(std::move(draw.batch));
    traj.noise_log.push_back(std::move(draw.normals));
  }
  return traj;
}

template <class Derived>
inline Trajectory run_discrete_chain(const ProblemSpec& spec, const ChainConfig& cfg,
                                     const Eigen::MatrixBase<Derived>& theta0) {
  return run_discrete_chain(spec, cfg, Vector(theta0));
}

/// Same as above with theta0 drawn first from the chain's own stream.
inline Trajectory run_discrete_chain(const ProblemSpec& spec, const ChainConfig& cfg,
                                     const InitSampler& init) {
  Rng rng(split_seed(cfg.seed, UINT64_MAX));
  return run_discrete_chain(spec, cfg, init(rng));
}

/// Recomputes the states of a trajectory from its batches and noise log.
inline std::vector<Vector> replay(const ProblemSpec& spec, const ChainConfig& cfg,
                                  const Vector& theta0, const std::vector<Batch>& batches,
                                  const std::vector<Vector>& noise_log) {
  require(batches.size() == noise_log.size(), "replay needs one noise record per batch");
  std::vector<Vector> states{theta0};
  for (std::size_t t = 0; t < batches.size(); ++t)
    states.push_back(detail::advance_interval(spec, cfg, states.back(), batches[t], noise_log[t]));
  return states;
}

/// Flow integration over cfg.horizon intervals of length eta with a caller-given
/// batch schedule, each interval refined into cfg.substeps Euler-Maruyama steps.
/// cfg.algorithm is ignored; cfg.flow_noise picks the diffusion.
inline Trajectory integrate_flow(const ProblemSpec& spec, ChainConfig cfg, const Vector& theta0,
                                 const std::vector<Batch>& batch_schedule) {
  cfg.algorithm = Algorithm::flow;
  require(batch_schedule.size() >= cfg.horizon, "batch schedule shorter than the horizon");
  Trajectory traj;
  traj.warnings = validate_chain(spec, cfg);
  Rng rng(cfg.seed);
  traj.states.push_back(theta0);
  for (std::size_t t = 0; t < cfg.horizon; ++t) {
    detail::IntervalDraw draw = detail::draw_interval(spec, cfg, rng, &batch_schedule[t]);
    traj.states.push_back(
        detail::advance_interval(spec, cfg, traj.states.back(), draw.batch, draw.normals));
    traj.batches.push_back(std::move(draw.batch));
    traj.noise_log.push_back(std::move(draw.normals));
  }
  return traj;
}

enum class CouplingMode { synchronous_discretization, neighbor_stability };

struct CouplingExtras {
  Vector theta0;
  std::optional<std::size_t> differing_index;  // neighbor mode
  std::optional<DataPoint> replacement;        // neighbor mode
  std::optional<std::vector<Batch>> forced_schedule;
};

struct CouplingRun {
  CouplingMode mode = CouplingMode::synchronous_discretization;
  Trajectory first;   // discrete chain (synchronous) or chain on S (neighbor)
  Trajectory second;  // flow (synchronous) or chain on the neighbor dataset
  std::string shared;
};

/// synchronous_discretization: the discrete chain (cfg.algorithm must be
/// label_noise_sgd or sgld) and its flow over the same intervals, sharing
/// batches and Wiener increments. The discrete step uses the interval's
/// aggregated increment sum_j z_j / sqrt(s).
///
/// neighbor_stability: two copies of the configured chain, on S and on S with
/// point i replaced, sharing the batch schedule and every Gaussian draw.
inline CouplingRun run_coupled(const ProblemSpec& spec, const ChainConfig& cfg, CouplingMode mode,
                               const CouplingExtras& extras) {
  require(extras.theta0.size() == spec.param_dim(), "coupling theta0 has the wrong dimension");
  if (extras.forced_schedule)
    require(extras.forced_schedule->size() >= cfg.horizon,
            "forced batch schedule shorter than the horizon");
  CouplingRun run;
  run.mode = mode;
  Rng rng(cfg.seed);
  auto forced = [&](std::size_t t) -> const Batch* {
    return extras.forced_schedule ? &(*extras.forced_schedule)[t] : nullptr;
  };

  if (mode == CouplingMode::synchronous_discretization) {
    require(cfg.algorithm != Algorithm::flow,
            "synchronous coupling pairs a discrete chain with its flow");
    ChainConfig flow = cfg;
    flow.algorithm = Algorithm::flow;
    flow.flow_noise =
        cfg.algorithm == Algorithm::label_noise_sgd ? FlowNoise::label_noise : FlowNoise::sgld;
    run.first.warnings = validate_chain(spec, cfg);
    validate_chain(spec, flow);
    run.shared = "batch schedule, Wiener increments (discrete step uses the summed increment)";
    const Eigen::Index w = detail::noise_width(spec, cfg);
    const double root_s = std::sqrt(static_cast<double>(flow.substeps));
    run.first.states.push_back(extras.theta0);
    run.second.states.push_back(extras.theta0);
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
      detail::IntervalDraw draw = detail::draw_interval(spec, flow, rng, forced(t));
      Vector summed = Vector::Zero(w);
      for (std::size_t j = 0; j < flow.substeps; ++j)
        summed += draw.normals.segment(static_cast<Eigen::Index>(j) * w, w);
      summed /= root_s;
      run.first.states.push_back(
          detail::advance_interval(spec, cfg, run.first.states.back(), draw.batch, summed));
      run.second.states.push_back(
          detail::advance_interval(spec, flow, run.second.states.back(), draw.batch, draw.normals));
      run.first.batches.push_back(draw.batch);
      run.first.noise_log.push_back(std::move(summed));
      run.second.batches.push_back(std::move(draw.batch));
      run.second.noise_log.push_back(std::move(draw.normals));
    }
    return run;
  }

  require(extras.differing_index.has_value() && extras.replacement.has_value(),
          "neighbor coupling needs the differing index and the replacement point");
  ProblemSpec neighbor = spec;
  neighbor.data = neighbor_dataset(spec.data, *extras.differing_index, *extras.replacement);
  run.first.warnings = validate_chain(spec, cfg);
  run.shared = "batch schedule, all Gaussian draws (label-noise vector or SGLD noise)";
  run.first.states.push_back(extras.theta0);
  run.second.states.push_back(extras.theta0);
  for (std::size_t t = 0; t < cfg.horizon; ++t) {
    detail::IntervalDraw draw = detail::draw_interval(spec, cfg, rng, forced(t));
    run.first.states.push_back(
        detail::advance_interval(spec, cfg, run.first.states.back(), draw.batch, draw.normals));
    run.second.states.push_back(detail::advance_interval(neighbor, cfg, run.second.states.back(),
                                                         draw.batch, draw.normals));
    run.first.batches.push_back(draw.batch);
    run.first.noise_log.push_back(draw.normals);
    run.second.batches.push_back(std::move(draw.batch));
    run.second.noise_log.push_back(std::move(draw.normals));
  }
  return run;
}

using SeedSplitter = std::function<std::uint64_t(std::uint64_t master, std::uint64_t replica)>;

inline std::uint64_t default_split(std::uint64_t master, std::uint64_t replica) {
  return split_seed(master, replica);
}

/// Runs `replicas` independent chains, replica r seeded with
/// split(cfg.seed, r); theta0 for replica r comes from init applied to a stream
/// seeded split(split(cfg.seed, r), 0xFFFF...). Returns the cloud of states at
/// every checkpoint (step index), rows ordered by replica.
inline std::map<std::size_t, EmpiricalMeasure> simulate_ensemble(
    const ProblemSpec& spec, const ChainConfig& cfg, std::size_t replicas,
    const std::vector<std::size_t>& checkpoints, const InitSampler& init,
    const SeedSplitter& split = default_split) {
  require(replicas >= 2, "an ensemble needs at least two replicas");
  validate_chain(spec, cfg);
  std::size_t last = 0;
  for (std::size_t c : checkpoints) last = std::max(last, c);
  const Eigen::Index d = spec.param_dim();
  std::map<std::size_t, std::size_t> slot;
  for (std::size_t c : checkpoints) slot.emplace(c, slot.size());
  std::vector<Matrix> clouds(slot.size(), Matrix(static_cast<Eigen::Index>(replicas), d));

  parallel_for(replicas, [&](std::size_t r) {
    ChainConfig local = cfg;
    local.seed = split(cfg.seed, r);
    Rng init_rng(split_seed(local.seed, UINT64_MAX));
    Vector theta = init(init_rng);
    require(theta.size() == d, "initial sample has the wrong dimension");
    Rng rng(local.seed);
    const auto row = static_cast<Eigen::Index>(r);
    if (auto it = slot.find(0); it != slot.end()) clouds[it->second].row(row) = theta.transpose();
    for (std::size_t t = 1; t <= last; ++t) {
      detail::IntervalDraw draw = detail::draw_interval(spec, local, rng, nullptr);
      theta = detail::advance_interval(spec, local, std::move(theta), draw.batch, draw.normals);
      if (auto it = slot.find(t); it != slot.end()) clouds[it->second].row(row) = theta.transpose();
    }
  });

  std::map<std::size_t, EmpiricalMeasure> out;
  for (const auto& [c, s] : slot) out.emplace(c, EmpiricalMeasure(clouds[s]));
  return out;
}

/// Initial laws used across the harness.
inline InitSampler gaussian_init(Vector center, double scale) {
  return [center = std::move(center), scale](Rng& rng) -> Vector {
    return center + scale * rng.normal_vector(center.size());
  };
}

inline InitSampler point_init(Vector v) {
  return [v = std::move(v)](Rng&) { return v; };
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write trajectory '" + path + "'");
  const Eigen::Index d = traj.states.empty() ? 0 : traj.states.front().size();
  os << 't';
  for (Eigen::Index j = 0; j < d; ++j) os << ",theta_" << j;
  os << '\n';
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    os << t;
    for (Eigen::Index j = 0; j < d; ++j) os << ',' << format_double(traj.states[t][j]);
    os << '\n';
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline void write_ensemble_csv(const std::string& path,
                               const std::map<std::size_t, EmpiricalMeasure>& ensemble) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write ensemble '" + path + "'");
  const Eigen::Index d = ensemble.empty() ? 0 : ensemble.begin()->second.dim();
  os << "checkpoint,replica";
  for (Eigen::Index j = 0; j < d; ++j) os << ",theta_" << j;
  os << '\n';
  for (const auto& [c, mu] : ensemble) {
    for (Eigen::Index r = 0; r < mu.samples().rows(); ++r) {
      os << c << ',' << r;
      for (Eigen::Index j = 0; j < d; ++j) os << ',' << format_double(mu.samples()(r, j));
      os << '\n';
    }
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace lnlab
