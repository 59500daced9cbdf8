#pragma once

// Synthetic learning problems: model families, the ridge-regularized squared
// loss, dataset generation and the assumption-constant audit.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lnlab/common.hpp"
#include "lnlab/rng.hpp"

namespace lnlab {

using Batch = std::vector<std::size_t>;

struct DataPoint {
  Vector x;
  double y = 0.0;
};

/// Bounds ||x|| <= x_max and |y| <= y_max recorded alongside a dataset.
struct DataBounds {
  double x_max = 1.0;
  double y_max = 1.0;
};

struct Dataset {
  std::vector<DataPoint> points;
  DataBounds bounds;

  std::size_t size() const { return points.size(); }
  Eigen::Index feature_dim() const {
    return points.empty() ? 0 : points.front().x.size();
  }
  const DataPoint& operator[](std::size_t i) const { return points[i]; }
};

enum class ModelFamily { linear, saturating_index };

inline std::string to_string(ModelFamily f) {
  return f == ModelFamily::linear ? "linear" : "saturating";
}

inline ModelFamily parse_model_family(const std::string& s) {
  if (s == "linear") return ModelFamily::linear;
  if (s == "saturating" || s == "saturating_index" || s == "saturating-index")
    return ModelFamily::saturating_index;
  throw InputError("unknown model family '" + s + "'");
}

/// linear: f(theta, x) = <x, theta>.
/// saturating_index: f(theta, x) = A tanh(<x, theta>).
struct ModelSpec {
  ModelFamily family = ModelFamily::saturating_index;
  double amplitude = 1.0;
};

/// sup_u |d/du sech^2(u)| = 4 / (3 sqrt 3); Lipschitz factor of the
/// saturating-index gradient.
inline const double kSaturationCurvature = 4.0 / (3.0 * std::sqrt(3.0));

enum class Provenance { closed_form, empirical };

inline std::string to_string(Provenance p) {
  return p == Provenance::closed_form ? "closed-form" : "empirical";
}

struct AssumptionConstants {
  double alpha = 0.0;   // uniform-dissipativity rate of the flow
  double M = 0.0;       // per-instance smoothness of the loss
  double ell_f = 0.0;   // Lipschitz constant of f in theta
  double m = 0.0;       // (m, b)-dissipativity
  double b = 0.0;
  double sigma4 = 0.0;  // E||theta_0||^4, supplied by the initialization
  Eigen::Index d = 0;
  Provenance provenance = Provenance::closed_form;

  double grad_f_lipschitz = 0.0;  // Lipschitz constant of grad_theta f
  double M_fit = 0.0;             // smoothness of the data-fit part alone

  bool alpha_positive = false;
  bool dissipative = false;
  bool smooth_below_half_alpha = false;  // M < alpha / 2
  std::vector<std::string> notes;
};

struct ProblemSpec {
  ModelSpec model;
  double ridge = 0.0;
  Dataset data;
  std::optional<AssumptionConstants> constants;

  Eigen::Index param_dim() const { return data.feature_dim(); }
};

struct ModelEval {
  double value = 0.0;
  Vector grad;
};

inline ModelEval eval_model(const ModelSpec& spec, const Vector& theta, const Vector& x) {
  require(theta.size() == x.size(), "eval_model: dim(theta) = " + std::to_string(theta.size()) +
                                        " but dim(x) = " + std::to_string(x.size()));
  const double u = x.dot(theta);
  if (spec.family == ModelFamily::linear) return {u, x};
  const double t = std::tanh(u);
  return {spec.amplitude * t, x * (spec.amplitude * (1.0 - t * t))};
}

struct LossEval {
  double loss = 0.0;
  Vector grad;
};

/// 1/2 (f - y)^2 + (ridge/2) ||theta||^2 and its gradient.
inline LossEval instance_loss(const ProblemSpec& spec, const Vector& theta, const DataPoint& z) {
  const ModelEval fe = eval_model(spec.model, theta, z.x);
  const double r = fe.value - z.y;
  return {0.5 * r * r + 0.5 * spec.ridge * theta.squaredNorm(),
          fe.grad * r + spec.ridge * theta};
}

inline Batch full_batch(std::size_t n) {
  Batch b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = i;
  return b;
}

inline void check_batch(const ProblemSpec& spec, std::span<const std::size_t> batch) {
  require(!batch.empty(), "empty batch");
  for (std::size_t i : batch)
    require(i < spec.data.size(), "batch index " + std::to_string(i) + " outside [0, " +
                                      std::to_string(spec.data.size()) + ")");
}

inline double empirical_risk(const ProblemSpec& spec, const Vector& theta,
                             std::span<const std::size_t> batch) {
  check_batch(spec, batch);
  double total = 0.0;
  for (std::size_t i : batch) total += instance_loss(spec, theta, spec.data[i]).loss;
  return total / static_cast<double>(batch.size());
}

inline double empirical_risk(const ProblemSpec& spec, const Vector& theta) {
  const Batch all = full_batch(spec.data.size());
  return empirical_risk(spec, theta, all);
}

/// Gradient of the minibatch average loss. When noisy_labels is given, label
/// i of the batch is replaced by y_i + noisy_labels[j] (j its batch position).
inline Vector minibatch_grad(const ProblemSpec& spec, const Vector& theta,
                             std::span<const std::size_t> batch,
                             std::optional<std::span<const double>> noisy_labels = std::nullopt) {
  check_batch(spec, batch);
  if (noisy_labels)
    require(noisy_labels->size() == batch.size(),
            "label perturbation length must equal batch size");
  Vector fit = Vector::Zero(theta.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const DataPoint& z = spec.data[batch[j]];
    const ModelEval fe = eval_model(spec.model, theta, z.x);
    const double y = noisy_labels ? z.y + (*noisy_labels)[j] : z.y;
    fit += fe.grad * (fe.value - y);
  }
  return fit / static_cast<double>(batch.size()) + spec.ridge * theta;
}

inline Vector full_grad(const ProblemSpec& spec, const Vector& theta) {
  const Batch all = full_batch(spec.data.size());
  return minibatch_grad(spec, theta, all);
}

/// k x d matrix whose row j is grad_theta f(theta, x_{batch[j]}).
inline Matrix batch_jacobian(const ProblemSpec& spec, const Vector& theta,
                             std::span<const std::size_t> batch) {
  Matrix jac(static_cast<Eigen::Index>(batch.size()), theta.size());
  for (std::size_t j = 0; j < batch.size(); ++j)
    jac.row(static_cast<Eigen::Index>(j)) =
        eval_model(spec.model, theta, spec.data[batch[j]].x).grad.transpose();
  return jac;
}

// ---------------------------------------------------------------------------
// Datasets

struct GeneratorParams {
  std::size_t n = 32;
  std::size_t p = 2;
  ModelSpec teacher_model;
  Vector teacher;  // empty means the zero vector
  double sigma_y = 0.1;
  double x_max = 1.0;
  double y_max = 1.0;
  std::uint64_t seed = 1;
};

inline DataPoint draw_point(const GeneratorParams& gen, const Vector& teacher, Rng& rng) {
  DataPoint z;
  z.x = rng.uniform_in_ball(static_cast<Eigen::Index>(gen.p), gen.x_max);
  const double clean = eval_model(gen.teacher_model, teacher, z.x).value;
  z.y = std::clamp(clean + gen.sigma_y * rng.normal(), -gen.y_max, gen.y_max);
  return z;
}

inline Vector resolved_teacher(const GeneratorParams& gen) {
  if (gen.teacher.size() == 0) return Vector::Zero(static_cast<Eigen::Index>(gen.p));
  require(gen.teacher.size() == static_cast<Eigen::Index>(gen.p),
          "teacher dimension must equal p");
  return gen.teacher;
}

inline Dataset make_synthetic_dataset(const GeneratorParams& gen) {
  require(gen.n >= 1, "dataset needs n >= 1");
  require(gen.p >= 1, "dataset needs p >= 1");
  require(gen.x_max > 0.0, "x_max must be positive");
  require(gen.y_max >= 0.0, "y_max must be nonnegative");
  const Vector teacher = resolved_teacher(gen);
  Rng rng(gen.seed);
  Dataset s;
  s.bounds = {gen.x_max, gen.y_max};
  s.points.reserve(gen.n);
  for (std::size_t i = 0; i < gen.n; ++i) s.points.push_back(draw_point(gen, teacher, rng));
  return s;
}

inline Dataset neighbor_dataset(const Dataset& s, std::size_t i, const DataPoint& replacement) {
  require(i < s.size(), "neighbor index " + std::to_string(i) + " out of range");
  Dataset out = s;
  out.points[i] = replacement;
  return out;
}

inline void write_dataset_csv(const std::string& path, const Dataset& s) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write dataset '" + path + "'");
  const Eigen::Index p = s.feature_dim();
  for (Eigen::Index j = 0; j < p; ++j) os << "x_" << j << ',';
  os << "y\n";
  for (const auto& z : s.points) {
    for (Eigen::Index j = 0; j < p; ++j) os << format_double(z.x[j]) << ',';
    os << format_double(z.y) << '\n';
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

/// Reads a dataset CSV; bounds are taken as the observed maxima.
inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read dataset '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw InputError("dataset '" + path + "' is empty");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  require(columns >= 2, "dataset header needs x columns and y");
  Dataset s;
  s.bounds = {0.0, 0.0};
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    DataPoint z;
    z.x.resize(columns - 1);
    for (Eigen::Index j = 0; j < columns; ++j) {
      if (!std::getline(ss, cell, ','))
        throw InputError("dataset '" + path + "': short row");
      const double v = std::stod(cell);
      if (j + 1 < columns) z.x[j] = v; else z.y = v;
    }
    s.bounds.x_max = std::max(s.bounds.x_max, z.x.norm());
    s.bounds.y_max = std::max(s.bounds.y_max, std::abs(z.y));
    s.points.push_back(std::move(z));
  }
  require(!s.points.empty(), "dataset '" + path + "' has no rows");
  return s;
}

inline nlohmann::json generator_metadata(const GeneratorParams& gen) {
  std::vector<double> teacher(gen.teacher.data(), gen.teacher.data() + gen.teacher.size());
  return {{"n", gen.n},
          {"p", gen.p},
          {"model", to_string(gen.teacher_model.family)},
          {"amplitude", gen.teacher_model.amplitude},
          {"teacher", teacher},
          {"sigma_y", gen.sigma_y},
          {"x_max", gen.x_max},
          {"y_max", gen.y_max},
          {"seed", gen.seed}};
}

inline void write_generator_metadata(const std::string& path, const GeneratorParams& gen) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write metadata '" + path + "'");
  os << generator_metadata(gen).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Assumption constants

namespace detail {
inline void set_flags(AssumptionConstants& c) {
  c.alpha_positive = c.alpha > 0.0;
  c.smooth_below_half_alpha = c.M < 0.5 * c.alpha;
  if (!c.alpha_positive)
    c.notes.push_back("alpha <= 0: uniform dissipativity not established");
  if (!c.smooth_below_half_alpha)
    c.notes.push_back("M >= alpha/2: the smoothness/dissipativity pair is not jointly satisfied");
  if (!c.dissipative) c.notes.push_back("m <= 0: (m,b)-dissipativity not established");
}
}  // namespace detail

/// Worst-case constants of a built-in family over the data bounds.
///
/// saturating_index, with c_s = 4/(3 sqrt 3):
///   ell_f = A X,  L_grad_f = A c_s X^2,  M_fit = ell_f^2 + (A + Y) A c_s X^2,
///   M = M_fit + ridge,  m = ridge/2,  b = (A + Y)^2 ell_f^2 / (2 ridge),
///   alpha = 2 ridge - 2 M_fit - (eta delta / k) L_grad_f^2.
/// linear (convex fit, constant grad f):
///   ell_f = X,  M = X^2 + ridge,  m = ridge,  b = Y^2 / 4,  alpha = 2 ridge.
inline AssumptionConstants closed_form_constants(const ProblemSpec& spec, double eta,
                                                 double delta, std::size_t k) {
  require(k >= 1, "batch size must be >= 1");
  AssumptionConstants c;
  c.provenance = Provenance::closed_form;
  c.d = spec.param_dim();
  const double x = spec.data.bounds.x_max;
  const double y = spec.data.bounds.y_max;
  const double lambda = spec.ridge;
  if (spec.model.family == ModelFamily::linear) {
    c.ell_f = x;
    c.grad_f_lipschitz = 0.0;
    c.M_fit = x * x;
    c.m = lambda;
    c.b = lambda > 0.0 ? 0.25 * y * y : 0.0;
    c.alpha = 2.0 * lambda;
  } else {
    const double a = spec.model.amplitude;
    c.ell_f = a * x;
    c.grad_f_lipschitz = a * kSaturationCurvature * x * x;
    c.M_fit = c.ell_f * c.ell_f + (a + y) * c.grad_f_lipschitz;
    c.m = 0.5 * lambda;
    c.b = lambda > 0.0 ? (a + y) * (a + y) * c.ell_f * c.ell_f / (2.0 * lambda) : 0.0;
    c.alpha = 2.0 * lambda - 2.0 * c.M_fit -
              eta * delta / static_cast<double>(k) * c.grad_f_lipschitz * c.grad_f_lipschitz;
  }
  c.M = c.M_fit + lambda;
  c.dissipative = c.m > 0.0;
  detail::set_flags(c);
  return c;
}

struct PairSampler {
  std::size_t count = 256;
  double radius = 10.0;
  std::uint64_t seed = 7;
};

struct EstimatedConstants {
  AssumptionConstants constants;
  std::size_t pairs_used = 0;
  double radius = 0.0;
  bool alpha_le_2M = true;  // audited relation alpha_hat <= 2 M_hat
};

namespace detail {
inline double dissipativity_gap(const ProblemSpec& spec, const Vector& theta, double m) {
  return m * theta.squaredNorm() - theta.dot(full_grad(spec, theta));
}
}  // namespace detail

/// Empirical audit of the assumption constants over parameter pairs drawn
/// uniformly in a ball. The ball radius is a scope restriction: the audited
/// inequalities are global, the audit is not.
inline EstimatedConstants estimate_constants(const ProblemSpec& spec, const PairSampler& sampler,
                                             double eta, double delta, std::size_t k) {
  require(sampler.count >= 2, "pair sampler needs count >= 2");
  require(sampler.radius > 0.0, "pair sampler radius must be positive");
  const std::size_t n = spec.data.size();
  require(k >= 1 && k <= n, "batch size must satisfy 1 <= k <= n");
  const Eigen::Index d = spec.param_dim();
  const double kd = static_cast<double>(k);

  Rng rng(sampler.seed);
  double m_hat_lip = 0.0, ell_hat = 0.0;
  double alpha_hat = std::numeric_limits<double>::infinity();
  std::vector<Vector> cloud;
  cloud.reserve(2 * sampler.count);
  std::size_t used = 0;

  for (std::size_t j = 0; j < sampler.count; ++j) {
    const Vector t1 = rng.uniform_in_ball(d, sampler.radius);
    const Vector t2 = rng.uniform_in_ball(d, sampler.radius);
    const Batch batch = rng.subset(n, k);
    cloud.push_back(t1);
    cloud.push_back(t2);
    const Vector delta_theta = t1 - t2;
    const double dist2 = delta_theta.squaredNorm();
    if (dist2 == 0.0) continue;
    ++used;
    const double dist = std::sqrt(dist2);
    for (const auto& z : spec.data.points) {
      const LossEval l1 = instance_loss(spec, t1, z);
      const LossEval l2 = instance_loss(spec, t2, z);
      m_hat_lip = std::max(m_hat_lip, (l1.grad - l2.grad).norm() / dist);
      const double f1 = eval_model(spec.model, t1, z.x).value;
      const double f2 = eval_model(spec.model, t2, z.x).value;
      ell_hat = std::max(ell_hat, std::abs(f1 - f2) / dist);
    }
    const Vector g_diff = minibatch_grad(spec, t1, batch) - minibatch_grad(spec, t2, batch);
    const double noise =
        eta * delta / (kd * kd) *
        (batch_jacobian(spec, t1, batch) - batch_jacobian(spec, t2, batch)).squaredNorm();
    alpha_hat = std::min(alpha_hat, (2.0 * g_diff.dot(delta_theta) - noise) / dist2);
  }
  require(used > 0, "all sampled parameter pairs were degenerate");

  // Radii log-uniform over three decades, so the region near the origin
  // (where the data term dominates the radial pull) is represented.
  for (std::size_t j = 0; j < sampler.count; ++j) {
    const double r = sampler.radius * std::pow(10.0, -3.0 * rng.uniform());
    Vector dir = rng.normal_vector(d);
    const double norm = dir.norm();
    if (norm > 0.0) cloud.push_back(dir * (r / norm));
  }

  // (m, b): pick m on a grid minimizing b(m)/m, ties to the larger m.
  double m_cap = 0.0;
  std::vector<double> radial(cloud.size()), sq(cloud.size());
  for (std::size_t j = 0; j < cloud.size(); ++j) {
    sq[j] = cloud[j].squaredNorm();
    radial[j] = cloud[j].dot(full_grad(spec, cloud[j]));
    if (sq[j] > 0.0) m_cap = std::max(m_cap, radial[j] / sq[j]);
  }
  double m_best = 0.0, b_best = 0.0;
  if (m_cap > 0.0) {
    constexpr int kGrid = 400;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int g = 1; g <= kGrid; ++g) {
      const double m = m_cap * g / kGrid;
      double b = 0.0;
      for (std::size_t j = 0; j < cloud.size(); ++j) b = std::max(b, m * sq[j] - radial[j]);
      const double ratio = b / m;
      if (ratio <= best_ratio * (1.0 + 1e-12) + 1e-300) {
        best_ratio = std::min(best_ratio, ratio);
        m_best = m;
        b_best = b;
      }
    }
    // Local ascent on m||theta||^2 - <theta, grad L_S> from the worst samples,
    // so b_hat approximates the supremum over the ball, not over the sample.
    std::vector<std::size_t> order(cloud.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    const std::size_t seeds = std::min<std::size_t>(8, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(seeds), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return m_best * sq[a] - radial[a] > m_best * sq[b] - radial[b];
                      });
    for (std::size_t s = 0; s < seeds; ++s) {
      Vector theta = cloud[order[s]];
      double value = detail::dissipativity_gap(spec, theta, m_best);
      double step = 0.1 * sampler.radius;
      for (int it = 0; it < 300; ++it, step *= 0.98) {
        Vector trial = theta + step * rng.normal_vector(d);
        const double norm = trial.norm();
        if (norm > sampler.radius) trial *= sampler.radius / norm;
        const double v = detail::dissipativity_gap(spec, trial, m_best);
        if (v > value) {
          value = v;
          theta = trial;
        }
      }
      b_best = std::max(b_best, value);
    }
  }

  EstimatedConstants out;
  AssumptionConstants& c = out.constants;
  c.provenance = Provenance::empirical;
  c.d = d;
  c.M = m_hat_lip;
  c.ell_f = ell_hat;
  c.alpha = alpha_hat;
  c.m = m_best;
  c.b = b_best;
  c.dissipative = m_best > 0.0;
  detail::set_flags(c);
  c.notes.push_back("audit restricted to the ball of radius " + format_double(sampler.radius) +
                    "; global conditions are not verified outside it");
  out.pairs_used = used;
  out.radius = sampler.radius;
  out.alpha_le_2M = alpha_hat <= 2.0 * m_hat_lip * (1.0 + 1e-12) + 1e-12;
  return out;
}

}  // namespace lnlab
