#pragma once

// Semimetric rho_g, exact and sliced Wasserstein distances between equal-size
// empirical measures, moments and generalization-gap estimates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "lnlab/common.hpp"
#include "lnlab/measure.hpp"
#include "lnlab/problems.hpp"
#include "lnlab/rng.hpp"

namespace lnlab {

/// g(r) = min(r, radius). phi is carried separately for the bound calculators.
struct SemimetricParams {
  double epsilon = 0.1;
  double radius = 1.0;
  double phi = 1.0;

  double g(double r) const { return std::min(r, radius); }
};

inline void validate(const SemimetricParams& p) {
  require(p.epsilon >= 0.0 && p.epsilon < 1.0, "semimetric epsilon must lie in [0, 1)");
  require(p.radius > 0.0, "semimetric radius R must be positive");
  require(p.phi > 0.0 && p.phi <= 1.0, "semimetric phi must lie in (0, 1]");
}

inline double rho_g(const Vector& x, const Vector& y, const SemimetricParams& p) {
  require(x.size() == y.size(), "rho_g: dimension mismatch");
  require(p.epsilon < 1.0, "rho_g: epsilon must be < 1");
  return p.g((x - y).norm()) *
         (1.0 + 2.0 * p.epsilon + p.epsilon * (x.squaredNorm() + y.squaredNorm()));
}

constexpr std::size_t kMaxAssignmentSize = 4096;

struct Assignment {
  std::vector<std::size_t> column_of_row;
  double total_cost = 0.0;  // sum of the matched costs, accumulated in row order
};

/// Exact minimum-cost perfect matching on an N x N cost matrix (row-major),
/// by shortest augmenting paths with dual potentials. O(N^3) time, O(N^2)
/// memory for the caller's matrix; N = 1024 takes well under a second and
/// N = 4096 roughly a minute on one core.
inline Assignment solve_assignment(const std::vector<double>& cost, std::size_t n) {
  require(n >= 1, "assignment needs at least one row");
  require(cost.size() == n * n, "assignment cost matrix must be N x N");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based bookkeeping; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      const double* row = &cost[(i0 - 1) * n];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.column_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.column_of_row[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) out.total_cost += cost[i * n + out.column_of_row[i]];
  return out;
}

namespace detail {

inline void check_pair(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  require(mu.dim() == nu.dim(), "measures must share a dimension");
  require(mu.size() == nu.size(),
          "exact transport needs equal sample counts (" + std::to_string(mu.size()) + " vs " +
              std::to_string(nu.size()) + "); use w2_sliced for unequal sizes");
  require(mu.size() <= kMaxAssignmentSize,
          "exact transport is limited to N <= " + std::to_string(kMaxAssignmentSize));
}

template <typename CostFn>
std::vector<double> cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                CostFn&& fn) {
  const std::size_t n = mu.size();
  std::vector<double> cost(n * n);
  parallel_for(n, [&](std::size_t i) {
    const Vector x = mu.sample(i);
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = fn(x, nu.samples().row(static_cast<Eigen::Index>(j)).transpose());
  });
  return cost;
}

}  // namespace detail

/// Exact empirical W2 between equal-size uniform clouds.
inline double w2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  detail::check_pair(mu, nu);
  const auto cost = detail::cost_matrix(
      mu, nu, [](const Vector& x, const Vector& y) { return (x - y).squaredNorm(); });
  const Assignment a = solve_assignment(cost, mu.size());
  return std::sqrt(std::max(0.0, a.total_cost / static_cast<double>(mu.size())));
}

/// Exact rho_g-Wasserstein cost (an expectation of rho_g, no root).
inline double w_rho_g_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            const SemimetricParams& params) {
  validate(params);
  detail::check_pair(mu, nu);
  const auto cost = detail::cost_matrix(
      mu, nu, [&](const Vector& x, const Vector& y) { return rho_g(x, y, params); });
  const Assignment a = solve_assignment(cost, mu.size());
  return a.total_cost / static_cast<double>(mu.size());
}

/// 1-D W2 between equal-size clouds through the sorted (monotone) coupling.
inline double w2_sorted_1d(std::vector<double> a, std::vector<double> b) {
  require(a.size() == b.size() && !a.empty(), "sorted coupling needs equal nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(total / static_cast<double>(a.size()));
}

namespace detail {

/// Squared 1-D W2 between two uniform empirical laws of possibly different
/// sizes, via the quantile functions.
inline double w2_squared_quantile_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
    return total / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double total = 0.0, prev = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - prev) * (a[i] - b[j]) * (a[i] - b[j]);
    prev = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return total;
}

}  // namespace detail

/// Sliced W2: root-mean over random unit directions of the squared 1-D W2 of
/// the projected clouds. Approximate; sample counts may differ.
inline double w2_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                        std::size_t projections, Rng& rng) {
  require(projections >= 1, "sliced W2 needs at least one projection");
  require(mu.dim() == nu.dim(), "measures must share a dimension");
  const Eigen::Index d = mu.dim();
  if (d == 1) {
    // Every direction is +-1 and the sorted coupling is exact.
    const Vector& a = mu.samples().col(0);
    const Vector& b = nu.samples().col(0);
    return std::sqrt(detail::w2_squared_quantile_1d(std::vector<double>(a.data(), a.data() + a.size()),
                                                    std::vector<double>(b.data(), b.data() + b.size())));
  }
  double total = 0.0;
  for (std::size_t l = 0; l < projections; ++l) {
    Vector dir = rng.normal_vector(d);
    const double norm = dir.norm();
    if (norm == 0.0) dir = Vector::Unit(d, 0);
    else dir /= norm;
    const Vector pa = mu.samples() * dir;
    const Vector pb = nu.samples() * dir;
    total += detail::w2_squared_quantile_1d(std::vector<double>(pa.data(), pa.data() + pa.size()),
                                            std::vector<double>(pb.data(), pb.data() + pb.size()));
  }
  return std::sqrt(total / static_cast<double>(projections));
}

inline double moment(const EmpiricalMeasure& mu, double p) {
  require(p >= 1.0, "moment order p must be >= 1");
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.samples().rows(); ++i)
    total += std::pow(mu.samples().row(i).norm(), p);
  return total / static_cast<double>(mu.size());
}

/// Source of test points: a generator (fresh draws) or a finite population
/// that is evaluated exhaustively.
struct GeneratorPopulation {
  GeneratorParams params;
  std::size_t test_size = 1000;
};
using Population = std::variant<GeneratorPopulation, Dataset>;

struct GapEstimate {
  double gap = 0.0;
  double stderr_ = 0.0;
};

/// Mean over theta samples of L_P(theta) - L_S(theta). With a generator, each
/// sample gets its own test set from split_seed(seed, i); the standard error is
/// sd(gap_i)/sqrt(N), or the within-sample test-set error when N = 1.
inline GapEstimate generalization_gap(const EmpiricalMeasure& thetas, const ProblemSpec& spec,
                                      const Population& population, std::uint64_t seed) {
  require(thetas.dim() == spec.param_dim(), "theta samples must match the parameter dimension");
  const std::size_t n_theta = thetas.size();
  std::vector<double> gaps(n_theta), within(n_theta, 0.0);
  const auto* gen = std::get_if<GeneratorPopulation>(&population);
  if (gen) require(gen->test_size >= 1, "population test size must be >= 1");
  Vector teacher;
  if (gen) teacher = resolved_teacher(gen->params);

  parallel_for(n_theta, [&](std::size_t i) {
    const Vector theta = thetas.sample(i);
    const double train = empirical_risk(spec, theta);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    auto add = [&](const DataPoint& z) {
      const double l = instance_loss(spec, theta, z).loss;
      sum += l;
      sum_sq += l * l;
      ++count;
    };
    if (gen) {
      Rng rng(split_seed(seed, i));
      for (std::size_t j = 0; j < gen->test_size; ++j) add(draw_point(gen->params, teacher, rng));
    } else {
      for (const auto& z : std::get<Dataset>(population).points) add(z);
    }
    const double mean = sum / static_cast<double>(count);
    gaps[i] = mean - train;
    if (gen && count > 1) {
      const double var = std::max(0.0, (sum_sq - sum * mean) / static_cast<double>(count - 1));
      within[i] = std::sqrt(var / static_cast<double>(count));
    }
  });

  GapEstimate out;
  double total = 0.0;
  for (double g : gaps) total += g;
  out.gap = total / static_cast<double>(n_theta);
  if (n_theta == 1) {
    out.stderr_ = within[0];
  } else {
    double ss = 0.0;
    for (double g : gaps) ss += (g - out.gap) * (g - out.gap);
    out.stderr_ = std::sqrt(ss / static_cast<double>(n_theta - 1) / static_cast<double>(n_theta));
  }
  return out;
}

/// One line of a distance report: metric,value,N,d,key=value...
struct DistanceRow {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  Eigen::Index d = 0;
  std::map<std::string, std::string> params;
};

inline void write_distance_report(const std::string& path, const std::vector<DistanceRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write distance report '" + path + "'");
  os << "metric,value,N,d,params\n";
  for (const auto& r : rows) {
    os << r.metric << ',' << format_double(r.value) << ',' << r.n << ',' << r.d << ',';
    bool first = true;
    for (const auto& [k, v] : r.params) {
      os << (first ? "" : ";") << k << '=' << v;
      first = false;
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace lnlab
