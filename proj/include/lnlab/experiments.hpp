#pragma once

// Experiment orchestration: each study returns a typed outcome (used directly
// by tests) and is converted into ExperimentResult rows and verdicts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lnlab/bounds.hpp"
#include "lnlab/common.hpp"
#include "lnlab/config.hpp"
#include "lnlab/dynamics.hpp"
#include "lnlab/fit.hpp"
#include "lnlab/measure.hpp"
#include "lnlab/problems.hpp"
#include "lnlab/results.hpp"
#include "lnlab/rng.hpp"
#include "lnlab/transport.hpp"

namespace lnlab {

// ---------------------------------------------------------------------------
// Building blocks shared by the studies

inline GeneratorParams generator_of(const ExperimentConfig& c) {
  GeneratorParams g;
  g.n = c.problem.n;
  g.p = c.problem.p;
  g.teacher_model = {parse_model_family(c.problem.family), c.problem.amplitude};
  if (!c.problem.teacher.empty())
    g.teacher = Eigen::Map<const Vector>(c.problem.teacher.data(),
                                         static_cast<Eigen::Index>(c.problem.teacher.size()));
  g.sigma_y = c.problem.sigma_y;
  g.x_max = c.problem.x_max;
  g.y_max = c.problem.y_max;
  g.seed = c.problem.data_seed;
  return g;
}

inline ProblemSpec build_problem(const ExperimentConfig& c) {
  ProblemSpec spec;
  spec.model = {parse_model_family(c.problem.family), c.problem.amplitude};
  spec.ridge = c.problem.ridge;
  spec.data = c.problem.dataset.empty() ? make_synthetic_dataset(generator_of(c))
                                        : read_dataset_csv(c.problem.dataset);
  require(c.chain.batch <= spec.data.size(), "chain.batch: batch size k = " + std::to_string(c.chain.batch) +
                                                 " exceeds dataset size n = " + std::to_string(spec.data.size()));
  return spec;
}

inline ChainConfig chain_of(const ExperimentConfig& c) {
  ChainConfig ch;
  ch.algorithm = parse_algorithm(c.chain.algorithm);
  ch.flow_noise = parse_flow_noise(c.chain.flow_noise);
  ch.eta = c.chain.eta;
  ch.delta = c.chain.delta;
  ch.beta_inv = c.chain.beta_inv;
  ch.batch = c.chain.batch;
  ch.horizon = c.chain.horizon;
  ch.substeps = c.chain.substeps;
  ch.seed = c.seed;
  return ch;
}

inline InitSampler init_of(const ExperimentConfig& c, Eigen::Index d) {
  Vector center = Vector::Zero(d);
  if (!c.init.center.empty()) center = Eigen::Map<const Vector>(c.init.center.data(), d);
  if (c.init.kind == "point") return point_init(center);
  return gaussian_init(center, c.init.scale);
}

inline std::vector<std::size_t> checkpoints_of(const ExperimentConfig& c) {
  std::vector<std::size_t> out;
  if (!c.checkpoints.empty()) {
    for (double x : c.checkpoints) out.push_back(static_cast<std::size_t>(x));
  } else {
    const std::size_t count = std::max<std::size_t>(1, c.checkpoint_count);
    for (std::size_t i = 1; i <= count; ++i) {
      const std::size_t step = (c.chain.horizon * i) / count;
      if (out.empty() || out.back() != step) out.push_back(step);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::string param_tag(const std::string& key, double v) { return key + "=" + format_double(v); }

/// Constants used by the empirical studies. "audited": m and b from the
/// audit, alpha, M and ell_f in closed form. "closed_form": all closed form.
struct StudyConstants {
  AssumptionConstants closed;
  std::optional<EstimatedConstants> audited;
  double alpha = 0.0, M = 0.0, ell_f = 0.0, m = 0.0, b = 0.0;
  std::string source;
};

inline StudyConstants study_constants(const ExperimentConfig& c, const ProblemSpec& spec) {
  StudyConstants s;
  s.closed = closed_form_constants(spec, c.chain.eta, c.chain.delta, c.chain.batch);
  s.alpha = s.closed.alpha;
  s.M = s.closed.M;
  s.ell_f = s.closed.ell_f;
  s.m = s.closed.m;
  s.b = s.closed.b;
  s.source = c.constants;
  if (c.constants == "audited") {
    s.audited = estimate_constants(spec, {c.audit.pairs, c.audit.radius, c.audit.seed}, c.chain.eta,
                                   c.chain.delta, c.chain.batch);
    s.m = s.audited->constants.m;
    s.b = s.audited->constants.b;
  }
  return s;
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

inline Verdict exact_verdict(const std::string& lemma, const std::string& subject, double lhs, double rhs) {
  Verdict v;
  v.lemma = lemma;
  v.subject = subject;
  v.checked = 1;
  v.satisfied = lhs <= rhs ? 1 : 0;
  v.worst_lhs = lhs;
  v.worst_rhs = rhs;
  v.status = lhs <= rhs ? VerdictStatus::holds : VerdictStatus::violated;
  v.detail = "deterministic check";
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// audit

struct AuditOutcome {
  AssumptionConstants closed;
  EstimatedConstants audited;
  double fresh_pass_fraction = 0.0;
  std::size_t fresh_points = 0;
};

inline AuditOutcome run_audit(const ExperimentConfig& c) {
  const ProblemSpec spec = build_problem(c);
  AuditOutcome out;
  out.closed = closed_form_constants(spec, c.chain.eta, c.chain.delta, c.chain.batch);
  out.audited = estimate_constants(spec, {c.audit.pairs, c.audit.radius, c.audit.seed}, c.chain.eta,
                                   c.chain.delta, c.chain.batch);
  Rng rng(split_seed(c.audit.seed, 0xA0D17));
  out.fresh_points = 1000;
  std::size_t pass = 0;
  const auto& e = out.audited.constants;
  for (std::size_t i = 0; i < out.fresh_points; ++i) {
    Vector th = rng.uniform_in_ball(spec.param_dim(), c.audit.radius);
    if (i % 2 == 1 && th.norm() > 0.0) th *= std::pow(10.0, -3.0 * rng.uniform()) * c.audit.radius / th.norm();
    if (th.dot(full_grad(spec, th)) >= e.m * th.squaredNorm() - e.b - 1e-12 * (1.0 + e.b)) ++pass;
  }
  out.fresh_pass_fraction = static_cast<double>(pass) / static_cast<double>(out.fresh_points);
  return out;
}

inline ExperimentResult audit_result(const ExperimentConfig& c, const AuditOutcome& o) {
  ExperimentResult r;
  const std::string x = "audit";
  auto both = [&](const std::string& name, double closed, double est) {
    r.add(x, "closed-form", name, closed, 0.0, c.audit.seed);
    r.add(x, "empirical", name, est, 0.0, c.audit.seed);
  };
  const auto& e = o.audited.constants;
  both("alpha", o.closed.alpha, e.alpha);
  both("M", o.closed.M, e.M);
  both("ell_f", o.closed.ell_f, e.ell_f);
  both("m", o.closed.m, e.m);
  both("b", o.closed.b, e.b);
  r.add(x, "empirical", "pairs_used", static_cast<double>(o.audited.pairs_used), 0.0, c.audit.seed);
  r.add(x, "empirical", "fresh_dissipativity_pass_fraction", o.fresh_pass_fraction, 0.0, c.audit.seed);
  r.verdicts.push_back(detail::exact_verdict("uniform dissipativity vs smoothness", "alpha_hat <= 2 M_hat",
                                             e.alpha, 2.0 * e.M));
  r.verdicts.push_back(detail::exact_verdict("closed-form worst case", "alpha_closed <= alpha_hat",
                                             o.closed.alpha, e.alpha));
  r.verdicts.push_back(detail::exact_verdict("(m,b)-dissipativity", "fresh-sample violations fraction <= 0",
                                             1.0 - o.fresh_pass_fraction, 0.0));
  for (const auto& n : o.closed.notes) r.notes.push_back("closed-form: " + n);
  for (const auto& n : e.notes) r.notes.push_back("empirical: " + n);
  return r;
}

// ---------------------------------------------------------------------------
// bounds

struct BoundsOutcome {
  BoundInputs inputs;
  SelectionResult selection;
  SelectionResult paper_literal;
  BoundReport report;
};

inline BoundInputs bound_inputs_of(const ExperimentConfig& c) {
  BoundInputs in;
  in.alpha = c.bound.alpha;
  in.M = c.bound.M;
  in.ell_f = c.bound.ell_f;
  in.delta = c.bound.delta;
  in.k = c.bound.k;
  in.n = c.bound.n;
  in.d = c.bound.d;
  in.sigma4 = c.bound.sigma4;
  in.eta = std::isnan(c.bound.eta) ? std::pow(c.bound.n, c.bound.eta_exponent) : c.bound.eta;
  in.t = c.bound.t;
  in.beta_inv = c.sgld.beta_inv;
  return in;
}

inline ContractionInputs contraction_inputs_of(const BoundInputs& in) {
  return {in.alpha, in.eta, in.eta_max, in.sigma4,
          moment_estimate_ctilde(2.0, in.eta_max, in.b, in.m, in.delta, in.ell_f),
          in.b, in.m, in.delta, in.k, in.d, in.ell_f};
}

/// Resolves inputs and selects contraction parameters in the configured mode.
inline BoundsOutcome evaluate_bounds(BoundInputs in, SelectionMode mode, GenMode gen_mode, double R) {
  BoundsOutcome out;
  if (auto why = resolve_inputs(in)) {
    out.inputs = in;
    out.report.mode = to_string(gen_mode);
    out.report.check("dissipativity pair", false, *why);
    return out;
  }
  out.inputs = in;
  const ContractionInputs ci = contraction_inputs_of(in);
  out.selection = select_contraction_params(ci, mode);
  out.paper_literal = select_contraction_params(ci, SelectionMode::paper_literal);
  if (out.selection.feasible) {
    out.report = gen_bound(gen_mode, in, out.selection.params, R, in.t);
  } else {
    out.report.mode = to_string(gen_mode);
    out.report.check("contraction parameters", false,
                     "selection (" + to_string(mode) + ") infeasible");
  }
  out.report.set("selection_C1", out.selection.C1);
  out.report.set("paper_literal_a", out.paper_literal.params.a);
  out.report.set("paper_literal_epsilon", out.paper_literal.params.epsilon);
  out.report.set("literal_s_low", out.paper_literal.literal_s_low);
  out.report.notes.push_back(std::string("paper-literal selection ") +
                             (out.paper_literal.feasible ? "feasible" : "infeasible"));
  for (const auto& n : out.paper_literal.notes) out.report.notes.push_back("paper-literal: " + n);
  for (const auto& n : out.selection.notes) out.report.notes.push_back("selection: " + n);
  return out;
}

inline ExperimentResult bounds_result(const ExperimentConfig& c, const BoundsOutcome& o) {
  ExperimentResult r;
  const std::string id = param_tag("n", o.inputs.n) + ";" + param_tag("eta", o.inputs.eta);
  r.add("bounds", id, "bound_" + o.report.mode, o.report.value, 0.0, c.seed);
  for (const auto& [k, v] : o.report.constants) r.add("bounds", id, k, v, 0.0, c.seed);
  r.add("bounds", id, "feasible", o.report.feasible ? 1.0 : 0.0, 0.0, c.seed);
  r.artifacts["bounds.txt"] = o.report.to_text();
  r.artifacts["bounds.json"] = o.report.to_json().dump(2) + "\n";
  r.notes = o.report.notes;
  return r;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOutcome {
  std::vector<std::size_t> checkpoints;
  std::vector<double> times;
  std::vector<double> second_moment, second_moment_se;
  std::vector<double> displacement, displacement_se;  // E||theta_t - theta_0||^2
  std::vector<double> moment_bound, divergence_bound;
  double initial_second_moment = 0.0;
  StudyConstants constants;
  GapEstimate gap;
  bool gap_evaluated = false;
  std::vector<std::string> warnings;
};

inline SimulateOutcome run_simulate(const ExperimentConfig& c) {
  const ProblemSpec spec = build_problem(c);
  ChainConfig chain = chain_of(c);
  SimulateOutcome out;
  out.constants = study_constants(c, spec);
  const auto& k = out.constants;
  if (k.m > 0.0 && k.M > 0.0) chain.eta_max = eta_max_of(k.m, k.M);
  out.warnings = validate_chain(spec, chain);

  out.checkpoints = checkpoints_of(c);
  std::vector<std::size_t> all = out.checkpoints;
  all.push_back(0);
  const auto ensemble =
      simulate_ensemble(spec, chain, c.replicas, all, init_of(c, spec.param_dim()));
  const Matrix& start = ensemble.at(0).samples();
  std::vector<double> sq0(start.rows());
  for (Eigen::Index i = 0; i < start.rows(); ++i) sq0[i] = start.row(i).squaredNorm();
  out.initial_second_moment = detail::mean_of(sq0);

  const bool sgld = chain.algorithm == Algorithm::sgld ||
                    (chain.algorithm == Algorithm::flow && chain.flow_noise == FlowNoise::sgld);
  const double d = static_cast<double>(spec.param_dim());
  const double kk = static_cast<double>(chain.batch);
  const MomentVariant variant =
      c.bound.moment_variant == "appendix" ? MomentVariant::appendix : MomentVariant::main_text;
  for (std::size_t cp : out.checkpoints) {
    const Matrix& cloud = ensemble.at(cp).samples();
    std::vector<double> sq(cloud.rows()), disp(cloud.rows());
    for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
      sq[i] = cloud.row(i).squaredNorm();
      disp[i] = (cloud.row(i) - start.row(i)).squaredNorm();
    }
    const double t = static_cast<double>(cp) * chain.eta;
    out.times.push_back(t);
    out.second_moment.push_back(detail::mean_of(sq));
    out.second_moment_se.push_back(detail::stderr_of(sq));
    out.displacement.push_back(detail::mean_of(disp));
    out.displacement_se.push_back(detail::stderr_of(disp));
    if (!(k.m > 0.0)) {
      out.moment_bound.push_back(kNaN);
      out.divergence_bound.push_back(kNaN);
    } else if (sgld) {
      SgldParams q;
      q.mu_p = out.initial_second_moment;
      q.mu2 = out.initial_second_moment;
      q.p = 2.0;
      q.b = k.b;
      q.m = k.m;
      q.M = k.M;
      q.d = d;
      q.beta_inv = chain.beta_inv;
      q.t = t;
      out.moment_bound.push_back(sgld_bound_rhs(SgldBound::moment, q));
      out.divergence_bound.push_back(sgld_bound_rhs(SgldBound::divergence, q));
    } else {
      out.moment_bound.push_back(moment_bound_rhs(out.initial_second_moment, 2.0, k.b, k.m, chain.delta,
                                                  chain.eta, kk, d, k.ell_f, variant));
      out.divergence_bound.push_back(divergence_bound_rhs(out.initial_second_moment, t, k.M, k.b, k.m,
                                                          chain.delta, chain.eta, kk, d, k.ell_f));
    }
  }
  if (c.problem.dataset.empty() && !out.checkpoints.empty()) {
    out.gap = generalization_gap(ensemble.at(out.checkpoints.back()), spec,
                                 GeneratorPopulation{generator_of(c), c.gap_test_size},
                                 split_seed(c.seed, 0x6A9));
    out.gap_evaluated = true;
  }
  return out;
}

inline ExperimentResult simulate_result(const ExperimentConfig& c, const SimulateOutcome& o) {
  ExperimentResult r;
  const std::string x = "simulate";
  std::vector<std::pair<double, double>> moment_sides, divergence_sides;
  for (std::size_t i = 0; i < o.checkpoints.size(); ++i) {
    const std::string id = "t=" + std::to_string(o.checkpoints[i]);
    r.add(x, id, "second_moment", o.second_moment[i], o.second_moment_se[i], c.seed);
    r.add(x, id, "moment_bound", o.moment_bound[i], 0.0, c.seed);
    r.add(x, id, "displacement", o.displacement[i], o.displacement_se[i], c.seed);
    r.add(x, id, "divergence_bound", o.divergence_bound[i], 0.0, c.seed);
    moment_sides.emplace_back(o.second_moment[i], o.moment_bound[i]);
    divergence_sides.emplace_back(o.displacement[i], o.divergence_bound[i]);
  }
  if (o.gap_evaluated) {
    const std::string id = "t=" + std::to_string(o.checkpoints.back());
    r.add(x, id, "generalization_gap", o.gap.gap, o.gap.stderr_, c.seed);
  }
  const std::string why = o.constants.m > 0.0 ? "" : "m <= 0: bound not defined";
  r.verdicts.push_back(judge("moment bound", "E||theta_t||^2 <= moment bound (p = 2)", moment_sides,
                             c.replicas, why));
  r.verdicts.push_back(judge("divergence bound", "E||theta_t - theta_0||^2 <= divergence bound",
                             divergence_sides, c.replicas, why));
  r.notes.push_back("constants: " + o.constants.source + " (m = " + format_double(o.constants.m) +
                    ", b = " + format_double(o.constants.b) + ", M = " + format_double(o.constants.M) +
                    ", ell_f = " + format_double(o.constants.ell_f) + ")");
  for (const auto& w : o.warnings) r.notes.push_back("chain: " + w);
  return r;
}

// ---------------------------------------------------------------------------
// contraction

struct ContractionOutcome {
  std::vector<std::size_t> checkpoints;
  std::vector<double> times, w2, floor, bound;
  std::vector<std::size_t> window;  // indices used in the rate fit
  double rate = kNaN;
  double alpha_closed = 0.0;
  bool monotone = true;
  double worst_increase = 0.0;  // max(W2[i+1] - W2[i] - tolerance)
};

inline ContractionOutcome run_contraction(const ExperimentConfig& c) {
  const ProblemSpec spec = build_problem(c);
  ChainConfig chain = chain_of(c);
  const Eigen::Index d = spec.param_dim();
  Vector theta0 = Vector::Zero(d);
  if (c.contraction_theta0.empty()) theta0[0] = 2.0;
  else theta0 = Eigen::Map<const Vector>(c.contraction_theta0.data(), d);

  ContractionOutcome out;
  out.alpha_closed = closed_form_constants(spec, chain.eta, chain.delta, chain.batch).alpha;
  out.checkpoints = checkpoints_of(c);
  std::vector<std::size_t> all = out.checkpoints;
  all.push_back(0);
  ChainConfig ca = chain, cb = chain;
  ca.seed = split_seed(c.seed, 1);
  cb.seed = split_seed(c.seed, 2);
  const auto ens_a = simulate_ensemble(spec, ca, c.replicas, all, point_init(theta0));
  const auto ens_b = simulate_ensemble(spec, cb, c.replicas, all, point_init(Vector(-theta0)));

  const std::size_t half = c.replicas / 2;
  auto half_split = [&](const EmpiricalMeasure& mu, Rng& rng) {
    std::vector<std::size_t> idx(mu.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i + 1 < idx.size(); ++i)
      std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.uniform_index(idx.size() - i))]);
    Matrix a(static_cast<Eigen::Index>(half), mu.dim()), b(static_cast<Eigen::Index>(half), mu.dim());
    for (std::size_t i = 0; i < half; ++i) {
      a.row(static_cast<Eigen::Index>(i)) = mu.samples().row(static_cast<Eigen::Index>(idx[i]));
      b.row(static_cast<Eigen::Index>(i)) = mu.samples().row(static_cast<Eigen::Index>(idx[half + i]));
    }
    return w2_exact(EmpiricalMeasure(a), EmpiricalMeasure(b));
  };

  Rng boot(split_seed(c.seed, 3));
  const double w2_zero = w2_exact(ens_a.at(0), ens_b.at(0));
  for (std::size_t cp : out.checkpoints) {
    const double t = static_cast<double>(cp) * chain.eta;
    out.times.push_back(t);
    out.w2.push_back(w2_exact(ens_a.at(cp), ens_b.at(cp)));
    double floor = 0.0;
    for (std::size_t rep = 0; rep < c.contraction_bootstrap; ++rep)
      floor += 0.5 * (half_split(ens_a.at(cp), boot) + half_split(ens_b.at(cp), boot));
    out.floor.push_back(c.contraction_bootstrap ? floor / static_cast<double>(c.contraction_bootstrap) : 0.0);
    out.bound.push_back(std::exp(-out.alpha_closed * t / 2.0) * w2_zero);
  }
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < out.w2.size(); ++i) {
    if (out.times[i] > 0.0 && out.w2[i] > c.contraction_floor_factor * out.floor[i]) {
      out.window.push_back(i);
      xs.push_back(out.times[i]);
      ys.push_back(std::log(out.w2[i]));
    }
  }
  if (xs.size() >= 2) out.rate = -fit_line(xs, ys).slope;
  for (std::size_t i = 0; i + 1 < out.w2.size(); ++i) {
    const double tol = c.contraction_floor_factor * std::max(out.floor[i], out.floor[i + 1]);
    const double excess = out.w2[i + 1] - out.w2[i] - tol;
    out.worst_increase = std::max(out.worst_increase, excess);
    if (excess > 0.0) out.monotone = false;
  }
  return out;
}

inline ExperimentResult contraction_result(const ExperimentConfig& c, const ContractionOutcome& o) {
  ExperimentResult r;
  const std::string x = "contraction";
  std::vector<std::pair<double, double>> sides;
  for (std::size_t i = 0; i < o.checkpoints.size(); ++i) {
    const std::string id = "t=" + std::to_string(o.checkpoints[i]);
    r.add(x, id, "w2", o.w2[i], o.floor[i], c.seed);
    r.add(x, id, "noise_floor", o.floor[i], 0.0, c.seed);
    r.add(x, id, "w2_bound", o.bound[i], 0.0, c.seed);
  }
  for (std::size_t i : o.window) sides.emplace_back(o.w2[i], o.bound[i]);
  r.add(x, "fit", "rate", o.rate, 0.0, c.seed);
  r.add(x, "fit", "alpha_closed", o.alpha_closed, 0.0, c.seed);
  r.add(x, "fit", "target_rate", o.alpha_closed / 2.0, 0.0, c.seed);
  r.add(x, "fit", "window_points", static_cast<double>(o.window.size()), 0.0, c.seed);
  r.add(x, "fit", "monotone", o.monotone ? 1.0 : 0.0, 0.0, c.seed);
  const std::string why = o.alpha_closed > 0.0 ? "" : "alpha_closed <= 0";
  r.verdicts.push_back(judge("contraction (2-Wasserstein)", "W2(t) <= exp(-alpha t/2) W2(0) above the noise floor",
                             sides, c.replicas, why));
  r.notes.push_back("noise floor: mean W2 between random half-splits of each ensemble");
  return r;
}

// ---------------------------------------------------------------------------
// discretize

struct DiscretizeOutcome {
  std::vector<double> etas, cost, cost_se, sqrt_bound;
  double slope = kNaN;
  StudyConstants constants;
};

inline DiscretizeOutcome run_discretize(const ExperimentConfig& c) {
  const ProblemSpec spec = build_problem(c);
  ChainConfig base = chain_of(c);
  if (base.algorithm == Algorithm::flow) base.algorithm = Algorithm::label_noise_sgd;
  base.horizon = 1;
  DiscretizeOutcome out;
  out.constants = study_constants(c, spec);
  const auto& k = out.constants;
  const InitSampler init = init_of(c, spec.param_dim());
  const std::size_t N = c.replicas;
  for (double eta : c.discretize_etas) {
    ChainConfig cfg = base;
    cfg.eta = eta;
    std::vector<double> gap2(N), sq0(N);
    parallel_for(N, [&](std::size_t i) {
      ChainConfig local = cfg;
      local.seed = split_seed(c.seed, i);
      Rng init_rng(split_seed(local.seed, UINT64_MAX));
      CouplingExtras ex;
      ex.theta0 = init(init_rng);
      const CouplingRun run = run_coupled(spec, local, CouplingMode::synchronous_discretization, ex);
      gap2[i] = (run.first.states[1] - run.second.states[1]).squaredNorm();
      sq0[i] = ex.theta0.squaredNorm();
    });
    const double mean2 = detail::mean_of(gap2);
    const double cost = std::sqrt(mean2);
    out.etas.push_back(eta);
    out.cost.push_back(cost);
    out.cost_se.push_back(cost > 0.0 ? detail::stderr_of(gap2) / (2.0 * cost) : 0.0);
    const double mu2 = detail::mean_of(sq0);
    double bound = kNaN;
    if (k.m > 0.0) {
      if (cfg.algorithm == Algorithm::sgld) {
        SgldParams q;
        q.mu2 = mu2;
        q.eta = eta;
        q.M = k.M;
        q.b = k.b;
        q.m = k.m;
        q.beta_inv = cfg.beta_inv;
        q.d = static_cast<double>(spec.param_dim());
        bound = sgld_bound_rhs(SgldBound::discretization, q);
      } else {
        bound = discretization_bound_rhs(mu2, eta, k.M, k.b, k.m, cfg.delta, static_cast<double>(cfg.batch),
                                         k.ell_f);
      }
    }
    out.sqrt_bound.push_back(std::sqrt(bound));
  }
  bool positive = out.cost.size() >= 2;
  for (double v : out.cost) positive = positive && v > 0.0;
  if (positive) out.slope = fit_loglog_slope(out.etas, out.cost).slope;
  return out;
}

inline ExperimentResult discretize_result(const ExperimentConfig& c, const DiscretizeOutcome& o) {
  ExperimentResult r;
  const std::string x = "discretize";
  std::vector<std::pair<double, double>> sides;
  for (std::size_t i = 0; i < o.etas.size(); ++i) {
    const std::string id = param_tag("eta", o.etas[i]);
    r.add(x, id, "coupled_w2", o.cost[i], o.cost_se[i], c.seed);
    r.add(x, id, "sqrt_bound", o.sqrt_bound[i], 0.0, c.seed);
    sides.emplace_back(o.cost[i], o.sqrt_bound[i]);
  }
  r.add(x, "fit", "eta_slope", o.slope, 0.0, c.seed);
  r.verdicts.push_back(judge("discretization error bound",
                             "synchronous-coupling one-step W2 <= sqrt(bound)", sides, c.replicas));
  r.notes.push_back("flow realized with " + std::to_string(c.chain.substeps) +
                    " Euler-Maruyama substeps; coupling cost upper-bounds W2 between the laws");
  return r;
}

// ---------------------------------------------------------------------------
// stability

struct StabilityOutcome {
  std::vector<std::size_t> checkpoints;
  std::vector<double> times, w_rho, bound, loss_gap_sup;
  bool identical = true;  // every replica pair identical bitwise
  bool bound_evaluable = false;
  bool smooth_below_half_alpha = false;
  SemimetricParams semimetric;
  std::vector<std::string> notes;
};

namespace detail {
/// Uniform k-subset of {0..n-1} \ {excluded}.
inline Batch batch_excluding(std::size_t n, std::size_t k, std::size_t excluded, Rng& rng) {
  Batch b = rng.subset(n - 1, k);
  for (auto& i : b)
    if (i >= excluded) ++i;
  return b;
}
}  // namespace detail

inline StabilityOutcome run_stability(const ExperimentConfig& c) {
  const ProblemSpec spec = build_problem(c);
  ChainConfig chain = chain_of(c);
  StabilityOutcome out;
  const std::size_t n = spec.data.size();
  const std::size_t index = c.stability_index;
  require(index < n, "stability.index must be < n");
  if (c.stability_exclude_index)
    require(chain.batch <= n - 1, "excluding the differing index needs k <= n - 1");

  const GeneratorParams gen = generator_of(c);
  Rng zrng(split_seed(c.seed, 0x2EE1));
  const DataPoint replacement = draw_point(gen, resolved_teacher(gen), zrng);

  const AssumptionConstants closed = closed_form_constants(spec, chain.eta, chain.delta, chain.batch);
  const StudyConstants sc = study_constants(c, spec);
  out.smooth_below_half_alpha = closed.smooth_below_half_alpha;
  out.checkpoints = checkpoints_of(c);
  const std::size_t last = out.checkpoints.empty() ? 0 : out.checkpoints.back();
  chain.horizon = last;

  const Eigen::Index d = spec.param_dim();
  const std::size_t N = c.replicas;
  const InitSampler init = init_of(c, d);
  std::vector<Matrix> first(out.checkpoints.size(), Matrix(static_cast<Eigen::Index>(N), d));
  std::vector<Matrix> second = first;
  std::vector<double> fourth(N);
  std::vector<char> same(N, 1);
  parallel_for(N, [&](std::size_t r) {
    ChainConfig local = chain;
    local.seed = split_seed(c.seed, r);
    Rng init_rng(split_seed(local.seed, UINT64_MAX));
    CouplingExtras ex;
    ex.theta0 = init(init_rng);
    ex.differing_index = index;
    ex.replacement = replacement;
    if (c.stability_exclude_index) {
      Rng sched(split_seed(local.seed, 0x5C4ED));
      std::vector<Batch> schedule;
      for (std::size_t t = 0; t < last; ++t) schedule.push_back(detail::batch_excluding(n, local.batch, index, sched));
      ex.forced_schedule = std::move(schedule);
    }
    const CouplingRun run = run_coupled(spec, local, CouplingMode::neighbor_stability, ex);
    fourth[r] = std::pow(ex.theta0.squaredNorm(), 2.0);
    for (std::size_t t = 0; t < run.first.states.size(); ++t)
      if (!(run.first.states[t].array() == run.second.states[t].array()).all()) same[r] = 0;
    for (std::size_t j = 0; j < out.checkpoints.size(); ++j) {
      first[j].row(static_cast<Eigen::Index>(r)) = run.first.states[out.checkpoints[j]].transpose();
      second[j].row(static_cast<Eigen::Index>(r)) = run.second.states[out.checkpoints[j]].transpose();
    }
  });
  out.identical = std::all_of(same.begin(), same.end(), [](char s) { return s != 0; });

  // Bound ledger with the study constants; sigma4 from the initial cloud.
  BoundInputs in;
  in.alpha = sc.alpha;
  in.M = sc.M;
  in.ell_f = sc.ell_f;
  in.delta = chain.delta;
  in.eta = chain.eta;
  in.k = static_cast<double>(chain.batch);
  in.n = static_cast<double>(n);
  in.d = static_cast<double>(d);
  in.m = sc.m;
  in.b = sc.b;
  in.sigma4 = detail::mean_of(fourth);
  out.semimetric = {c.transport.epsilon, c.transport.R, c.transport.phi};
  BoundReport rep;
  if (in.alpha > 0.0 && in.m > 0.0 && in.M > 0.0 && in.n > in.k) {
    in.eta_max = eta_max_of(in.m, in.M);
    const SelectionResult sel = select_contraction_params(contraction_inputs_of(in), SelectionMode::search);
    if (sel.feasible) {
      rep = gen_bound(GenMode::discrete, in, sel.params, c.transport.R, 0.0);
      out.bound_evaluable = rep.feasible;
      out.semimetric = {sel.params.epsilon, c.transport.R, sel.params.phi};
    } else {
      out.notes.push_back("contraction parameter selection infeasible");
    }
  } else {
    out.notes.push_back("induction bound needs alpha > 0, m > 0, M > 0 and n > k");
  }

  Rng trng(split_seed(c.seed, 0x7E57));
  std::vector<DataPoint> tests;
  for (std::size_t i = 0; i < c.stability_test_points; ++i) tests.push_back(draw_point(gen, resolved_teacher(gen), trng));

  for (std::size_t j = 0; j < out.checkpoints.size(); ++j) {
    const double steps = static_cast<double>(out.checkpoints[j]);
    out.times.push_back(steps * chain.eta);
    const EmpiricalMeasure a(first[j]), b(second[j]);
    out.w_rho.push_back(w_rho_g_exact(a, b, out.semimetric));
    out.bound.push_back(out.bound_evaluable ? stability_induction_bound(rep, in, steps) : kNaN);
    double sup = 0.0;
    for (const auto& z : tests) {
      double la = 0.0, lb = 0.0;
      for (std::size_t r = 0; r < N; ++r) {
        la += instance_loss(spec, a.sample(r), z).loss;
        lb += instance_loss(spec, b.sample(r), z).loss;
      }
      sup = std::max(sup, std::abs(la - lb) / static_cast<double>(N));
    }
    out.loss_gap_sup.push_back(sup);
  }
  return out;
}

inline ExperimentResult stability_result(const ExperimentConfig& c, const StabilityOutcome& o) {
  ExperimentResult r;
  const std::string x = "stability";
  std::vector<std::pair<double, double>> sides;
  for (std::size_t i = 0; i < o.checkpoints.size(); ++i) {
    const std::string id = "t=" + std::to_string(o.checkpoints[i]);
    r.add(x, id, "w_rho_g", o.w_rho[i], 0.0, c.seed);
    r.add(x, id, "induction_bound", o.bound[i], 0.0, c.seed);
    r.add(x, id, "loss_gap_sup_lower_estimate", o.loss_gap_sup[i], 0.0, c.seed);
    sides.emplace_back(o.w_rho[i], o.bound[i]);
  }
  r.add(x, "all", "identical_trajectories", o.identical ? 1.0 : 0.0, 0.0, c.seed);
  std::string why;
  if (!o.smooth_below_half_alpha) why = "M >= alpha/2 for the closed-form constants; the bound's hypotheses are not met";
  else if (!o.bound_evaluable) why = "induction bound not evaluable";
  r.verdicts.push_back(judge("stability induction bound", "W_rho_g(neighbor ensembles) <= induction bound", sides,
                             c.replicas, why));
  r.notes = o.notes;
  r.notes.push_back("loss gap is a max over sampled test points for one sampled neighbor pair (a lower estimate of the stability supremum)");
  r.notes.push_back("semimetric epsilon = " + format_double(o.semimetric.epsilon) + ", R = " +
                    format_double(o.semimetric.radius) + ", phi = " + format_double(o.semimetric.phi));
  return r;
}

// ---------------------------------------------------------------------------
// scaling, rate, sgld-compare

inline DecayInputs decay_inputs_of(const ExperimentConfig& c) {
  DecayInputs di;
  di.base = bound_inputs_of(c);
  di.R = c.bound.R;
  if (auto why = resolve_inputs(di.base)) throw InputError("bound inputs infeasible: " + *why);
  const SelectionResult sel = select_contraction_params(contraction_inputs_of(di.base), SelectionMode::search);
  if (!sel.feasible) throw InputError("contraction parameter selection infeasible for the bound inputs");
  di.selection = sel.params;
  di.sgld.b = di.base.b;
  di.sgld.m = di.base.m;
  di.sgld.M = di.base.M;
  di.sgld.d = di.base.d;
  di.sgld.k = di.base.k;
  di.sgld.beta_inv = c.sgld.beta_inv;
  di.sgld.C4 = c.sgld.C4;
  di.sgld.C5 = c.sgld.C5;
  di.sgld.C6 = c.sgld.C6;
  return di;
}

struct ScalingOutcome {
  std::vector<double> ns, values;
  LineFit fit;
};

inline ScalingOutcome run_scaling(const ExperimentConfig& c) {
  const DecayInputs di = decay_inputs_of(c);
  const BoundFamily family = parse_bound_family(c.scaling_family);
  ScalingOutcome out;
  out.ns = geometric_grid(c.scaling_n_min, c.scaling_n_max, c.scaling_n_count);
  for (double n : out.ns) out.values.push_back(saturated_bound(family, di, n, std::pow(n, c.scaling_q)));
  out.fit = fit_loglog_slope(out.ns, out.values);
  return out;
}

inline ExperimentResult scaling_result(const ExperimentConfig& c, const ScalingOutcome& o) {
  ExperimentResult r;
  for (std::size_t i = 0; i < o.ns.size(); ++i)
    r.add("scaling", param_tag("n", o.ns[i]), "bound_" + c.scaling_family, o.values[i], 0.0, c.seed);
  const std::string id = param_tag("q", c.scaling_q);
  r.add("scaling", id, "n_slope", o.fit.slope, 0.0, c.seed);
  r.add("scaling", id, "r2", o.fit.r2, 0.0, c.seed);
  return r;
}

inline DecayResult run_rate(const ExperimentConfig& c) {
  const DecayInputs di = decay_inputs_of(c);
  return optimize_decay_exponent(parse_bound_family(c.rate_family), di,
                                 geometric_grid(c.scaling_n_min, c.scaling_n_max, c.scaling_n_count),
                                 linear_grid(c.rate_q_min, c.rate_q_max, c.rate_q_count));
}

inline ExperimentResult rate_result(const ExperimentConfig& c, const DecayResult& o) {
  ExperimentResult r;
  std::string csv = "q,slope\n";
  for (const auto& [q, s] : o.slopes) {
    r.add("rate", param_tag("q", q), "n_slope", s, 0.0, c.seed);
    csv += format_double(q) + "," + format_double(s) + "\n";
  }
  r.add("rate", c.rate_family, "q_star", o.q_star, 0.0, c.seed);
  r.add("rate", c.rate_family, "slope_at_q_star", o.slope, 0.0, c.seed);
  r.artifacts["rate.csv"] = csv;
  return r;
}

struct SgldCompareOutcome {
  double ln_disc_eta_slope = kNaN, sgld_disc_eta_slope = kNaN;
  double ln_div_t_slope = kNaN, sgld_div_t_slope = kNaN;
  DecayResult ln_rate, sgld_rate;
};

/// Slope of the eta-dependent part of a discretization bound over eta in [1e-3, 1e-2].
inline double discretization_eta_slope(bool sgld, const DecayInputs& di, double mu2) {
  const auto etas = geometric_grid(1e-3, 1e-2, 21);
  std::vector<double> ys;
  for (double eta : etas) {
    if (sgld) {
      SgldParams q = di.sgld;
      q.mu2 = mu2;
      q.eta = eta;
      ys.push_back(sgld_bound_rhs(SgldBound::discretization, q));
    } else {
      ys.push_back(discretization_bound_rhs(mu2, eta, di.base.M, di.base.b, di.base.m, di.base.delta, di.base.k,
                                            di.base.ell_f));
    }
  }
  return fit_loglog_slope(etas, ys).slope;
}

inline SgldCompareOutcome run_sgld_compare(const ExperimentConfig& c) {
  const DecayInputs di = decay_inputs_of(c);
  SgldCompareOutcome out;
  const double mu2 = std::sqrt(di.base.sigma4);
  out.ln_disc_eta_slope = discretization_eta_slope(false, di, mu2);
  out.sgld_disc_eta_slope = discretization_eta_slope(true, di, mu2);
  const auto ts = geometric_grid(1e2, 1e4, 21);
  std::vector<double> ln, sg;
  for (double t : ts) {
    ln.push_back(divergence_bound_rhs(mu2, t, di.base.M, di.base.b, di.base.m, di.base.delta, di.base.eta,
                                      di.base.k, di.base.d, di.base.ell_f));
    SgldParams q = di.sgld;
    q.mu2 = mu2;
    q.t = t;
    sg.push_back(sgld_bound_rhs(SgldBound::divergence, q));
  }
  out.ln_div_t_slope = fit_loglog_slope(ts, ln).slope;
  out.sgld_div_t_slope = fit_loglog_slope(ts, sg).slope;
  const auto ns = geometric_grid(c.scaling_n_min, c.scaling_n_max, c.scaling_n_count);
  const auto qs = linear_grid(c.rate_q_min, c.rate_q_max, c.rate_q_count);
  out.ln_rate = optimize_decay_exponent(BoundFamily::label_noise_discrete, di, ns, qs);
  out.sgld_rate = optimize_decay_exponent(BoundFamily::sgld_discrete, di, ns, qs);
  return out;
}

inline ExperimentResult sgld_compare_result(const ExperimentConfig& c, const SgldCompareOutcome& o) {
  ExperimentResult r;
  const std::string x = "sgld-compare";
  r.add(x, "label_noise", "discretization_eta_slope", o.ln_disc_eta_slope, 0.0, c.seed);
  r.add(x, "sgld", "discretization_eta_slope", o.sgld_disc_eta_slope, 0.0, c.seed);
  r.add(x, "label_noise", "divergence_t_slope", o.ln_div_t_slope, 0.0, c.seed);
  r.add(x, "sgld", "divergence_t_slope", o.sgld_div_t_slope, 0.0, c.seed);
  r.add(x, "label_noise", "optimal_q", o.ln_rate.q_star, 0.0, c.seed);
  r.add(x, "sgld", "optimal_q", o.sgld_rate.q_star, 0.0, c.seed);
  r.add(x, "label_noise", "n_slope_at_optimal_q", o.ln_rate.slope, 0.0, c.seed);
  r.add(x, "sgld", "n_slope_at_optimal_q", o.sgld_rate.slope, 0.0, c.seed);
  std::ostringstream table;
  table << "quantity                      label_noise   sgld\n";
  auto row = [&](const std::string& name, double a, double b) {
    table << name << std::string(30 - name.size(), ' ') << format_double(a)
          << std::string(14 - std::min<std::size_t>(13, format_double(a).size()), ' ') << format_double(b) << '\n';
  };
  row("discretization eta-slope", o.ln_disc_eta_slope, o.sgld_disc_eta_slope);
  row("divergence t-slope", o.ln_div_t_slope, o.sgld_div_t_slope);
  row("optimal eta exponent q", o.ln_rate.q_star, o.sgld_rate.q_star);
  row("n-slope at optimal q", o.ln_rate.slope, o.sgld_rate.slope);
  r.artifacts["comparison.txt"] = table.str();
  return r;
}

// ---------------------------------------------------------------------------

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  if (auto errors = validate_config(c); !errors.empty()) throw ConfigError(errors);
  const std::string& x = c.experiment;
  if (x == "audit") return audit_result(c, run_audit(c));
  if (x == "bounds") {
    const BoundsOutcome o = evaluate_bounds(bound_inputs_of(c), parse_selection_mode(c.bound.selection),
                                            parse_gen_mode(c.bound.mode), c.bound.R);
    return bounds_result(c, o);
  }
  if (x == "simulate") return simulate_result(c, run_simulate(c));
  if (x == "contraction") return contraction_result(c, run_contraction(c));
  if (x == "discretize") return discretize_result(c, run_discretize(c));
  if (x == "stability") return stability_result(c, run_stability(c));
  if (x == "scaling") return scaling_result(c, run_scaling(c));
  if (x == "rate") return rate_result(c, run_rate(c));
  if (x == "sgld-compare") return sgld_compare_result(c, run_sgld_compare(c));
  throw ConfigError({"experiment: unknown experiment '" + x + "'"});
}

}  // namespace lnlab
