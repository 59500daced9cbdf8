// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "lnlab/lnlab.hpp"
#include "oracle/oracle_suite.hpp"

using namespace lnlab;

namespace {

// Tolerances and time limits.
constexpr double kOracleRelTol = 1e-10;
constexpr std::size_t kOracleTrials = 100;
constexpr double kOracleSeconds = 10.0;
constexpr double kLabelNoiseQ = -2.0 / 3.0;
constexpr double kSgldQ = -0.5;
constexpr double kQTol = 0.05;
constexpr double kSlopeTol = 0.02;
constexpr double kRateSeconds = 30.0;
constexpr double kEtaSlopeTol = 1e-3;
constexpr double kEtaSlopeSeconds = 5.0;
constexpr double kEnsembleSeconds = 60.0;
constexpr double kDivergenceHorizon = 2.5;
constexpr double kDiscSlopeLow = 1.6, kDiscSlopeHigh = 2.4;
constexpr double kDiscSeconds = 120.0;
constexpr double kContractionSeconds = 120.0;
constexpr double kExact1dTol = 1e-12;
constexpr double kGaussianRelTol = 0.05;
constexpr double kTransportSeconds = 60.0;
constexpr double kSelectionSeconds = 5.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

ExperimentConfig config_file(const std::string& name) {
  return load_config(std::string(LNLAB_SOURCE_DIR) + "/configs/" + name);
}

void criterion1() {
  const auto t0 = Clock::now();
  const oracle::SuiteReport rep = oracle::run_suite(kOracleTrials, kOracleRelTol);
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(rep.comparisons) + " comparisons, worst relative error " +
                       fmt("%.3g", rep.worst_rel) + " (" + rep.worst_name + "), " + fmt("%.2f s", secs);
  if (!rep.failures.empty()) detail += "; first failure " + rep.failures.front();
  report(1, rep.failures.empty() && rep.comparisons > 0 && secs < kOracleSeconds, detail);
}

void criterion2() {
  const auto t0 = Clock::now();
  ExperimentConfig c;
  const SgldCompareOutcome o = run_sgld_compare(c);
  c.scaling_q = kLabelNoiseQ;
  const ScalingOutcome s = run_scaling(c);
  const double secs = seconds_since(t0);
  const bool ln_ok = std::abs(o.ln_rate.q_star - kLabelNoiseQ) <= kQTol;
  const bool sgld_ok = std::abs(o.sgld_rate.q_star - kSgldQ) <= kQTol;
  const bool slope_ok = std::abs(s.fit.slope - kLabelNoiseQ) <= kSlopeTol;
  report(2, ln_ok && sgld_ok && slope_ok && secs < kRateSeconds,
         "label-noise q* " + fmt("%.4f", o.ln_rate.q_star) + (ln_ok ? " ok" : " off") + ", SGLD q* " +
             fmt("%.4f", o.sgld_rate.q_star) + (sgld_ok ? " ok" : " off") + " (best slope " +
             fmt("%.4f", o.sgld_rate.slope) + "), slope at q = -2/3 " + fmt("%.4f", s.fit.slope) +
             (slope_ok ? " ok" : " off") + ", " + fmt("%.2f s", secs));
}

void criterion3() {
  const auto t0 = Clock::now();
  const SgldCompareOutcome o = run_sgld_compare(ExperimentConfig{});
  const double secs = seconds_since(t0);
  const bool ok = std::abs(o.ln_disc_eta_slope - 4.0) <= kEtaSlopeTol &&
                  std::abs(o.sgld_disc_eta_slope - 3.0) <= kEtaSlopeTol;
  report(3, ok && secs < kEtaSlopeSeconds,
         "label-noise eta-slope " + fmt("%.7f", o.ln_disc_eta_slope) + ", SGLD eta-slope " +
             fmt("%.7f", o.sgld_disc_eta_slope) + ", " + fmt("%.2f s", secs));
}

void criteria4and5() {
  const auto t0 = Clock::now();
  const ExperimentConfig c = config_file("simulate.conf");
  const SimulateOutcome o = run_simulate(c);
  const double secs = seconds_since(t0);
  const ExperimentResult r = simulate_result(c, o);
  const Verdict& moment = r.verdicts.at(0);
  report(4, moment.status == VerdictStatus::holds && o.checkpoints.size() == 20 && secs < kEnsembleSeconds,
         std::to_string(moment.satisfied) + "/" + std::to_string(moment.checked) + " checkpoints, N = " +
             std::to_string(c.replicas) + ", tightest " + fmt("%.4g", moment.worst_lhs) + " vs " +
             fmt("%.4g", moment.worst_rhs) + ", " + fmt("%.2f s", secs));

  std::size_t checked = 0, held = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < o.checkpoints.size(); ++i) {
    if (o.times[i] > kDivergenceHorizon) continue;
    ++checked;
    if (o.displacement[i] <= o.divergence_bound[i]) ++held;
    if (o.divergence_bound[i] > 0.0) worst = std::max(worst, o.displacement[i] / o.divergence_bound[i]);
  }
  report(5, checked > 0 && held == checked && secs < kEnsembleSeconds,
         std::to_string(held) + "/" + std::to_string(checked) + " checkpoints with t eta <= 2.5, largest ratio " +
             fmt("%.4g", worst) + ", " + fmt("%.2f s", secs));
}

void criterion6() {
  const auto t0 = Clock::now();
  const ExperimentConfig c = config_file("discretize.conf");
  const DiscretizeOutcome o = run_discretize(c);
  const double secs = seconds_since(t0);
  bool below = o.etas.size() == 4;
  std::string values;
  for (std::size_t i = 0; i < o.etas.size(); ++i) {
    below = below && o.cost[i] <= o.sqrt_bound[i];
    values += fmt(" %.3g", o.cost[i]) + "/" + fmt("%.3g", o.sqrt_bound[i]);
  }
  const bool slope_ok = o.slope >= kDiscSlopeLow && o.slope <= kDiscSlopeHigh;
  report(6, below && slope_ok && secs < kDiscSeconds,
         "W2/sqrt(bound):" + values + ", slope " + fmt("%.3f", o.slope) + ", " + fmt("%.2f s", secs));
}

void criterion7() {
  const auto t0 = Clock::now();
  const ExperimentConfig c = config_file("contraction.conf");
  const ContractionOutcome o = run_contraction(c);
  const double secs = seconds_since(t0);
  const double need = o.alpha_closed / 2.0 - 0.2 * o.alpha_closed;
  const bool ok = o.alpha_closed > 0.0 && o.monotone && std::isfinite(o.rate) && o.rate >= need;
  report(7, ok && secs < kContractionSeconds,
         "rate " + fmt("%.4f", o.rate) + " vs required " + fmt("%.4f", need) + " (alpha_closed " +
             fmt("%.4f", o.alpha_closed) + "), fit window " + std::to_string(o.window.size()) +
             " points, non-increasing " + (o.monotone ? "yes" : "no") + ", " + fmt("%.2f s", secs));
}

double brute_force_w2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) cost += (a.sample(i) - b.sample(perm[i])).squaredNorm();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(a.size()));
}

EmpiricalMeasure normal_cloud(Rng& rng, std::size_t n, Eigen::Index d, double scale) {
  Matrix m(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = scale * rng.normal_vector(d).transpose();
  return EmpiricalMeasure(m);
}

void criterion8() {
  const auto t0 = Clock::now();
  Rng rng(8);
  double worst_1d = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(64);
    const auto mu = normal_cloud(rng, n, 1, 1.0), nu = normal_cloud(rng, n, 1, 2.0);
    std::vector<double> a(mu.samples().data(), mu.samples().data() + n);
    std::vector<double> b(nu.samples().data(), nu.samples().data() + n);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    worst_1d = std::max(worst_1d, std::abs(w2_exact(mu, nu) - std::sqrt(s / static_cast<double>(n))));
  }
  double worst_bf = 0.0;
  for (std::size_t n = 1; n <= 7; ++n)
    for (int trial = 0; trial < 5; ++trial) {
      const auto mu = normal_cloud(rng, n, 2, 1.0), nu = normal_cloud(rng, n, 2, 1.5);
      worst_bf = std::max(worst_bf, std::abs(w2_exact(mu, nu) - brute_force_w2(mu, nu)));
    }
  const std::size_t n = 1024;
  Matrix a(n, 2), b(n, 2);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    a.row(i) = rng.normal_vector(2).transpose();
    const Vector z = rng.normal_vector(2);
    b(i, 0) = 3.0 + 2.0 * z[0];
    b(i, 1) = 0.5 * z[1];
  }
  const double want = std::sqrt(9.0 + 1.0 + 0.25);
  const double got = w2_exact(EmpiricalMeasure(a), EmpiricalMeasure(b));
  const double rel = std::abs(got - want) / want;
  const double secs = seconds_since(t0);
  report(8, worst_1d <= kExact1dTol && worst_bf <= kExact1dTol && rel <= kGaussianRelTol && secs < kTransportSeconds,
         "1-D max error " + fmt("%.2g", worst_1d) + ", brute-force max error " + fmt("%.2g", worst_bf) +
             ", Gaussian W2 " + fmt("%.4f", got) + " vs " + fmt("%.4f", want) + ", " + fmt("%.2f s", secs));
}

void criterion9() {
  ExperimentConfig c = config_file("stability.conf");
  c.stability_exclude_index = true;
  c.replicas = 64;
  c.chain.horizon = 100;
  c.checkpoint_count = 10;
  const StabilityOutcome o = run_stability(c);
  bool zero = !o.w_rho.empty();
  for (double w : o.w_rho) zero = zero && w == 0.0;
  bool no_gap = true;
  for (double g : o.loss_gap_sup) no_gap = no_gap && g == 0.0;

  const ProblemSpec spec = build_problem(c);
  ChainConfig chain = chain_of(c);
  CouplingExtras ex;
  ex.theta0 = Vector::Constant(spec.param_dim(), 0.7);
  ex.differing_index = c.stability_index;
  ex.replacement = DataPoint{Vector::Constant(spec.param_dim(), -0.3), 0.4};
  Rng sched(99);
  std::vector<Batch> schedule;
  for (std::size_t t = 0; t < chain.horizon; ++t)
    schedule.push_back(detail::batch_excluding(spec.data.size(), chain.batch, c.stability_index, sched));
  ex.forced_schedule = schedule;
  const CouplingRun run = run_coupled(spec, chain, CouplingMode::neighbor_stability, ex);
  bool bitwise = run.first.states.size() == run.second.states.size();
  for (std::size_t t = 0; bitwise && t < run.first.states.size(); ++t)
    bitwise = (run.first.states[t].array() == run.second.states[t].array()).all();
  report(9, o.identical && zero && no_gap && bitwise,
         std::string("ensemble pairs identical ") + (o.identical ? "yes" : "no") + ", W_rho_g all zero " +
             (zero ? "yes" : "no") + ", loss gap all zero " + (no_gap ? "yes" : "no") +
             ", single forced-schedule run identical " + (bitwise ? "yes" : "no"));
}

void criterion10() {
  const auto t0 = Clock::now();
  std::size_t cases = 0, literal_infeasible = 0, search_ok = 0;
  std::string first_bad;
  for (double alpha : {0.1, 0.5, 1.0, 2.0, 5.0})
    for (double ae : {0.01, 0.1, 0.25, 0.5, 0.75, 1.0})
      for (double slack : {1.0, 2.0})
        for (double K_scale : {0.0, 1.0}) {
          ContractionInputs in;
          in.alpha = alpha;
          in.eta = ae / alpha;
          in.eta_max = slack * in.eta;
          in.m = 1.0;
          in.b = K_scale * 0.5;
          in.delta = K_scale * 0.5;
          in.ctilde2 = K_scale * 0.2;
          ++cases;
          const SelectionResult lit = select_contraction_params(in, SelectionMode::paper_literal);
          if (!lit.feasible) ++literal_infeasible;
          else if (first_bad.empty()) first_bad = "paper_literal feasible at alpha eta = " + fmt("%.3g", ae);
          const SelectionResult srch = select_contraction_params(in, SelectionMode::search);
          const double c1 = srch.feasible ? c1_upper(srch.params.phi, srch.params.a, srch.params.epsilon, srch.K)
                                          : kNaN;
          if (srch.feasible && c1 < std::exp(alpha * in.eta) && srch.params.epsilon > 0.0 &&
              srch.params.epsilon < 1.0 && srch.params.a > 1.0)
            ++search_ok;
          else if (first_bad.empty())
            first_bad = "search failed at alpha = " + fmt("%.3g", alpha) + ", alpha eta = " + fmt("%.3g", ae);
        }
  const double secs = seconds_since(t0);
  report(10, literal_infeasible == cases && search_ok == cases && secs < kSelectionSeconds,
         "paper_literal infeasible " + std::to_string(literal_infeasible) + "/" + std::to_string(cases) +
             ", search verified " + std::to_string(search_ok) + "/" + std::to_string(cases) + ", " +
             fmt("%.2f s", secs) + (first_bad.empty() ? "" : "; " + first_bad));
}

template <class F>
void guarded(int id, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded(1, criterion1);
  guarded(2, criterion2);
  guarded(3, criterion3);
  guarded(4, criteria4and5);
  guarded(6, criterion6);
  guarded(7, criterion7);
  guarded(8, criterion8);
  guarded(9, criterion9);
  guarded(10, criterion10);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
