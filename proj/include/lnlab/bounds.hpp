#pragma once

// Closed-form constants and bound formulas for label-noise SGD and its flow,
// the SGLD counterparts, contraction-parameter selection and the decay-rate
// optimizer.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lnlab/common.hpp"
#include "lnlab/fit.hpp"

namespace lnlab {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double eta_max_of(double m, double M) {
  require(m > 0.0, "eta_max needs m > 0");
  require(M > 0.0, "eta_max needs M > 0");
  return std::min(1.0 / m, m / (2.0 * M * M));
}

struct DissipativityPair {
  bool feasible = false;
  double m = kNaN;
  double b = kNaN;
  std::string reason;
};

/// (m, b) implied by alpha-uniform dissipativity:
/// m = alpha/4, b = (4/(alpha^2 - 4M^2) + 1) (eta_max/(2k)) delta ell_f^2.
inline DissipativityPair diss_from_uniform(double alpha, double M, double eta_max, double delta,
                                           double ell_f, double k) {
  DissipativityPair out;
  if (!(alpha > 2.0 * M)) {
    out.reason = "alpha <= 2M: alpha^2 - 4M^2 is not positive";
    return out;
  }
  require(k > 0.0, "batch size must be positive");
  out.feasible = true;
  out.m = alpha / 4.0;
  out.b = (4.0 / (alpha * alpha - 4.0 * M * M) + 1.0) * (eta_max / (2.0 * k)) * delta * ell_f * ell_f;
  return out;
}

struct ConverseReport {
  bool applicable = false;  // m^3 < M^2 b
  bool nonempty = false;
  double discriminant = kNaN;
  double lower = kNaN;
  double upper = kNaN;
  std::string message;
};

/// Converse direction: interval of admissible B for which (m, b)-dissipativity
/// yields uniform dissipativity. Roots of M B^2 + (M sqrt(b/m) - m) B +
/// (b + eta delta ell_f^2 / k) = 0.
inline ConverseReport uniform_from_diss_feasible(double m, double b, double M, double eta,
                                                 double delta, double ell_f, double k) {
  ConverseReport out;
  if (!(m > 0.0) || !(M > 0.0) || !(k > 0.0)) {
    out.message = "converse inapplicable: needs m > 0, M > 0, k > 0";
    return out;
  }
  if (!(m * m * m < M * M * b)) {
    out.message = "converse inapplicable: m^3 >= M^2 b";
    return out;
  }
  out.applicable = true;
  const double h = M * std::sqrt(b / m) - m;
  const double c = b + eta * delta * ell_f * ell_f / k;
  out.discriminant = h * h - 4.0 * M * c;
  if (out.discriminant < 0.0) {
    out.message = "empty interval: discriminant " + format_double(out.discriminant) + " < 0";
    return out;
  }
  out.nonempty = true;
  const double root = std::sqrt(out.discriminant);
  const double r1 = h >= 0.0 ? (-h - root) / (2.0 * M) : (-h + root) / (2.0 * M);
  const double r2 = r1 != 0.0 ? c / (M * r1) : -h / M;
  out.lower = std::min(r1, r2);
  out.upper = std::max(r1, r2);
  out.message = "B in [" + format_double(out.lower) + ", " + format_double(out.upper) + "]";
  return out;
}

/// Which denominator the moment bound's noise term carries.
enum class MomentVariant { main_text /* k */, appendix /* k^2 */ };

/// mu_p + [2b/m + (delta eta/(k m)) (p + d - 2) ell_f^2]^{p/2}.
inline double moment_bound_rhs(double mu_p, double p, double b, double m, double delta, double eta,
                               double k, double d, double ell_f,
                               MomentVariant variant = MomentVariant::main_text) {
  require(m > 0.0, "moment bound needs m > 0");
  require(k > 0.0, "moment bound needs k > 0");
  const double kk = variant == MomentVariant::main_text ? k : k * k;
  const double inner = 2.0 * b / m + delta * eta / (kk * m) * (p + d - 2.0) * ell_f * ell_f;
  return mu_p + std::pow(inner, p / 2.0);
}

/// Moment-estimate constant c~(p).
inline double moment_estimate_ctilde(double p, double eta_max, double b, double m, double delta,
                                     double ell_f) {
  require(p >= 1.0, "moment estimate needs p >= 1");
  require(m > 0.0, "moment estimate needs m > 0");
  const double h = eta_max + 2.0 / m;
  const double q = p * (2.0 * p - 1.0);
  const double l2 = ell_f * ell_f;
  return eta_max * (std::pow(3.0 * b, p) * std::pow(h, p - 1.0) +
                    q * delta * l2 * std::pow(h, p - 2.0) * std::pow(3.0 * b, p - 1.0) * eta_max *
                        eta_max +
                    std::pow(q, p + 1.0) * std::pow(delta, p) * std::pow(l2, p) *
                        std::pow(eta_max, 2.0 * p - 1.0));
}

/// The same constant at p = 2 in its expanded form.
inline double moment_estimate_ctilde2_expanded(double eta_max, double b, double m, double delta,
                                               double ell_f) {
  require(m > 0.0, "moment estimate needs m > 0");
  const double l2 = ell_f * ell_f;
  return eta_max * (18.0 * b * b / m + 9.0 * b * b * eta_max + 18.0 * b * delta * l2 * eta_max * eta_max +
                    216.0 * delta * delta * l2 * l2 * eta_max * eta_max * eta_max);
}

/// 4M^2 (mu2 + 3b/m + delta eta d ell_f^2/(k m)) t + 2 delta eta ell_f^2 t / k.
inline double divergence_bound_rhs(double mu2, double t, double M, double b, double m,
                                   double delta, double eta, double k, double d, double ell_f) {
  require(t >= 0.0, "divergence bound needs t >= 0");
  require(m > 0.0 && k > 0.0, "divergence bound needs m > 0 and k > 0");
  const double l2 = ell_f * ell_f;
  return 4.0 * M * M * (mu2 + 3.0 * b / m + delta * eta * d * l2 / (k * m)) * t +
         2.0 * delta * eta * l2 * t / k;
}

/// Bound on W2^2 between one discrete step and the flow over one interval:
/// 8 eta^4 exp(4 eta^2 M^2) [(2/3) M^4 (mu2 + b/m) + (M^2 + 2) delta ell_f^2/(2k)].
inline double discretization_bound_rhs(double mu2, double eta, double M, double b, double m,
                                       double delta, double k, double ell_f) {
  require(m > 0.0 && k > 0.0, "discretization bound needs m > 0 and k > 0");
  const double M2 = M * M;
  return 8.0 * std::pow(eta, 4.0) * std::exp(4.0 * eta * eta * M2) *
         ((2.0 / 3.0) * M2 * M2 * (mu2 + b / m) + (M2 + 2.0) * delta * ell_f * ell_f / (2.0 * k));
}

// ---------------------------------------------------------------------------
// Contraction parameters

enum class SelectionMode { paper_literal, search };

inline std::string to_string(SelectionMode m) {
  return m == SelectionMode::paper_literal ? "paper_literal" : "search";
}

inline SelectionMode parse_selection_mode(const std::string& s) {
  if (s == "paper_literal" || s == "paper-literal") return SelectionMode::paper_literal;
  if (s == "search") return SelectionMode::search;
  throw InputError("unknown selection mode '" + s + "'");
}

struct SelectionParams {
  double s = 0.0;
  double phi = 1.0;
  double a = 2.0;
  double epsilon = 0.01;
  double zeta = 0.25;  // (a-1)/a^2 by default
  SelectionMode mode = SelectionMode::search;

  static SelectionParams from(double s, double a, double epsilon,
                              SelectionMode mode = SelectionMode::search) {
    return {s, 1.0 - s, a, epsilon, (a - 1.0) / (a * a), mode};
  }
};

struct ContractionInputs {
  double alpha = 1.0;
  double eta = 0.1;
  double eta_max = 0.1;
  double sigma4 = 1.0;
  double ctilde2 = 0.0;
  double b = 0.0;
  double m = 1.0;
  double delta = 0.0;
  double k = 1.0;
  double d = 1.0;
  double ell_f = 1.0;
};

/// K = 2 + 2 sigma4^{1/2} + 2 c~(2)^{1/2} + 4b/m + 2 delta eta_max (d+2) ell_f^2/(k m).
inline double contraction_K(const ContractionInputs& in) {
  require(in.m > 0.0 && in.k > 0.0, "contraction constant needs m > 0 and k > 0");
  return 2.0 + 2.0 * std::sqrt(in.sigma4) + 2.0 * std::sqrt(in.ctilde2) + 4.0 * in.b / in.m +
         2.0 * in.delta * in.eta_max * (in.d + 2.0) * in.ell_f * in.ell_f / (in.k * in.m);
}

/// Upper bound on C1: (1 + epsilon K) / (phi (1 - 1/a)).
inline double c1_upper(double phi, double a, double epsilon, double K) {
  if (!(phi > 0.0) || !(a > 1.0)) return std::numeric_limits<double>::infinity();
  return (1.0 + epsilon * K) / (phi * (1.0 - 1.0 / a));
}

struct SelectionResult {
  SelectionParams params;
  double K = kNaN;
  double C1 = kNaN;
  double target = kNaN;  // C1 target the selection aims at
  bool feasible = false;
  bool a_gt_1 = false;
  bool epsilon_in_range = false;
  bool c1_below_exp_alpha_eta = false;
  double s_window_low = kNaN;   // epsilon > 0 needs s > this
  double s_window_high = kNaN;  // a > 1 needs s < this
  double literal_s_low = kNaN;  // exp(alpha eta_max / 2) - 1
  std::vector<std::string> notes;
};

/// paper_literal: s = max(paper's lower end, 0), phi = 1 - s,
/// a = (1 - e^{-alpha eta/2}/(phi (1 - s)))^{-1},
/// epsilon = ((1 + s) e^{-alpha eta/4} - 1)/K; feasibility is a > 1 and
/// epsilon in (0, 1) jointly.
/// search: over s in [0, 0.9] and a on a geometric grid in (1, 1e8], take the
/// largest epsilon in (0, 1) with C1 upper bound <= e^{alpha eta/2} (hence
/// < e^{alpha eta}); ties go to the smaller C1.
inline SelectionResult select_contraction_params(const ContractionInputs& in, SelectionMode mode) {
  require(in.alpha > 0.0, "contraction selection needs alpha > 0");
  require(in.eta > 0.0, "contraction selection needs eta > 0");
  SelectionResult out;
  out.K = contraction_K(in);
  const double u = in.alpha * in.eta / 4.0;
  out.s_window_low = std::expm1(u);
  out.s_window_high = -std::expm1(-u);
  out.literal_s_low = std::expm1(in.alpha * in.eta_max / 2.0);
  const double ceiling = std::exp(in.alpha * in.eta);

  if (mode == SelectionMode::paper_literal) {
    out.target = std::exp(u);
    const double s = std::max(0.0, out.literal_s_low);
    const double phi = 1.0 - s;
    const double a_inv = 1.0 - std::exp(-2.0 * u) / (phi * (1.0 - s));
    const double a = a_inv != 0.0 ? 1.0 / a_inv : std::numeric_limits<double>::infinity();
    const double eps = ((1.0 + s) * std::exp(-u) - 1.0) / out.K;
    out.params = {s, phi, a, eps, a > 1.0 ? (a - 1.0) / (a * a) : kNaN, mode};
    out.a_gt_1 = std::isfinite(a) && a > 1.0 && phi > 0.0;
    out.epsilon_in_range = eps > 0.0 && eps < 1.0;
    out.feasible = out.a_gt_1 && out.epsilon_in_range;
    out.C1 = out.feasible ? c1_upper(phi, a, eps, out.K) : kNaN;
    out.c1_below_exp_alpha_eta = out.feasible && out.C1 < ceiling;
    if (!(out.literal_s_low < 1.0))
      out.notes.push_back("literal s-range empty: exp(alpha eta_max/2) - 1 >= 1");
    if (!(out.s_window_low < out.s_window_high))
      out.notes.push_back("no s satisfies both epsilon > 0 (s > " +
                          format_double(out.s_window_low) + ") and a > 1 (s < " +
                          format_double(out.s_window_high) + ")");
    if (!(phi > 0.0)) out.notes.push_back("phi = 1 - s = " + format_double(phi) + " is not > 0");
    else if (!out.a_gt_1) out.notes.push_back("a = " + format_double(a) + " is not > 1");
    if (!out.epsilon_in_range) out.notes.push_back("epsilon = " + format_double(eps) + " is not in (0, 1)");
    return out;
  }

  out.target = std::exp(2.0 * u);
  constexpr int kSGrid = 91;
  constexpr int kAGrid = 400;
  constexpr double kEpsCap = 1.0 - 1e-9;
  double best_eps = -1.0, best_c1 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kSGrid; ++i) {
    const double s = 0.01 * i;
    const double phi = 1.0 - s;
    for (int j = 1; j <= kAGrid; ++j) {
      const double a = 1.0 + std::pow(10.0, -6.0 + 14.0 * j / kAGrid);
      const double room = out.target * phi * (1.0 - 1.0 / a) - 1.0;
      if (!(room > 0.0)) continue;
      const double eps = std::min(room / out.K, kEpsCap);
      const double c1 = c1_upper(phi, a, eps, out.K);
      if (!(c1 <= out.target)) continue;
      if (eps > best_eps * (1.0 + 1e-12) || (eps >= best_eps * (1.0 - 1e-12) && c1 < best_c1)) {
        best_eps = eps;
        best_c1 = c1;
        out.params = SelectionParams::from(s, a, eps, mode);
      }
    }
  }
  if (best_eps > 0.0) {
    out.feasible = true;
    out.a_gt_1 = true;
    out.epsilon_in_range = true;
    out.C1 = c1_upper(out.params.phi, out.params.a, out.params.epsilon, out.K);
    out.c1_below_exp_alpha_eta = out.C1 < ceiling;
  } else {
    out.notes.push_back("no grid point reaches C1 <= exp(alpha eta / 2) with epsilon > 0");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generalization bounds

struct BoundInputs {
  double alpha = 1.0;
  double M = 0.1;
  double ell_f = 1.0;
  double delta = 1.0;
  double eta = 0.01;
  double eta_max = kNaN;  // derived when NaN
  double k = 4.0;
  double n = 1024.0;
  double d = 2.0;
  double m = kNaN;  // derived when NaN
  double b = kNaN;  // derived when NaN
  double sigma4 = 1.0;
  double beta_inv = 0.0;
  double t = 0.0;  // step index
};

struct Check {
  std::string name;
  bool ok = true;
  std::string condition;
};

/// Named constants, bound value and feasibility checks.
struct BoundReport {
  std::string mode;
  std::vector<std::pair<std::string, double>> constants;
  double value = kNaN;
  bool feasible = true;
  std::vector<Check> checks;
  std::vector<std::string> notes;

  void set(const std::string& name, double v) {
    for (auto& [k, x] : constants)
      if (k == name) {
        x = v;
        return;
      }
    constants.emplace_back(name, v);
  }

  double get(const std::string& name) const {
    for (const auto& [k, x] : constants)
      if (k == name) return x;
    throw InputError("bound report has no constant '" + name + "'");
  }

  void check(const std::string& name, bool ok, const std::string& condition) {
    checks.push_back({name, ok, condition});
    if (!ok) feasible = false;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = mode;
    j["feasible"] = feasible;
    j["value"] = std::isfinite(value) ? nlohmann::json(value) : nlohmann::json(format_double(value));
    nlohmann::json c = nlohmann::json::object();
    for (const auto& [k, x] : constants)
      c[k] = std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(format_double(x));
    j["constants"] = c;
    nlohmann::json ch = nlohmann::json::array();
    for (const auto& x : checks) ch.push_back({{"name", x.name}, {"ok", x.ok}, {"condition", x.condition}});
    j["checks"] = ch;
    j["notes"] = notes;
    return j;
  }

  std::string to_text() const {
    std::size_t width = 5;
    for (const auto& [k, x] : constants) width = std::max(width, k.size());
    std::ostringstream os;
    auto line = [&](const std::string& k, const std::string& v) {
      os << "  " << k << std::string(width - k.size() + 2, ' ') << v << '\n';
    };
    os << "bound (" << mode << ")\n";
    line("value", format_double(value));
    line("feasible", feasible ? "yes" : "no");
    for (const auto& [k, x] : constants) line(k, format_double(x));
    for (const auto& c : checks)
      os << "  [" << (c.ok ? "ok" : "FAILED") << "] " << c.name << ": " << c.condition << '\n';
    for (const auto& n : notes) os << "  note: " << n << '\n';
    return os.str();
  }
};

/// Fills eta_max, m and b when they are NaN: m = alpha/4,
/// eta_max = min(1/m, m/(2M^2)), b from diss_from_uniform. Returns the
/// infeasibility reason when the pair cannot be derived.
inline std::optional<std::string> resolve_inputs(BoundInputs& in) {
  if (std::isnan(in.m)) in.m = in.alpha / 4.0;
  if (std::isnan(in.eta_max)) {
    if (!(in.m > 0.0) || !(in.M > 0.0)) return "eta_max needs m > 0 and M > 0";
    in.eta_max = eta_max_of(in.m, in.M);
  }
  if (std::isnan(in.b)) {
    const DissipativityPair p = diss_from_uniform(in.alpha, in.M, in.eta_max, in.delta, in.ell_f, in.k);
    if (!p.feasible) return p.reason;
    in.b = p.b;
  }
  return std::nullopt;
}

enum class GenMode { continuous, discrete };

inline std::string to_string(GenMode m) { return m == GenMode::continuous ? "continuous" : "discrete"; }

inline GenMode parse_gen_mode(const std::string& s) {
  if (s == "continuous") return GenMode::continuous;
  if (s == "discrete") return GenMode::discrete;
  throw InputError("unknown bound mode '" + s + "'");
}

/// The c~1..c~8 ledger, eps~, C1, C2, C3 and the generalization bound at step
/// t (t may be infinite). Time is eta * t; c~5 uses the per-step factor
/// C1 e^{-alpha eta}.
inline BoundReport gen_bound(GenMode mode, BoundInputs in, const SelectionParams& sel, double R,
                             double t) {
  require(in.n > in.k, "generalization bound needs n > k");
  require(in.k >= 1.0, "generalization bound needs k >= 1");
  require(t >= 0.0, "generalization bound needs t >= 0");
  require(R > 0.0, "semimetric radius R must be positive");
  BoundReport rep;
  rep.mode = to_string(mode);
  if (auto why = resolve_inputs(in)) {
    rep.check("dissipativity pair", false, *why);
    return rep;
  }
  if (in.eta > in.eta_max)
    rep.notes.push_back("eta = " + format_double(in.eta) + " exceeds eta_max = " + format_double(in.eta_max));
  rep.check("m > 0", in.m > 0.0, "m = " + format_double(in.m));
  rep.check("alpha > 0", in.alpha > 0.0, "alpha = " + format_double(in.alpha));
  rep.check("phi > 0", sel.phi > 0.0, "phi = " + format_double(sel.phi));
  rep.check("epsilon in (0,1)", sel.epsilon > 0.0 && sel.epsilon < 1.0,
            "epsilon = " + format_double(sel.epsilon));
  rep.check("a > 1", sel.a > 1.0, "a = " + format_double(sel.a));
  if (!rep.feasible) return rep;

  const double m = in.m, b = in.b, M = in.M, d = in.d, k = in.k, n = in.n, eta = in.eta;
  const double l2 = in.ell_f * in.ell_f, delta = in.delta, eps = sel.epsilon;
  const double ct2 = moment_estimate_ctilde(2.0, in.eta_max, b, m, delta, in.ell_f);
  const double s4 = std::sqrt(in.sigma4), sc = std::sqrt(ct2);
  const double K = contraction_K({in.alpha, eta, in.eta_max, in.sigma4, ct2, b, m, delta, k, d, in.ell_f});
  const double C1 = c1_upper(sel.phi, sel.a, eps, K);
  const double eps_tilde = std::expm1(in.alpha * in.eta_max / 4.0) / K;
  rep.check("eps~ > 0", eps_tilde > 0.0, "eps~ = " + format_double(eps_tilde));
  if (!rep.feasible) return rep;

  const double lf_part = std::sqrt((2.0 * d * M * M / m + 1.0) * l2 * delta);
  const double mom_part = std::sqrt(4.0 * M * M * (s4 + sc + 3.0 * b / m));
  const double pre12 = 6.0 * eps * delta * (d + 2.0) * l2 / m;
  const double post34 = 1.0 + 2.0 * eps + 6.0 * eps * (s4 + sc + 2.0 * b / m);
  const double c1 = pre12 * lf_part;
  const double c2 = pre12 * mom_part;
  const double c3 = lf_part * post34;
  const double c4 = mom_part * post34;
  const double c5 = k / n + (1.0 - k / n) * C1 * std::exp(-in.alpha * eta);
  const double c6 = 1.0 + (2.0 * R / sel.phi) * std::max(eps * R, 1.0);
  const double post78 = 1.0 + 2.0 * eps * (1.0 + s4 + sc);
  const double c7 = 2.0 * std::sqrt(2.0) * M *
                    std::sqrt((2.0 / 3.0) * M * M * s4 + (2.0 / 3.0) * M * M * sc + 2.0 * b * M * M / (3.0 * m)) *
                    post78;
  const double c8 = 2.0 * std::sqrt(delta) * (M + std::sqrt(2.0)) * in.ell_f * post78;
  const double prefactor = M * (b / m + 1.0) / (sel.phi * eps_tilde * std::max(R, 1.0));
  const double max14 = std::max({c1, c2, c3, c4});
  const double C2 = prefactor * max14;
  const double C3 = prefactor * std::max({max14, 2.0 * c6 * c7, 2.0 * c6 * c8}) *
                    std::max(1.0, 2.0 * c6 * std::exp(2.0 * in.eta_max * in.eta_max * M * M));

  const double saturated = n * (eta + 2.0 / in.alpha) / (n - k);
  const double minf = std::isinf(t) ? saturated : std::min(eta * t, saturated);
  const double rk = std::sqrt(k), re = std::sqrt(eta);
  const double per_n = (eta / rk + re + rk + k / re) / n;
  rep.value = mode == GenMode::continuous ? C2 * minf * per_n : C3 * minf * (per_n + eta + eta / rk);

  rep.set("eta_max", in.eta_max);
  rep.set("m", m);
  rep.set("b", b);
  rep.set("c~(2)", ct2);
  rep.set("K", K);
  rep.set("epsilon", eps);
  rep.set("phi", sel.phi);
  rep.set("a", sel.a);
  rep.set("zeta", sel.zeta);
  rep.set("C1", C1);
  rep.set("eps~", eps_tilde);
  rep.set("c~1", c1);
  rep.set("c~2", c2);
  rep.set("c~3", c3);
  rep.set("c~4", c4);
  rep.set("c~5", c5);
  rep.set("c~6", c6);
  rep.set("c~7", c7);
  rep.set("c~8", c8);
  rep.set("C2", C2);
  rep.set("C3", C3);
  rep.set("min_factor", minf);
  rep.set("saturation", saturated);
  return rep;
}

/// Induction bound on W_rho_g between neighbor chains after t steps:
/// (1 - c~5^t)/(1 - c~5) (1/n)[c~1 eta^2/sqrt k + c~2 eta^{3/2} + c~3 eta sqrt k + c~4 eta^{1/2} k].
inline double stability_induction_bound(const BoundReport& rep, const BoundInputs& in, double t) {
  const double c5 = rep.get("c~5");
  const double k = in.k, eta = in.eta;
  const double per_step = (rep.get("c~1") * eta * eta / std::sqrt(k) + rep.get("c~2") * std::pow(eta, 1.5) +
                           rep.get("c~3") * eta * std::sqrt(k) + rep.get("c~4") * std::sqrt(eta) * k) /
                          in.n;
  if (c5 == 1.0) return t * per_step;
  const double tl = t * std::log(c5);
  // For large growth c5^t - 1 = c5^t to double precision; stay in logs so only
  // the result itself can overflow.
  if (tl > 40.0 && per_step > 0.0) return std::exp(tl - std::log(c5 - 1.0) + std::log(per_step));
  return -std::expm1(tl) / (1.0 - c5) * per_step;
}

// ---------------------------------------------------------------------------
// SGLD counterparts

enum class SgldBound { moment, moment_estimate, divergence, discretization, gen_shape };

inline SgldBound parse_sgld_bound(const std::string& s) {
  if (s == "moment") return SgldBound::moment;
  if (s == "moment_estimate") return SgldBound::moment_estimate;
  if (s == "divergence") return SgldBound::divergence;
  if (s == "discretization") return SgldBound::discretization;
  if (s == "gen_shape") return SgldBound::gen_shape;
  throw InputError("unknown SGLD bound selector '" + s + "'");
}

struct SgldParams {
  double mu_p = 0.0;  // p-th moment of the initial law
  double p = 2.0;
  double mu2 = 0.0;
  double b = 0.0;
  double m = 1.0;
  double M = 0.0;
  double d = 1.0;
  double beta_inv = 0.0;
  double eta = 0.0;
  double t = 0.0;  // time (divergence) or step index (gen_shape)
  double n = 2.0;
  double k = 1.0;
  double C4 = 1.0;
  double C5 = 1.0;
  double C6 = 1.0;
  bool discrete = true;  // gen_shape variant
};

inline double sgld_bound_rhs(SgldBound which, const SgldParams& q) {
  require(q.beta_inv >= 0.0, "SGLD bounds need beta_inv >= 0");
  switch (which) {
    case SgldBound::moment:
      require(q.m > 0.0, "SGLD moment bound needs m > 0");
      return q.mu_p + std::pow(2.0 * q.b / q.m + 2.0 * (q.p + q.d - 2.0) * q.beta_inv / q.m, q.p / 2.0);
    case SgldBound::moment_estimate: {
      require(q.m > 0.0, "SGLD moment estimate needs m > 0");
      require(q.p >= 1.0, "SGLD moment estimate needs p >= 1");
      const double p = q.p, m = q.m;
      const double lead = (1.0 / m) * std::pow(6.0 / m, p - 1.0) *
                          (1.0 + std::pow(2.0, 2.0 * p) * p * (2.0 * p - 1.0) * q.d * q.beta_inv / m);
      return lead * (std::pow(2.0 * q.b + 8.0 * q.M * q.M * q.b / (m * m), p) + 1.0 +
                     2.0 * std::pow(q.d * q.beta_inv, p - 1.0) * std::pow(2.0 * p - 1.0, p));
    }
    case SgldBound::divergence:
      require(q.m > 0.0, "SGLD divergence bound needs m > 0");
      require(q.t >= 0.0, "SGLD divergence bound needs t >= 0");
      return 4.0 * q.M * q.M * (q.mu2 + (3.0 * q.b + 2.0 * q.d * q.beta_inv) / q.m) * q.t * q.t +
             4.0 * q.d * q.beta_inv * q.t;
    case SgldBound::discretization:
      require(q.m > 0.0, "SGLD discretization bound needs m > 0");
      return 8.0 * std::pow(q.eta, 3.0) * std::exp(2.0 * q.eta * q.eta * q.M * q.M) * q.M * q.M *
             (q.M * q.M * q.mu2 + q.M * q.M * q.b / q.m + q.beta_inv * q.d);
    case SgldBound::gen_shape: {
      require(q.n > q.k, "SGLD generalization shape needs n > k");
      require(q.eta > 0.0, "SGLD generalization shape needs eta > 0");
      const double saturated = (q.C4 + 1.0) * q.n / (q.n - q.k);
      const double minf = std::isinf(q.t) ? saturated : std::min(q.eta * q.t, saturated);
      const double base = q.k / (q.n * std::sqrt(q.eta));
      return q.discrete ? q.C6 * minf * (base + std::sqrt(q.eta)) : q.C5 * minf * base;
    }
  }
  throw InputError("unknown SGLD bound selector");
}

// ---------------------------------------------------------------------------
// Decay-rate optimizer

enum class BoundFamily { label_noise_discrete, label_noise_continuous, sgld_discrete, sgld_continuous };

inline std::string to_string(BoundFamily f) {
  switch (f) {
    case BoundFamily::label_noise_discrete: return "label_noise_discrete";
    case BoundFamily::label_noise_continuous: return "label_noise_continuous";
    case BoundFamily::sgld_discrete: return "sgld_discrete";
    case BoundFamily::sgld_continuous: return "sgld_continuous";
  }
  return "?";
}

inline BoundFamily parse_bound_family(const std::string& s) {
  if (s == "label_noise_discrete") return BoundFamily::label_noise_discrete;
  if (s == "label_noise_continuous") return BoundFamily::label_noise_continuous;
  if (s == "sgld_discrete") return BoundFamily::sgld_discrete;
  if (s == "sgld_continuous") return BoundFamily::sgld_continuous;
  throw InputError("unknown bound family '" + s + "'");
}

/// Fixed parameters of a rate study; n and eta vary.
struct DecayInputs {
  BoundInputs base;
  SelectionParams selection;
  double R = 1.0;
  SgldParams sgld;
};

/// Bound value at sample size n and step size eta with t -> infinity.
inline double saturated_bound(BoundFamily family, const DecayInputs& in, double n, double eta) {
  if (family == BoundFamily::label_noise_discrete || family == BoundFamily::label_noise_continuous) {
    BoundInputs b = in.base;
    b.n = n;
    b.eta = eta;
    const GenMode mode =
        family == BoundFamily::label_noise_discrete ? GenMode::discrete : GenMode::continuous;
    const BoundReport rep = gen_bound(mode, b, in.selection, in.R, std::numeric_limits<double>::infinity());
    if (!rep.feasible) throw InputError("bound infeasible at n = " + format_double(n));
    return rep.value;
  }
  SgldParams s = in.sgld;
  s.n = n;
  s.eta = eta;
  s.t = std::numeric_limits<double>::infinity();
  s.discrete = family == BoundFamily::sgld_discrete;
  return sgld_bound_rhs(SgldBound::gen_shape, s);
}

struct DecayResult {
  double q_star = kNaN;
  double slope = kNaN;
  std::vector<std::pair<double, double>> slopes;  // (q, fitted slope)
};

using BoundCurve = std::function<double(double n, double eta)>;

/// For each q, fits the log-log slope of bound(n, n^q) over n_grid and
/// returns the q with the most negative slope (first one on ties).
inline DecayResult optimize_decay_exponent(const BoundCurve& bound, const std::vector<double>& n_grid,
                                           const std::vector<double>& q_grid) {
  require(n_grid.size() >= 2, "decay optimizer needs at least two n values");
  require(!q_grid.empty(), "decay optimizer needs a nonempty q grid");
  DecayResult out;
  std::vector<double> ys(n_grid.size());
  for (double q : q_grid) {
    for (std::size_t i = 0; i < n_grid.size(); ++i) ys[i] = bound(n_grid[i], std::pow(n_grid[i], q));
    const double slope = fit_loglog_slope(n_grid, ys).slope;
    out.slopes.emplace_back(q, slope);
    if (std::isnan(out.slope) || slope < out.slope) {
      out.slope = slope;
      out.q_star = q;
    }
  }
  return out;
}

inline DecayResult optimize_decay_exponent(BoundFamily family, const DecayInputs& in,
                                           const std::vector<double>& n_grid,
                                           const std::vector<double>& q_grid) {
  return optimize_decay_exponent(
      [&](double n, double eta) { return saturated_bound(family, in, n, eta); },
      n_grid, q_grid);
}

/// Geometric grid of `count` points from lo to hi inclusive.
inline std::vector<double> geometric_grid(double lo, double hi, std::size_t count) {
  require(lo > 0.0 && hi > lo && count >= 2, "geometric grid needs 0 < lo < hi and count >= 2");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1));
  return g;
}

inline std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
  require(hi >= lo && count >= 2, "linear grid needs hi >= lo and count >= 2");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return g;
}

}  // namespace lnlab
