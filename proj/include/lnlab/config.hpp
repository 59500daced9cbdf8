#pragma once

// Experiment configuration: a `key = value` text format with dotted keys,
// `#` comments and comma-separated lists. Every key has a default; unknown
// keys and malformed values are schema errors.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lnlab/common.hpp"

namespace lnlab {

/// A schema violation; what() joins the individual messages.
class ConfigError : public InputError {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : InputError(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string out = "invalid configuration:";
    for (const auto& e : errors) out += "\n  " + e;
    return out;
  }
  std::vector<std::string> errors_;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"audit",     "bounds",  "simulate",
                                                 "contraction", "discretize", "stability",
                                                 "scaling",   "sgld-compare", "rate"};
  return names;
}

struct ProblemConfig {
  std::string family = "saturating";
  double amplitude = 1.0;
  double ridge = 3.0;
  std::uint64_t n = 32;
  std::uint64_t p = 2;
  std::vector<double> teacher;  // empty: zero teacher
  double sigma_y = 0.1;
  double x_max = 1.0;
  double y_max = 1.0;
  std::uint64_t data_seed = 1;
  std::string dataset;  // optional CSV path replacing the generator
};

struct ChainSection {
  std::string algorithm = "label_noise_sgd";
  std::string flow_noise = "label_noise";
  double eta = 0.05;
  double delta = 0.5;
  double beta_inv = 0.0;
  std::uint64_t batch = 4;
  std::uint64_t horizon = 200;
  std::uint64_t substeps = 64;
};

struct InitSection {
  std::string kind = "gaussian";
  std::vector<double> center;  // empty: origin
  double scale = 1.0;
};

struct AuditSection {
  std::uint64_t pairs = 256;
  double radius = 10.0;
  std::uint64_t seed = 7;
};

struct BoundSection {
  double alpha = 1.0;
  double M = 0.1;
  double ell_f = 1.0;
  double delta = 1.0;
  double k = 4.0;
  double n = 1024.0;
  double d = 2.0;
  double sigma4 = 1.0;
  double R = 1.0;
  double eta = std::nan("");  // NaN: eta = n^eta_exponent
  double eta_exponent = -2.0 / 3.0;
  double t = 1e6;
  std::string mode = "discrete";
  std::string selection = "search";
  std::string moment_variant = "main_text";
};

struct TransportSection {
  double epsilon = 0.1;
  double R = 1.0;
  double phi = 1.0;
};

struct SgldSection {
  double beta_inv = 1.0;
  double C4 = 1.0;
  double C5 = 1.0;
  double C6 = 1.0;
};

struct ExperimentConfig {
  std::string experiment = "simulate";
  std::uint64_t seed = 1;
  std::string out = "results";
  std::uint64_t replicas = 1000;
  std::vector<double> checkpoints;  // step indices; empty: evenly spaced
  std::uint64_t checkpoint_count = 20;
  std::string constants = "audited";  // audited | closed_form

  ProblemConfig problem;
  ChainSection chain;
  InitSection init;
  AuditSection audit;
  BoundSection bound;
  TransportSection transport;
  SgldSection sgld;

  std::vector<double> contraction_theta0;  // empty: 2 e_1
  double contraction_floor_factor = 3.0;
  std::uint64_t contraction_bootstrap = 8;
  std::vector<double> discretize_etas = {0.02, 0.04, 0.08, 0.16};
  std::uint64_t stability_index = 0;
  bool stability_exclude_index = false;
  std::uint64_t stability_test_points = 200;
  std::uint64_t gap_test_size = 1000;
  std::string scaling_family = "label_noise_discrete";
  double scaling_q = -2.0 / 3.0;
  double scaling_n_min = 1e3;
  double scaling_n_max = 1e6;
  std::uint64_t scaling_n_count = 31;
  std::string rate_family = "label_noise_discrete";
  double rate_q_min = -1.5;
  double rate_q_max = 0.0;
  std::uint64_t rate_q_count = 301;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw InputError("expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw InputError("expected a number, got '" + v + "'");
  return x;
}

inline std::uint64_t parse_uint(const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    // allow exponent forms like 1e6 when they denote integers
    const double x = parse_double(v);
    if (!(x >= 0.0) || std::floor(x) != x || x > 1.8e19)
      throw InputError("expected a nonnegative integer, got '" + v + "'");
    return static_cast<std::uint64_t>(x);
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw InputError("integer out of range: '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw InputError("expected true or false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_double(trim(cell)));
  return out;
}

inline std::string format_list(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + format_double(xs[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename Ref>
Field double_field(std::string key, Ref ref) {
  return {std::move(key),
          [ref](const ExperimentConfig& c) { return format_double(ref(const_cast<ExperimentConfig&>(c))); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_double(v); }};
}

template <typename Ref>
Field uint_field(std::string key, Ref ref) {
  return {std::move(key),
          [ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_uint(v); }};
}

template <typename Ref>
Field string_field(std::string key, Ref ref) {
  return {std::move(key), [ref](const ExperimentConfig& c) { return ref(const_cast<ExperimentConfig&>(c)); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = v; }};
}

template <typename Ref>
Field list_field(std::string key, Ref ref) {
  return {std::move(key),
          [ref](const ExperimentConfig& c) { return format_list(ref(const_cast<ExperimentConfig&>(c))); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_list(v); }};
}

template <typename Ref>
Field bool_field(std::string key, Ref ref) {
  return {std::move(key),
          [ref](const ExperimentConfig& c) { return std::string(ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false"); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_bool(v); }};
}

#define LNLAB_REF(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }

inline const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      string_field("experiment", LNLAB_REF(experiment)),
      uint_field("seed", LNLAB_REF(seed)),
      string_field("out", LNLAB_REF(out)),
      uint_field("replicas", LNLAB_REF(replicas)),
      list_field("checkpoints", LNLAB_REF(checkpoints)),
      uint_field("checkpoint_count", LNLAB_REF(checkpoint_count)),
      string_field("constants", LNLAB_REF(constants)),

      string_field("problem.family", LNLAB_REF(problem.family)),
      double_field("problem.amplitude", LNLAB_REF(problem.amplitude)),
      double_field("problem.ridge", LNLAB_REF(problem.ridge)),
      uint_field("problem.n", LNLAB_REF(problem.n)),
      uint_field("problem.p", LNLAB_REF(problem.p)),
      list_field("problem.teacher", LNLAB_REF(problem.teacher)),
      double_field("problem.sigma_y", LNLAB_REF(problem.sigma_y)),
      double_field("problem.x_max", LNLAB_REF(problem.x_max)),
      double_field("problem.y_max", LNLAB_REF(problem.y_max)),
      uint_field("problem.data_seed", LNLAB_REF(problem.data_seed)),
      string_field("problem.dataset", LNLAB_REF(problem.dataset)),

      string_field("chain.algorithm", LNLAB_REF(chain.algorithm)),
      string_field("chain.flow_noise", LNLAB_REF(chain.flow_noise)),
      double_field("chain.eta", LNLAB_REF(chain.eta)),
      double_field("chain.delta", LNLAB_REF(chain.delta)),
      double_field("chain.beta_inv", LNLAB_REF(chain.beta_inv)),
      uint_field("chain.batch", LNLAB_REF(chain.batch)),
      uint_field("chain.horizon", LNLAB_REF(chain.horizon)),
      uint_field("chain.substeps", LNLAB_REF(chain.substeps)),

      string_field("init.kind", LNLAB_REF(init.kind)),
      list_field("init.center", LNLAB_REF(init.center)),
      double_field("init.scale", LNLAB_REF(init.scale)),

      uint_field("audit.pairs", LNLAB_REF(audit.pairs)),
      double_field("audit.radius", LNLAB_REF(audit.radius)),
      uint_field("audit.seed", LNLAB_REF(audit.seed)),

      double_field("bound.alpha", LNLAB_REF(bound.alpha)),
      double_field("bound.M", LNLAB_REF(bound.M)),
      double_field("bound.ell_f", LNLAB_REF(bound.ell_f)),
      double_field("bound.delta", LNLAB_REF(bound.delta)),
      double_field("bound.k", LNLAB_REF(bound.k)),
      double_field("bound.n", LNLAB_REF(bound.n)),
      double_field("bound.d", LNLAB_REF(bound.d)),
      double_field("bound.sigma4", LNLAB_REF(bound.sigma4)),
      double_field("bound.R", LNLAB_REF(bound.R)),
      double_field("bound.eta", LNLAB_REF(bound.eta)),
      double_field("bound.eta_exponent", LNLAB_REF(bound.eta_exponent)),
      double_field("bound.t", LNLAB_REF(bound.t)),
      string_field("bound.mode", LNLAB_REF(bound.mode)),
      string_field("bound.selection", LNLAB_REF(bound.selection)),
      string_field("bound.moment_variant", LNLAB_REF(bound.moment_variant)),

      double_field("transport.epsilon", LNLAB_REF(transport.epsilon)),
      double_field("transport.R", LNLAB_REF(transport.R)),
      double_field("transport.phi", LNLAB_REF(transport.phi)),

      double_field("sgld.beta_inv", LNLAB_REF(sgld.beta_inv)),
      double_field("sgld.C4", LNLAB_REF(sgld.C4)),
      double_field("sgld.C5", LNLAB_REF(sgld.C5)),
      double_field("sgld.C6", LNLAB_REF(sgld.C6)),

      list_field("contraction.theta0", LNLAB_REF(contraction_theta0)),
      double_field("contraction.floor_factor", LNLAB_REF(contraction_floor_factor)),
      uint_field("contraction.bootstrap", LNLAB_REF(contraction_bootstrap)),
      list_field("discretize.etas", LNLAB_REF(discretize_etas)),
      uint_field("stability.index", LNLAB_REF(stability_index)),
      bool_field("stability.exclude_index", LNLAB_REF(stability_exclude_index)),
      uint_field("stability.test_points", LNLAB_REF(stability_test_points)),
      uint_field("gap.test_size", LNLAB_REF(gap_test_size)),
      string_field("scaling.family", LNLAB_REF(scaling_family)),
      double_field("scaling.q", LNLAB_REF(scaling_q)),
      double_field("scaling.n_min", LNLAB_REF(scaling_n_min)),
      double_field("scaling.n_max", LNLAB_REF(scaling_n_max)),
      uint_field("scaling.n_count", LNLAB_REF(scaling_n_count)),
      string_field("rate.family", LNLAB_REF(rate_family)),
      double_field("rate.q_min", LNLAB_REF(rate_q_min)),
      double_field("rate.q_max", LNLAB_REF(rate_q_max)),
      uint_field("rate.q_count", LNLAB_REF(rate_q_count)),
  };
  return fields;
}

#undef LNLAB_REF

inline bool one_of(const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (v == o) return true;
  return false;
}

}  // namespace detail

/// Cross-field checks; returns messages naming the offending keys.
inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> e;
  using detail::one_of;
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end())
    e.push_back("experiment: unknown experiment '" + c.experiment + "'");
  if (!one_of(c.constants, {"audited", "closed_form"}))
    e.push_back("constants: must be audited or closed_form");
  if (!one_of(c.problem.family, {"linear", "saturating"}))
    e.push_back("problem.family: must be linear or saturating");
  if (c.problem.n < 1) e.push_back("problem.n: must be >= 1");
  if (c.problem.p < 1) e.push_back("problem.p: must be >= 1");
  if (!(c.problem.x_max > 0.0)) e.push_back("problem.x_max: must be > 0");
  if (!(c.problem.y_max >= 0.0)) e.push_back("problem.y_max: must be >= 0");
  if (!(c.problem.ridge >= 0.0)) e.push_back("problem.ridge: must be >= 0");
  if (!(c.problem.amplitude >= 0.0)) e.push_back("problem.amplitude: must be >= 0");
  if (!c.problem.teacher.empty() && c.problem.teacher.size() != c.problem.p)
    e.push_back("problem.teacher: length must equal problem.p");
  if (!one_of(c.chain.algorithm, {"label_noise_sgd", "sgld", "flow"}))
    e.push_back("chain.algorithm: must be label_noise_sgd, sgld or flow");
  if (!one_of(c.chain.flow_noise, {"label_noise", "sgld"}))
    e.push_back("chain.flow_noise: must be label_noise or sgld");
  if (!(c.chain.eta > 0.0)) e.push_back("chain.eta: must be > 0");
  if (!(c.chain.delta >= 0.0)) e.push_back("chain.delta: must be >= 0");
  if (!(c.chain.beta_inv >= 0.0)) e.push_back("chain.beta_inv: must be >= 0");
  if (c.chain.batch < 1) e.push_back("chain.batch: must be >= 1");
  if (c.problem.dataset.empty() && c.chain.batch > c.problem.n)
    e.push_back("chain.batch: batch size k = " + std::to_string(c.chain.batch) +
                " exceeds dataset size n = " + std::to_string(c.problem.n) + " (need k <= n)");
  if (c.chain.substeps < 1) e.push_back("chain.substeps: must be >= 1");
  if (!one_of(c.init.kind, {"gaussian", "point"})) e.push_back("init.kind: must be gaussian or point");
  if (!c.init.center.empty() && c.init.center.size() != c.problem.p)
    e.push_back("init.center: length must equal problem.p");
  if (!(c.init.scale >= 0.0)) e.push_back("init.scale: must be >= 0");
  if (c.audit.pairs < 2) e.push_back("audit.pairs: must be >= 2");
  if (!(c.audit.radius > 0.0)) e.push_back("audit.radius: must be > 0");
  if (!(c.bound.k >= 1.0)) e.push_back("bound.k: must be >= 1");
  if (!(c.bound.n > c.bound.k)) e.push_back("bound.n: must exceed bound.k (n > k)");
  if (!(c.bound.R > 0.0)) e.push_back("bound.R: must be > 0");
  if (!(c.bound.t >= 0.0)) e.push_back("bound.t: must be >= 0");
  if (!std::isnan(c.bound.eta) && !(c.bound.eta > 0.0)) e.push_back("bound.eta: must be > 0");
  if (!one_of(c.bound.mode, {"continuous", "discrete"})) e.push_back("bound.mode: must be continuous or discrete");
  if (!one_of(c.bound.selection, {"search", "paper_literal"}))
    e.push_back("bound.selection: must be search or paper_literal");
  if (!one_of(c.bound.moment_variant, {"main_text", "appendix"}))
    e.push_back("bound.moment_variant: must be main_text or appendix");
  if (!(c.transport.epsilon >= 0.0 && c.transport.epsilon < 1.0))
    e.push_back("transport.epsilon: must lie in [0, 1)");
  if (!(c.transport.R > 0.0)) e.push_back("transport.R: must be > 0");
  if (!(c.transport.phi > 0.0 && c.transport.phi <= 1.0)) e.push_back("transport.phi: must lie in (0, 1]");
  if (!(c.sgld.beta_inv >= 0.0)) e.push_back("sgld.beta_inv: must be >= 0");
  if (!c.contraction_theta0.empty() && c.contraction_theta0.size() != c.problem.p)
    e.push_back("contraction.theta0: length must equal problem.p");
  for (double eta : c.discretize_etas)
    if (!(eta > 0.0)) e.push_back("discretize.etas: every step size must be > 0");
  if (c.problem.dataset.empty() && c.stability_index >= c.problem.n)
    e.push_back("stability.index: must be < problem.n");
  if (c.gap_test_size < 1) e.push_back("gap.test_size: must be >= 1");
  const std::vector<std::string> families = {"label_noise_discrete", "label_noise_continuous",
                                             "sgld_discrete", "sgld_continuous"};
  if (std::find(families.begin(), families.end(), c.scaling_family) == families.end())
    e.push_back("scaling.family: unknown bound family '" + c.scaling_family + "'");
  if (std::find(families.begin(), families.end(), c.rate_family) == families.end())
    e.push_back("rate.family: unknown bound family '" + c.rate_family + "'");
  if (!(c.scaling_n_min > 0.0 && c.scaling_n_max > c.scaling_n_min))
    e.push_back("scaling.n_min/n_max: need 0 < n_min < n_max");
  if (c.scaling_n_count < 2) e.push_back("scaling.n_count: must be >= 2");
  if (!(c.rate_q_max >= c.rate_q_min)) e.push_back("rate.q_max: must be >= rate.q_min");
  if (c.rate_q_count < 2) e.push_back("rate.q_count: must be >= 2");
  const bool ensemble = one_of(c.experiment, {"simulate", "contraction", "stability"});
  if (ensemble && c.replicas < 2) e.push_back("replicas: ensembles need at least 2 replicas");
  for (double cp : c.checkpoints)
    if (!(cp >= 0.0) || std::floor(cp) != cp || cp > static_cast<double>(c.chain.horizon))
      e.push_back("checkpoints: entries must be integers in [0, chain.horizon]");
  return e;
}

/// Applies `key = value` lines on top of the defaults.
inline ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  ExperimentConfig c;
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + ": expected 'key = value'");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto& fields = detail::schema();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const detail::Field& f) { return f.key == key; });
    if (it == fields.end()) {
      errors.push_back(where + ": unknown key '" + key + "'");
      continue;
    }
    try {
      it->set(c, value);
    } catch (const InputError& err) {
      errors.push_back(where + ": " + key + ": " + err.what());
    }
  }
  for (auto& e : validate_config(c)) errors.push_back(std::move(e));
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str(), path);
}

/// Every key with its current value; parse_config(to_text(c)) reproduces c.
inline std::string config_to_text(const ExperimentConfig& c) {
  std::string out;
  for (const auto& f : detail::schema()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

inline void write_config(const std::string& path, const ExperimentConfig& c) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write config '" + path + "'");
  os << config_to_text(c);
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace lnlab
