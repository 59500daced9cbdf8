#pragma once

// Experiment results: tabular rows, inequality verdicts, and their CSV and
// summary persistence.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lnlab/common.hpp"

namespace lnlab {

struct ResultRow {
  std::string experiment;
  std::string param_id;
  std::string metric;
  double value = 0.0;
  double stderr_ = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const ResultRow&) const = default;
};

enum class VerdictStatus { holds, violated, inconclusive };

inline std::string to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::holds: return "holds";
    case VerdictStatus::violated: return "violated";
    case VerdictStatus::inconclusive: return "inconclusive";
  }
  return "?";
}

/// One asserted inequality, aggregated over its checkpoints.
struct Verdict {
  std::string lemma;  // e.g. "moment bound"
  std::string subject;
  VerdictStatus status = VerdictStatus::inconclusive;
  std::size_t checked = 0;
  std::size_t satisfied = 0;
  std::size_t replicas = 0;
  double worst_lhs = 0.0;  // both sides at the tightest checkpoint
  double worst_rhs = 0.0;
  std::string detail;
};

/// Minimum replicas and pass fraction for a "holds" verdict.
inline constexpr std::size_t kVerdictMinReplicas = 1000;
inline constexpr double kVerdictPassFraction = 0.99;

/// Builds a verdict from per-checkpoint (empirical, bound) pairs.
inline Verdict judge(const std::string& lemma, const std::string& subject,
                     const std::vector<std::pair<double, double>>& sides, std::size_t replicas,
                     const std::string& inconclusive_reason = "") {
  Verdict v;
  v.lemma = lemma;
  v.subject = subject;
  v.replicas = replicas;
  v.checked = sides.size();
  double worst_ratio = -1.0;
  bool any_nan = false;
  for (const auto& [lhs, rhs] : sides) {
    if (std::isnan(lhs) || std::isnan(rhs)) {
      any_nan = true;
      continue;
    }
    if (lhs <= rhs) ++v.satisfied;
    const double ratio = rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? INFINITY : 0.0);
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      v.worst_lhs = lhs;
      v.worst_rhs = rhs;
    }
  }
  if (!inconclusive_reason.empty()) {
    v.status = VerdictStatus::inconclusive;
    v.detail = inconclusive_reason;
  } else if (any_nan || sides.empty()) {
    v.status = VerdictStatus::inconclusive;
    v.detail = sides.empty() ? "no checkpoints" : "bound not evaluable at some checkpoints";
  } else if (replicas < kVerdictMinReplicas) {
    v.status = VerdictStatus::inconclusive;
    v.detail = "N = " + std::to_string(replicas) + " < " + std::to_string(kVerdictMinReplicas) + " replicas";
  } else {
    const double frac = static_cast<double>(v.satisfied) / static_cast<double>(v.checked);
    v.status = frac >= kVerdictPassFraction ? VerdictStatus::holds : VerdictStatus::violated;
  }
  return v;
}

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<Verdict> verdicts;
  std::vector<std::string> notes;
  std::map<std::string, std::string> artifacts;  // extra files: name -> content

  void add(const std::string& experiment, const std::string& param_id, const std::string& metric,
           double value, double stderr_, std::uint64_t seed) {
    rows.push_back({experiment, param_id, metric, value, stderr_, seed});
  }
};

inline std::string verdict_line(const Verdict& v) {
  std::string s = "[" + to_string(v.status) + "] " + v.lemma + ": " + v.subject + "; ";
  if (v.replicas == 0) {
    s += "lhs " + format_double(v.worst_lhs) + " vs rhs " + format_double(v.worst_rhs);
  } else {
    s += std::to_string(v.satisfied) + "/" + std::to_string(v.checked) + " checkpoints satisfied, N = " +
         std::to_string(v.replicas) + "; tightest empirical " + format_double(v.worst_lhs) + " vs bound " +
         format_double(v.worst_rhs);
  }
  if (!v.detail.empty()) s += "; " + v.detail;
  return s;
}

inline std::string summary_text(const ExperimentResult& r) {
  std::map<VerdictStatus, std::size_t> tally;
  for (const auto& v : r.verdicts) ++tally[v.status];
  std::ostringstream os;
  os << "rows: " << r.rows.size() << '\n';
  os << "verdicts: " << r.verdicts.size() << " (holds " << tally[VerdictStatus::holds] << ", violated "
     << tally[VerdictStatus::violated] << ", inconclusive " << tally[VerdictStatus::inconclusive] << ")\n";
  for (const auto& v : r.verdicts) os << verdict_line(v) << '\n';
  for (const auto& n : r.notes) os << "note: " << n << '\n';
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << content;
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "experiment,param_id,metric,value,stderr,seed\n";
  for (const auto& r : rows)
    os << r.experiment << ',' << r.param_id << ',' << r.metric << ',' << format_double(r.value) << ','
       << format_double(r.stderr_) << ',' << r.seed << '\n';
  return os.str();
}

/// Writes results.csv, summary.txt and any artifacts into dir (created if
/// missing). Overwrites existing files.
inline void write_results(const ExperimentResult& r, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  const std::filesystem::path base(dir);
  write_text_file(base / "results.csv", results_csv(r.rows));
  write_text_file(base / "summary.txt", summary_text(r));
  for (const auto& [name, content] : r.artifacts) write_text_file(base / name, content);
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read results '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw InputError("results file '" + path + "' is empty");
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw InputError("results '" + path + "': malformed row '" + line + "'");
    rows.push_back({cells[0], cells[1], cells[2], std::stod(cells[3]), std::stod(cells[4]),
                    std::stoull(cells[5])});
  }
  return rows;
}

}  // namespace lnlab
