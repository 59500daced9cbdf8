#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lnlab/common.hpp"

namespace lnlab {

/// N parameter samples in R^d with uniform weights 1/N. Row i is sample i.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;

  explicit EmpiricalMeasure(Matrix samples) : samples_(std::move(samples)) {
    require(samples_.rows() >= 1, "empirical measure needs at least one sample");
  }

  explicit EmpiricalMeasure(const std::vector<Vector>& samples) {
    require(!samples.empty(), "empirical measure needs at least one sample");
    const Eigen::Index d = samples.front().size();
    samples_.resize(static_cast<Eigen::Index>(samples.size()), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      require(samples[i].size() == d, "all samples must share one dimension");
      samples_.row(static_cast<Eigen::Index>(i)) = samples[i].transpose();
    }
  }

  static EmpiricalMeasure point_mass(const Vector& v) {
    return EmpiricalMeasure(std::vector<Vector>{v});
  }

  std::size_t size() const { return static_cast<std::size_t>(samples_.rows()); }
  Eigen::Index dim() const { return samples_.cols(); }
  Vector sample(std::size_t i) const {
    return samples_.row(static_cast<Eigen::Index>(i)).transpose();
  }
  const Matrix& samples() const { return samples_; }

 private:
  Matrix samples_;
};

/// CSV sample table, header theta_0,...,theta_{d-1}.
inline void write_measure_csv(const std::string& path, const EmpiricalMeasure& mu) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write measure '" + path + "'");
  for (Eigen::Index j = 0; j < mu.dim(); ++j) os << (j ? "," : "") << "theta_" << j;
  os << '\n';
  for (Eigen::Index i = 0; i < mu.samples().rows(); ++i) {
    for (Eigen::Index j = 0; j < mu.dim(); ++j)
      os << (j ? "," : "") << format_double(mu.samples()(i, j));
    os << '\n';
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline EmpiricalMeasure read_measure_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read measure '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw InputError("measure '" + path + "' is empty");
  std::vector<Vector> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    rows.push_back(Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return EmpiricalMeasure(rows);
}

}  // namespace lnlab
