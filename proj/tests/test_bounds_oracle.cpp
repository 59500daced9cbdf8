#include <chrono>

#include <gtest/gtest.h>

#include "oracle/oracle_suite.hpp"

TEST(BoundsOracle, EveryOperationMatchesHighPrecision) {
  const auto start = std::chrono::steady_clock::now();
  const oracle::SuiteReport rep = oracle::run_suite(100, 1e-10);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& f : rep.failures) ADD_FAILURE() << f;
  EXPECT_GT(rep.comparisons, 100u * 40u);
  EXPECT_LE(rep.worst_rel, 1e-10) << rep.worst_name;
  EXPECT_LT(seconds, 10.0);
}

TEST(BoundsOracle, SuiteDetectsPerturbedFormula) {
  oracle::SuiteReport rep;
  oracle::compare(rep, "perturbed", 1.0 + 1e-8, oracle::Real(1), 1e-10);
  EXPECT_EQ(rep.failures.size(), 1u);
}
