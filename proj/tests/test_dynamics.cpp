#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "lnlab/dynamics.hpp"

using namespace lnlab;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

/// Linear 1-D family, one point (x, y).
ProblemSpec line(double x, double y, double ridge = 0.0) {
  ProblemSpec s;
  s.model = {ModelFamily::linear, 1.0};
  s.ridge = ridge;
  s.data.points.push_back({scalar(x), y});
  return s;
}

ProblemSpec builtin(double ridge = 3.0) {
  GeneratorParams g;
  ProblemSpec s;
  s.ridge = ridge;
  s.data = make_synthetic_dataset(g);
  return s;
}

ChainConfig chain(double eta, double delta, std::size_t k, std::size_t horizon) {
  ChainConfig c;
  c.eta = eta;
  c.delta = delta;
  c.batch = k;
  c.horizon = horizon;
  return c;
}

bool same(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i].array() == b[i].array()).all()) return false;
  return true;
}

}  // namespace

TEST(Minibatch, FullAndUniform) {
  Rng rng(5);
  EXPECT_EQ(sample_minibatch(5, 5, rng), (Batch{0, 1, 2, 3, 4}));
  std::vector<double> freq(4, 0.0);
  for (int i = 0; i < 40000; ++i) freq[sample_minibatch(4, 1, rng)[0]] += 1.0 / 40000.0;
  for (double f : freq) EXPECT_NEAR(f, 0.25, 0.01);
  EXPECT_THROW(sample_minibatch(3, 4, rng), InputError);
}

TEST(LabelNoiseStep, HandValues) {
  const ProblemSpec s = line(1.0, 0.0);
  const Batch b{0};
  EXPECT_NEAR(step_label_noise_sgd(s, scalar(1.0), b, scalar(0.0), 0.1)[0], 0.9, 1e-15);
  EXPECT_NEAR(step_label_noise_sgd(s, scalar(1.0), b, scalar(0.5), 0.1)[0], 0.95, 1e-15);
  const ProblemSpec flat = line(1.0, 1.0);
  EXPECT_EQ(step_label_noise_sgd(flat, scalar(1.0), b, scalar(0.0), 0.1)[0], 1.0);
}

TEST(LabelNoiseStep, EqualsGradientWithPerturbedLabels) {
  const ProblemSpec s = builtin();
  Rng rng(9);
  const Batch b = sample_minibatch(s.data.size(), 4, rng);
  const Vector xi = rng.normal_vector(4), th = rng.normal_vector(2);
  const std::vector<double> noisy(xi.data(), xi.data() + 4);
  const Vector direct = th - 0.05 * minibatch_grad(s, th, b, std::span<const double>(noisy));
  EXPECT_TRUE(step_label_noise_sgd(s, th, b, xi, 0.05).isApprox(direct, 1e-14));
}

TEST(SgldStep, HandValues) {
  const ProblemSpec s = line(1.0, 0.0);
  const Batch b{0};
  EXPECT_NEAR(step_sgld(s, scalar(1.0), b, scalar(0.0), 0.1, 0.0)[0], 0.9, 1e-15);
  EXPECT_NEAR(step_sgld(s, scalar(1.0), b, scalar(1.0), 0.1, 0.5)[0], 0.9 + std::sqrt(0.1), 1e-15);
  EXPECT_NEAR(step_sgld(s, scalar(1.0), b, scalar(1.0), 0.1, 0.5)[0], 1.21623, 1e-5);
  const ProblemSpec flat = line(1.0, 1.0);
  EXPECT_EQ(step_sgld(flat, scalar(1.0), b, scalar(0.0), 0.1, 1.0)[0], 1.0);
}

TEST(Chain, ZeroHorizon) {
  const auto t = run_discrete_chain(builtin(), chain(0.05, 0.5, 4, 0), Vector::Ones(2));
  ASSERT_EQ(t.states.size(), 1u);
  EXPECT_TRUE(t.states[0].isApprox(Vector::Ones(2)));
}

TEST(Chain, RidgeOnlyRecursion) {
  ProblemSpec s = builtin(1.0);
  s.model.amplitude = 0.0;
  const auto t = run_discrete_chain(s, chain(0.1, 0.0, 4, 2), Vector::Ones(2));
  EXPECT_NEAR(t.states[2][0], 0.81, 1e-15);
  EXPECT_NEAR(t.states[2][1], 0.81, 1e-15);
}

TEST(Chain, DeterministicAndReplayable) {
  const ProblemSpec s = builtin();
  const ChainConfig c = chain(0.05, 0.5, 4, 50);
  const auto a = run_discrete_chain(s, c, gaussian_init(Vector::Zero(2), 1.0));
  const auto b = run_discrete_chain(s, c, gaussian_init(Vector::Zero(2), 1.0));
  EXPECT_TRUE(same(a.states, b.states));
  EXPECT_TRUE(same(replay(s, c, a.states[0], a.batches, a.noise_log), a.states));
  ChainConfig other = c;
  other.seed = 2;
  EXPECT_FALSE(same(run_discrete_chain(s, other, a.states[0]).states, a.states));
}

TEST(Chain, RejectsOversizedBatch) {
  EXPECT_THROW(run_discrete_chain(builtin(), chain(0.05, 0.5, 33, 1), Vector::Zero(2)), InputError);
}

TEST(Chain, WarnsAboveEtaMax) {
  ChainConfig c = chain(0.05, 0.5, 4, 1);
  c.eta_max = 0.01;
  EXPECT_EQ(run_discrete_chain(builtin(), c, Vector::Zero(2)).warnings.size(), 1u);
}

TEST(Chain, SingleSubstepFlowEqualsDiscreteChain) {
  const ProblemSpec s = builtin();
  ChainConfig c = chain(0.05, 0.5, 4, 30);
  const auto discrete = run_discrete_chain(s, c, Vector::Ones(2));
  c.algorithm = Algorithm::flow;
  c.substeps = 1;
  const auto flow = run_discrete_chain(s, c, Vector::Ones(2));
  EXPECT_TRUE(same(discrete.states, flow.states));
}

TEST(Flow, RidgeOnlyDecay) {
  ProblemSpec s = builtin(1.0);
  s.model.amplitude = 0.0;
  ChainConfig c = chain(1.0, 0.0, 4, 1);
  c.substeps = 1024;
  const auto t = integrate_flow(s, c, Vector::Ones(2), {Batch{0, 1, 2, 3}});
  EXPECT_NEAR(t.states[1][0], std::exp(-1.0), 1.0 / 1024.0);
  c.horizon = 0;
  EXPECT_TRUE(integrate_flow(s, c, Vector::Ones(2), {}).states.back().isApprox(Vector::Ones(2)));
}

TEST(Coupling, NeighborWithScheduleAvoidingIndexIsIdentical) {
  const ProblemSpec s = builtin();
  const ChainConfig c = chain(0.05, 0.5, 4, 40);
  Rng rng(4);
  CouplingExtras ex;
  ex.theta0 = Vector::Ones(2);
  ex.differing_index = 0;
  ex.replacement = DataPoint{Vector::Constant(2, 0.5), 0.9};
  std::vector<Batch> schedule;
  for (int t = 0; t < 40; ++t) {
    Batch b = rng.subset(31, 4);
    for (auto& i : b) ++i;
    schedule.push_back(b);
  }
  ex.forced_schedule = schedule;
  const auto run = run_coupled(s, c, CouplingMode::neighbor_stability, ex);
  EXPECT_TRUE(same(run.first.states, run.second.states));
}

TEST(Coupling, NeighborFullBatchDiffersAtFirstStep) {
  const ProblemSpec s = builtin();
  const ChainConfig c = chain(0.05, 0.5, 32, 3);
  CouplingExtras ex;
  ex.theta0 = Vector::Ones(2);
  ex.differing_index = 5;
  ex.replacement = DataPoint{Vector::Constant(2, -0.5), -0.9};
  const auto run = run_coupled(s, c, CouplingMode::neighbor_stability, ex);
  EXPECT_FALSE((run.first.states[1].array() == run.second.states[1].array()).all());
}

TEST(Coupling, SynchronousWithoutNoiseIsDeterministicEulerError) {
  const ProblemSpec s = builtin();
  ChainConfig c = chain(0.1, 0.0, 4, 1);
  c.substeps = 64;
  CouplingExtras ex;
  ex.theta0 = Vector::Constant(2, 1.5);
  const auto run = run_coupled(s, c, CouplingMode::synchronous_discretization, ex);
  const Batch& b = run.first.batches[0];
  const Vector euler = ex.theta0 - 0.1 * minibatch_grad(s, ex.theta0, b);
  Vector fine = ex.theta0;
  for (int j = 0; j < 64; ++j) fine -= (0.1 / 64.0) * minibatch_grad(s, fine, b);
  EXPECT_TRUE(run.first.states[1].isApprox(euler, 1e-14));
  EXPECT_TRUE(run.second.states[1].isApprox(fine, 1e-14));
  EXPECT_GT((euler - fine).norm(), 0.0);
}

TEST(Ensemble, ForcedEqualSeedsGiveIdenticalReplicas) {
  const ProblemSpec s = builtin();
  const auto e = simulate_ensemble(s, chain(0.05, 0.5, 4, 20), 2, {0, 20}, gaussian_init(Vector::Zero(2), 1.0),
                                   [](std::uint64_t, std::uint64_t) { return 77u; });
  const Matrix& m = e.at(20).samples();
  EXPECT_TRUE((m.row(0).array() == m.row(1).array()).all());
}

TEST(Ensemble, CheckpointZeroIsInitialLaw) {
  const ProblemSpec s = builtin();
  const ChainConfig c = chain(0.05, 0.5, 4, 5);
  const auto init = gaussian_init(Vector::Constant(2, 3.0), 0.5);
  const auto e = simulate_ensemble(s, c, 8, {0, 5}, init);
  for (std::size_t r = 0; r < 8; ++r) {
    ChainConfig local = c;
    local.seed = split_seed(c.seed, r);
    const auto traj = run_discrete_chain(s, local, init);
    EXPECT_TRUE((e.at(0).sample(r).array() == traj.states[0].array()).all());
    EXPECT_TRUE((e.at(5).sample(r).array() == traj.states[5].array()).all());
  }
}

TEST(Ensemble, StationaryVarianceOfLinearChain) {
  // theta' = (1 - eta c) theta + eta x sqrt(delta) z with c = ridge + x^2.
  const double x = 1.0, ridge = 1.0, eta = 0.1, delta = 1.0;
  const ProblemSpec s = line(x, 0.0, ridge);
  const auto e = simulate_ensemble(s, chain(eta, delta, 1, 200), 4000, {200}, point_init(scalar(0.0)));
  const double c = ridge + x * x;
  const double want = eta * x * x * delta / (c * (2.0 - eta * c));
  const Matrix& m = e.at(200).samples();
  const double mean = m.mean();
  const double var = (m.array() - mean).square().sum() / static_cast<double>(m.rows() - 1);
  EXPECT_NEAR(var, want, 0.07 * want);
}

TEST(Export, TrajectoryCsvHeader) {
  const auto t = run_discrete_chain(builtin(), chain(0.05, 0.5, 4, 2), Vector::Zero(2));
  const auto path = (std::filesystem::temp_directory_path() / "lnlab_traj.csv").string();
  write_trajectory_csv(path, t);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "t,theta_0,theta_1");
}
