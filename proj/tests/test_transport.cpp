#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "lnlab/transport.hpp"

using namespace lnlab;

namespace {

EmpiricalMeasure cloud_1d(std::initializer_list<double> xs) {
  std::vector<Vector> v;
  for (double x : xs) v.push_back(Vector::Constant(1, x));
  return EmpiricalMeasure(v);
}

EmpiricalMeasure random_cloud(Rng& rng, std::size_t n, Eigen::Index d, double scale = 1.0) {
  Matrix m(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = scale * rng.normal_vector(d).transpose();
  return EmpiricalMeasure(m);
}

double brute_force_w2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += (a.sample(i) - b.sample(perm[i])).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(a.size()));
}

}  // namespace

TEST(RhoG, HandValues) {
  EXPECT_DOUBLE_EQ(rho_g(Vector::Zero(1), Vector::Constant(1, 2.0), {0.0, 1.0, 1.0}), 1.0);
  EXPECT_NEAR(rho_g(Vector::Zero(1), Vector::Constant(1, 1.0), {0.1, 2.0, 1.0}), 1.3, 1e-15);
  EXPECT_THROW(rho_g(Vector::Zero(1), Vector::Zero(2), {}), InputError);
  EXPECT_THROW(rho_g(Vector::Zero(1), Vector::Zero(1), {1.0, 1.0, 1.0}), InputError);
}

TEST(RhoG, SymmetricPositiveMonotone) {
  Rng rng(2);
  const SemimetricParams p{0.2, 1.5, 1.0};
  for (int i = 0; i < 200; ++i) {
    const Vector x = rng.normal_vector(3), y = rng.normal_vector(3);
    EXPECT_EQ(rho_g(x, y, p), rho_g(y, x, p));
    EXPECT_GT(rho_g(x, y, p), 0.0);
    EXPECT_EQ(rho_g(x, x, p), 0.0);
    // Moving y away from x along a sphere of fixed radius raises the distance.
    const double r = y.norm();
    const Vector u = -x.normalized() * r;
    const Vector mid = (y + u).normalized() * r;
    if ((mid - x).norm() >= (y - x).norm()) {
      EXPECT_GE(rho_g(x, mid, p), rho_g(x, y, p) * (1.0 - 1e-12));
    }
  }
}

TEST(Assignment, SmallKnownMatching) {
  const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto a = solve_assignment(cost, 3);
  EXPECT_DOUBLE_EQ(a.total_cost, 5.0);
  EXPECT_EQ(a.column_of_row, (std::vector<std::size_t>{1, 0, 2}));
}

TEST(W2Exact, HandValues) {
  const auto mu = cloud_1d({0.0, 2.0}), nu = cloud_1d({1.0, 3.0});
  EXPECT_DOUBLE_EQ(w2_exact(mu, nu), 1.0);
  EXPECT_EQ(w2_exact(mu, mu), 0.0);
  const Vector a = Vector::Constant(2, 1.0), b = Vector::Constant(2, -2.0);
  EXPECT_NEAR(w2_exact(EmpiricalMeasure::point_mass(a), EmpiricalMeasure::point_mass(b)), (a - b).norm(), 1e-15);
  EXPECT_THROW(w2_exact(mu, cloud_1d({1.0})), InputError);
}

TEST(W2Exact, SortedCouplingIn1D) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(64);
    const auto mu = random_cloud(rng, n, 1), nu = random_cloud(rng, n, 1, 2.0);
    std::vector<double> a(mu.samples().data(), mu.samples().data() + n);
    std::vector<double> b(nu.samples().data(), nu.samples().data() + n);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    EXPECT_NEAR(w2_exact(mu, nu), std::sqrt(s / static_cast<double>(n)), 1e-12);
  }
}

TEST(W2Exact, BruteForceSmallInstances) {
  Rng rng(13);
  for (std::size_t n = 1; n <= 7; ++n)
    for (int trial = 0; trial < 5; ++trial) {
      const auto mu = random_cloud(rng, n, 3), nu = random_cloud(rng, n, 3);
      EXPECT_NEAR(w2_exact(mu, nu), brute_force_w2(mu, nu), 1e-12);
    }
}

TEST(W2Exact, MetricAxioms) {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_cloud(rng, 40, 2), b = random_cloud(rng, 40, 2, 1.5), c = random_cloud(rng, 40, 2, 0.5);
    EXPECT_NEAR(w2_exact(a, b), w2_exact(b, a), 1e-12);
    EXPECT_LE(w2_exact(a, c), w2_exact(a, b) + w2_exact(b, c) + 1e-9);
  }
}

TEST(W2Exact, GaussianClosedForm) {
  Rng rng(15);
  const std::size_t n = 1024;
  Matrix a(n, 2), b(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    a.row(static_cast<Eigen::Index>(i)) = rng.normal_vector(2).transpose();
    const Vector z = rng.normal_vector(2);
    b(static_cast<Eigen::Index>(i), 0) = 3.0 + 2.0 * z[0];
    b(static_cast<Eigen::Index>(i), 1) = 0.5 * z[1];
  }
  // |dm|^2 + sum (sqrt(l1) - sqrt(l2))^2 for commuting covariances.
  const double want = std::sqrt(9.0 + 1.0 + 0.25);
  EXPECT_NEAR(w2_exact(EmpiricalMeasure(a), EmpiricalMeasure(b)), want, 0.05 * want);
}

TEST(WRhoG, HandValues) {
  const SemimetricParams p{0.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(w_rho_g_exact(cloud_1d({0.0, 2.0}), cloud_1d({1.0, 3.0}), p), 1.0);
  const auto mu = cloud_1d({0.3, -1.0});
  EXPECT_EQ(w_rho_g_exact(mu, mu, {}), 0.0);
  const Vector a = Vector::Constant(2, 0.2), b = Vector::Constant(2, -0.4);
  EXPECT_DOUBLE_EQ(w_rho_g_exact(EmpiricalMeasure::point_mass(a), EmpiricalMeasure::point_mass(b), {}),
                   rho_g(a, b, {}));
}

TEST(WRhoG, UpperComparisonWithW2) {
  Rng rng(16);
  const SemimetricParams p{0.3, 0.8, 1.0};
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = random_cloud(rng, 30, 2), nu = random_cloud(rng, 30, 2, 2.0);
    const double factor = 1.0 + 2.0 * p.epsilon + p.epsilon * std::sqrt(moment(mu, 4.0)) +
                          p.epsilon * std::sqrt(moment(nu, 4.0));
    EXPECT_LE(w_rho_g_exact(mu, nu, p), w2_exact(mu, nu) * factor * (1.0 + 1e-12));
  }
}

TEST(WRhoG, LowerComparisonOnTranslatedClouds) {
  // nu = mu + v with |v| <= R keeps every matched distance inside [0, R].
  Rng rng(17);
  const double a = 2.0, phi = 1.0, zeta = (a - 1.0) / (a * a);
  for (int trial = 0; trial < 20; ++trial) {
    const SemimetricParams p{0.1, 1.0, phi};
    const auto mu = random_cloud(rng, 25, 2);
    const Vector v = rng.uniform_in_ball(2, p.radius);
    const EmpiricalMeasure nu(Matrix(mu.samples().rowwise() + v.transpose()));
    EXPECT_LE(w2_exact(mu, nu), w_rho_g_exact(mu, nu, p) / (phi * a * zeta) * (1.0 + 1e-12));
  }
}

TEST(Sliced, IdentityAndExact1D) {
  Rng rng(18);
  const auto mu = random_cloud(rng, 50, 3);
  EXPECT_EQ(w2_sliced(mu, mu, 20, rng), 0.0);
  const auto a = random_cloud(rng, 50, 1), b = random_cloud(rng, 50, 1, 3.0);
  EXPECT_DOUBLE_EQ(w2_sliced(a, b, 1, rng), w2_exact(a, b));
  EXPECT_DOUBLE_EQ(w2_sliced(a, b, 17, rng), w2_exact(a, b));
  // Sliced W2 never exceeds W2.
  const auto c = random_cloud(rng, 50, 3, 2.0);
  EXPECT_LE(w2_sliced(mu, c, 50, rng), w2_exact(mu, c) + 1e-12);
  EXPECT_GT(w2_sliced(mu, random_cloud(rng, 70, 3, 2.0), 10, rng), 0.0);
}

TEST(Moment, PointMassAndGaussian) {
  const Vector v = Vector::Constant(2, 1.0);
  EXPECT_NEAR(moment(EmpiricalMeasure::point_mass(v), 3.0), std::pow(std::sqrt(2.0), 3.0), 1e-14);
  Rng rng(19);
  const auto z = random_cloud(rng, 100000, 2);
  EXPECT_NEAR(moment(z, 2.0), 2.0, 0.05);
  EXPECT_NEAR(moment(z, 4.0), 8.0, 0.3);
}

TEST(GenGap, FiniteTrainingPopulationIsZero) {
  GeneratorParams g;
  ProblemSpec s;
  s.ridge = 0.5;
  s.data = make_synthetic_dataset(g);
  Rng rng(20);
  const auto thetas = random_cloud(rng, 16, 2);
  const auto gap = generalization_gap(thetas, s, Population{s.data}, 1);
  EXPECT_NEAR(gap.gap, 0.0, 1e-14);
}

TEST(GenGap, TeacherWithCleanLabels) {
  GeneratorParams g;
  g.teacher_model = {ModelFamily::linear, 1.0};
  g.teacher = Vector::Constant(2, 0.3);
  g.sigma_y = 0.0;
  ProblemSpec s;
  s.model = g.teacher_model;
  s.ridge = 0.7;
  s.data = make_synthetic_dataset(g);
  const auto gap =
      generalization_gap(EmpiricalMeasure::point_mass(g.teacher), s, GeneratorPopulation{g, 500}, 3);
  EXPECT_NEAR(gap.gap, 0.0, 1e-14);
}

TEST(GenGap, AnalyticLinearPopulation) {
  // x ~ U(-1, 1), y = sigma z: L_P(theta) = (theta^2/3 + sigma^2)/2 + ridge theta^2/2.
  GeneratorParams g;
  g.n = 1;
  g.p = 1;
  g.teacher_model = {ModelFamily::linear, 1.0};
  g.sigma_y = 0.2;
  g.y_max = 100.0;
  ProblemSpec s;
  s.model = g.teacher_model;
  s.ridge = 0.1;
  s.data = make_synthetic_dataset(g);
  const double theta = 0.8;
  const auto gap = generalization_gap(EmpiricalMeasure::point_mass(Vector::Constant(1, theta)), s,
                                      GeneratorPopulation{g, 20000}, 4);
  const double lp = 0.5 * (theta * theta / 3.0 + g.sigma_y * g.sigma_y) + 0.5 * s.ridge * theta * theta;
  const double want = lp - empirical_risk(s, Vector::Constant(1, theta));
  EXPECT_GT(gap.stderr_, 0.0);
  EXPECT_NEAR(gap.gap, want, 2.0 * gap.stderr_);
}

TEST(Report, DistanceCsv) {
  const auto path = (std::filesystem::temp_directory_path() / "lnlab_dist.csv").string();
  write_distance_report(path, {{"w2", 1.5, 10, 2, {{"eps", "0.1"}, {"R", "1"}}}});
  std::ifstream is(path);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "metric,value,N,d,params");
  EXPECT_EQ(row, "w2,1.5,10,2,R=1;eps=0.1");
}
