#include "fbmkde/estimator.hpp"
#include "fbmkde/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace fbmkde;

namespace {

Trajectory constant_path(std::vector<double> x, std::size_t steps, double dt) {
  const std::size_t d = x.size();
  Trajectory t{UniformGrid(0.0, dt, steps), d, {}, {}};
  for (std::size_t k = 0; k <= steps; ++k) t.states.insert(t.states.end(), x.begin(), x.end());
  return t;
}

double normal_pdf(double x, double var) { return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var); }

Trajectory fou_run(double hurst, double horizon, std::size_t d, Seed seed) {
  return simulate_stationary(fou_drift(1.0, d), DiffusionMatrix(d), HurstParameter(hurst), horizon, 0.01, 50.0, seed);
}

} // namespace

TEST(Kde, ConstantTrajectoryGivesPeak) {
  const auto k = legendre_kernel(2);
  const auto traj = constant_path({0.3, -0.1}, 100, 0.01);
  const std::vector<double> x{0.3, -0.1};
  const double h = 0.2;
  EXPECT_NEAR(kde_at_point(traj, x, h, k), k.peak() * k.peak() / (h * h), 1e-12);
}

TEST(Kde, OutsideWindowIsZero) {
  const auto traj = constant_path({2.0}, 50, 0.1);
  const std::vector<double> x{0.0};
  EXPECT_EQ(kde_at_point(traj, x, 0.5, legendre_kernel(4)), 0.0);
}

TEST(Kde, EmptyTrajectoryThrows) {
  Trajectory empty{UniformGrid(0.0, 0.1, 1), 1, {}, {}};
  const std::vector<double> x{0.0};
  EXPECT_THROW(kde_at_point(empty, x, 0.5, legendre_kernel(0)), EmptyTrajectory);
}

TEST(Kde, QueryOverloadAndRangeFlag) {
  const auto traj = fou_run(0.5, 10.0, 1, 1);
  const KdeQuery q{{0.1}, 0.4, legendre_kernel(2)};
  EXPECT_EQ(kde_at_point(traj, q), kde_at_point(traj, q.x, q.h, q.kernel));
  EXPECT_FALSE(bandwidth_out_of_range(0.4));
  EXPECT_TRUE(bandwidth_out_of_range(1.0));
  EXPECT_TRUE(bandwidth_out_of_range(0.0));
}

TEST(Kde, BrownianOuMatchesConvolutionOracle) {
  const auto kernel = legendre_kernel(1);
  const double h = 0.3;
  const std::vector<double> x{0.0};
  const StationarySimulator sim(fou_drift(1.0, 1), DiffusionMatrix(1), HurstParameter(0.5), 500.0, 0.01, 50.0);
  constexpr std::size_t reps = 100;
  std::vector<double> est(reps);
  for (std::size_t r = 0; r < reps; ++r) est[r] = kde_at_point(sim.run(derive_seed(51, SeedDomain::experiment, {r})), x, h, kernel);
  const DensityFn target = [](std::span<const double> y) { return normal_pdf(y[0], 0.5); };
  const double expected = target(x) + bias_convolution_oracle(target, kernel, h, x);
  const auto mv = mean_variance(est);
  EXPECT_NEAR(mv.mean, expected, 3.0 * std::sqrt(mv.variance / reps));
}

TEST(KdeGrid, SingletonMatchesPointEvaluation) {
  const auto traj = fou_run(0.3, 20.0, 2, 2);
  const std::vector<double> x{0.2, -0.4};
  const auto k = legendre_kernel(2);
  EXPECT_EQ(kde_on_grid(traj, x, 0.5, k).at(0), kde_at_point(traj, x, 0.5, k));
}

TEST(KdeGrid, ConstantPathHitsOnlyMiddlePoint) {
  const auto k = legendre_kernel(2);
  const auto traj = constant_path({1.0}, 10, 0.1);
  const std::vector<double> grid{0.0, 1.0, 2.0};
  const auto v = kde_on_grid(traj, grid, 0.5, k);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_NEAR(v[1], k.peak() / 0.5, 1e-12);
  EXPECT_EQ(v[2], 0.0);
}

TEST(KdeGrid, RejectsRaggedGrid) {
  const auto traj = constant_path({0.0, 0.0}, 4, 0.1);
  const std::vector<double> grid{0.0, 1.0, 2.0};
  EXPECT_THROW(kde_on_grid(traj, grid, 0.5, legendre_kernel(0)), std::invalid_argument);
}

TEST(KdeGrid, IntegratesToOne) {
  const auto traj = fou_run(0.5, 200.0, 1, 3);
  constexpr double spacing = 0.01;
  std::vector<double> grid;
  for (double x = -5.0; x <= 5.0 + 1e-12; x += spacing) grid.push_back(x);
  const auto v = kde_on_grid(traj, grid, 0.2, legendre_kernel(2));
  double mass = 0.0;
  for (double p : v) mass += p * spacing;
  EXPECT_NEAR(mass, 1.0, 0.02);
}

TEST(BiasOracle, ConstantAndLinearTargets) {
  const std::vector<double> x{0.3, -0.2};
  const DensityFn flat = [](std::span<const double>) { return 0.7; };
  const DensityFn linear = [](std::span<const double> y) { return 0.5 + 0.2 * y[0] - 0.1 * y[1]; };
  for (std::size_t M : {1u, 2u, 4u}) {
    EXPECT_NEAR(bias_convolution_oracle(flat, legendre_kernel(M), 0.3, x), 0.0, 1e-12);
    EXPECT_NEAR(bias_convolution_oracle(linear, legendre_kernel(M), 0.3, x), 0.0, 1e-10);
  }
}

TEST(BiasOracle, NormalTargetSecondOrder) {
  const DensityFn target = [](std::span<const double> y) { return normal_pdf(y[0], 1.0); };
  const std::vector<double> x{0.0};
  std::vector<std::pair<double, double>> pts;
  for (double h : {0.4, 0.2, 0.1, 0.05}) pts.emplace_back(h, std::abs(bias_convolution_oracle(target, legendre_kernel(1), h, x)));
  const double slope = fit_loglog_slope(pts).slope;
  EXPECT_GE(slope, 1.8);
  EXPECT_LE(slope, 2.2);
}

class BiasOrder : public ::testing::TestWithParam<std::size_t> {};

TEST_P(BiasOrder, SlopeAtLeastOrderPlusOne) {
  const std::size_t M = GetParam();
  const DensityFn target = [](std::span<const double> y) { return normal_pdf(y[0] - 0.3, 1.0); };
  const std::vector<double> x{0.0};
  std::vector<std::pair<double, double>> pts;
  for (double h : {0.4, 0.2, 0.1, 0.05}) pts.emplace_back(h, std::abs(bias_convolution_oracle(target, legendre_kernel(M), h, x)));
  EXPECT_GE(fit_loglog_slope(pts).slope, static_cast<double>(M) + 1.0 - 0.2);
}

INSTANTIATE_TEST_SUITE_P(OddOrders, BiasOrder, ::testing::Values(1u, 3u));

// the product kernel is multilinear, so linearity holds coordinate-wise; test d = 1
TEST(Kde, LinearInKernel) {
  const auto traj = fou_run(0.7, 30.0, 1, 4);
  const std::vector<double> x{0.1};
  const auto k1 = legendre_kernel(2), k2 = legendre_kernel(6);
  for (double a : {0.0, 0.3, 0.75, 1.0}) {
    const double mixed = kde_at_point(traj, x, 0.6, Kernel1D::mix(a, k1, k2));
    const double split = a * kde_at_point(traj, x, 0.6, k1) + (1.0 - a) * kde_at_point(traj, x, 0.6, k2);
    EXPECT_NEAR(mixed, split, 1e-12 * std::max(1.0, std::abs(split))) << "a=" << a;
  }
}

TEST(Kde, TranslationEquivariantBitwise) {
  auto traj = fou_run(0.4, 30.0, 2, 5);
  // quantise to a 2^-20 lattice so adding a dyadic shift is exact
  for (auto& v : traj.states) v = std::ldexp(std::round(std::ldexp(v, 20)), -20);
  const std::vector<double> shift{0.5, -2.0};
  auto moved = traj;
  for (std::size_t k = 0; k < moved.size(); ++k)
    for (std::size_t i = 0; i < 2; ++i) moved.states[k * 2 + i] += shift[i];
  const auto kernel = legendre_kernel(3);
  for (const auto& x : std::vector<std::vector<double>>{{0.0, 0.0}, {0.25, -0.375}, {-0.5, 0.125}}) {
    const std::vector<double> y{x[0] + shift[0], x[1] + shift[1]};
    EXPECT_EQ(kde_at_point(traj, x, 0.5, kernel), kde_at_point(moved, y, 0.5, kernel));
  }
}
