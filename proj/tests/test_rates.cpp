#include "fbmkde/rates.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fbmkde;

namespace {

RateRegime basic(double H, double beta, std::size_t d, double eps = 0.01) { return {RateVariant::basic, HurstParameter(H), beta, d, eps}; }
RateRegime improved(double H, double beta, std::size_t d, double eps = 0.01) {
  return {RateVariant::improved, HurstParameter(H), beta, d, eps};
}

} // namespace

TEST(AlphaDH, Examples) {
  EXPECT_NEAR(alpha_dH(1, HurstParameter(0.25)), 8.0 / 9.0, 1e-15);
  EXPECT_NEAR(alpha_dH(3, HurstParameter(0.4)), 3.5, 1e-15);
  EXPECT_NEAR(alpha_dH(1, HurstParameter(0.5 - 1e-12)), 1.0, 1e-9);
}

TEST(AlphaDH, NearHalfRecoversClassicalRate) {
  // 2beta / (2beta + 1) at d = 1
  const double beta = 2.0;
  const double a = alpha_dH(1, HurstParameter(0.5 - 1e-12));
  EXPECT_NEAR(2.0 * beta / (2.0 * beta + a), 0.8, 1e-9);
}

TEST(AlphaDH, RejectsLongMemory) {
  EXPECT_THROW(alpha_dH(1, HurstParameter(0.5)), InvalidRegime);
  EXPECT_THROW(alpha_dH(2, HurstParameter(0.7)), InvalidRegime);
}

TEST(AlphaDH, PositiveOnDomain) {
  for (std::size_t d = 1; d <= 3; ++d)
    for (int i = 1; i < 100; ++i) EXPECT_GT(alpha_dH(d, HurstParameter(0.005 * i)), 0.0);
}

TEST(OptimalExponent, Examples) {
  EXPECT_NEAR(optimal_exponent(basic(0.25, 2.0, 1)), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(optimal_exponent(basic(0.75, 2.0, 1)), 0.25 / 3.0 - 0.01, 1e-15);
  EXPECT_NEAR(optimal_exponent(basic(0.75, 2.0, 1)), 0.0733, 1e-4);
  EXPECT_NEAR(optimal_exponent(improved(0.25, 2.0, 1)), 9.0 / 44.0, 1e-15);
}

TEST(MseExponent, Examples) {
  EXPECT_NEAR(theoretical_mse_exponent(basic(0.25, 2.0, 1)), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(theoretical_mse_exponent(basic(0.3, 2.0, 1, 0.05)), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(theoretical_mse_exponent(basic(0.75, 2.0, 1)), 0.3233333333333333, 1e-12);
}

TEST(MseExponent, ImprovedNearZeroHurst) {
  for (std::size_t d = 1; d <= 3; ++d)
    for (double beta : {1.0, 2.0, 3.5}) {
      const double expected = std::min(5.0 * beta / (5.0 * beta + 2.0 * d), 2.0 * beta / (beta + d)) - 0.01;
      EXPECT_NEAR(theoretical_mse_exponent(improved(1e-9, beta, d)), expected, 1e-6) << "beta=" << beta << " d=" << d;
    }
}

TEST(MseExponent, ImprovedDominatesWithoutSlack) {
  for (int i = 1; i <= 20; ++i)
    for (int j = 0; j <= 16; ++j)
      for (std::size_t d = 1; d <= 3; ++d) {
        const double H = (i - 0.5) / 40.0, beta = 1.0 + 3.0 * j / 16.0;
        EXPECT_GE(mse_exponent_before_eps(improved(H, beta, d)), mse_exponent_before_eps(basic(H, beta, d)) - 1e-15)
            << "H=" << H << " beta=" << beta << " d=" << d;
      }
}

TEST(MseExponent, ImprovedDominatesWhereSlackIsSmall) {
  // outside this band the fixed slack eps can exceed the improvement itself
  const double eps = 0.01;
  std::size_t checked = 0;
  for (int i = 1; i <= 20; ++i)
    for (int j = 0; j <= 16; ++j)
      for (std::size_t d = 1; d <= 3; ++d) {
        const double H = (i - 0.5) / 40.0, beta = 1.0 + 3.0 * j / 16.0;
        if (1.0 - 2.0 * H < eps * (beta + d) / beta) continue;
        ++checked;
        EXPECT_GE(theoretical_mse_exponent(improved(H, beta, d, eps)), theoretical_mse_exponent(basic(H, beta, d, eps)))
            << "H=" << H << " beta=" << beta << " d=" << d;
      }
  EXPECT_GT(checked, 1000u);
}

TEST(MseExponent, ContinuousAtHalf) {
  for (std::size_t d = 1; d <= 3; ++d)
    for (double beta : {1.0, 2.0, 4.0}) {
      const double left = theoretical_mse_exponent(basic(0.5 - 1e-10, beta, d));
      const double right = theoretical_mse_exponent(basic(0.5 + 1e-10, beta, d, 0.0));
      EXPECT_NEAR(left, right, 1e-9);
      EXPECT_NEAR(left, beta / (beta + static_cast<double>(d)), 1e-15);
    }
}

TEST(RateRegime, Validation) {
  EXPECT_THROW(basic(0.5, 2.0, 1), InvalidRegime);
  EXPECT_THROW(improved(0.6, 2.0, 1), InvalidRegime);
  EXPECT_THROW(basic(0.3, 0.5, 1), InvalidRegime);
  EXPECT_THROW(basic(0.3, 2.0, 0), InvalidRegime);
  EXPECT_THROW(basic(0.3, 2.0, 1, -0.1), InvalidRegime);
  EXPECT_THROW(parse_rate_variant("fancy"), InvalidRegime);
  EXPECT_EQ(parse_rate_variant("improved"), RateVariant::improved);
  EXPECT_STREQ(to_string(RateVariant::basic), "basic");
}

TEST(Bandwidth, Examples) {
  EXPECT_NEAR(bandwidth(64.0, 1.0 / 6.0), 0.5, 1e-15);
  EXPECT_EQ(bandwidth(1.0, 0.3), 1.0);
  EXPECT_TRUE(bandwidth_warns(bandwidth(1.0, 0.3)));
  EXPECT_FALSE(bandwidth_warns(0.5));
  EXPECT_NEAR(bandwidth(1e6, 9.0 / 44.0), std::pow(10.0, -54.0 / 44.0), 1e-15);
}

TEST(VarianceBounds, Examples) {
  const auto rough = variance_bound_exponents(HurstParameter(0.25), 1, 0.01);
  EXPECT_EQ(rough.basic_T, -1.0);
  EXPECT_EQ(rough.basic_h, -2.0);
  EXPECT_TRUE(rough.has_improved);
  EXPECT_DOUBLE_EQ(rough.improved_h_inv_hurst, 4.0);
  EXPECT_NEAR(rough.improved_h_dimension, 5.0 / 4.5, 1e-15);
  EXPECT_NEAR(rough.improved_T, -0.49, 1e-15);
  EXPECT_NEAR(rough.binding_h, 5.0 / 4.5, 1e-15);

  const auto smooth = variance_bound_exponents(HurstParameter(0.75), 1, 0.01);
  EXPECT_NEAR(smooth.basic_T, -0.49, 1e-15);
  EXPECT_FALSE(smooth.has_improved);
}

TEST(VarianceBounds, ImprovedBracket) {
  const double T = 1000.0;
  const double expected = std::max({std::pow(0.1, 4.0), std::pow(0.1, 5.0 / 4.5), std::pow(T, -0.49)});
  EXPECT_NEAR(improved_variance_bracket(HurstParameter(0.25), 1, 0.1, T, 0.01), expected, 1e-15);
  EXPECT_THROW(improved_variance_bracket(HurstParameter(0.75), 1, 0.1, T, 0.01), InvalidRegime);
}
