#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "latentmark/error.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/stats.hpp"

using namespace latentmark;
using std::numbers::pi;

namespace {

// Direct quadrature of the cone cap: the angle to a fixed axis has density
// proportional to sin^(d-2) on [0, pi], and both caps count.
double cap_fraction_quadrature(double theta, int d) {
  auto integrate = [d](double hi) {
    const int m = 20000;
    double s = 0.0;
    for (int j = 0; j <= m; ++j) {
      const double t = hi * j / m;
      const double w = (j == 0 || j == m) ? 1 : (j % 2 ? 4 : 2);
      s += w * std::pow(std::sin(t), d - 2);
    }
    return s * hi / (3 * m);
  };
  return integrate(theta) / integrate(pi / 2);
}

}  // namespace

TEST(IncompleteBeta, Boundaries) {
  EXPECT_EQ(reg_inc_beta(0.0, 2.5, 0.5), 0.0);
  EXPECT_EQ(reg_inc_beta(1.0, 2.5, 0.5), 1.0);
  EXPECT_THROW(reg_inc_beta(-0.1, 1, 1), InvalidArgument);
  EXPECT_THROW(reg_inc_beta(0.5, 0, 1), InvalidArgument);
  EXPECT_THROW(reg_inc_beta(0.5, 1, -2), InvalidArgument);
}

TEST(IncompleteBeta, ClosedForms) {
  for (double x = 0.01; x < 1.0; x += 0.0437) {
    EXPECT_NEAR(reg_inc_beta(x, 0.5, 0.5), 2 / pi * std::asin(std::sqrt(x)), 1e-12);
    EXPECT_NEAR(reg_inc_beta(x, 3.0, 1.0), x * x * x, 1e-12);
    EXPECT_NEAR(reg_inc_beta(x, 1.0, 4.5), 1 - std::pow(1 - x, 4.5), 1e-12);
    // I_x(2, 2) = 3x^2 - 2x^3
    EXPECT_NEAR(reg_inc_beta(x, 2.0, 2.0), 3 * x * x - 2 * x * x * x, 1e-12);
  }
}

TEST(IncompleteBeta, Reflection) {
  for (double a : {0.5, 3.5, 31.5, 255.5})
    for (double b : {0.5, 2.0, 7.0})
      for (double x : {0.001, 0.2, 0.5, 0.77, 0.999}) {
        EXPECT_NEAR(reg_inc_beta(x, a, b), 1 - reg_inc_beta(1 - x, b, a), 1e-12) << a << " " << b << " " << x;
      }
}

TEST(Hypercone, LowDimensionClosedForms) {
  for (double t = 0.0; t <= pi / 2; t += 0.1) {
    EXPECT_NEAR(fpr_of_angle(t, 2), 2 * t / pi, 1e-12);
    EXPECT_NEAR(fpr_of_angle(t, 3), 1 - std::cos(t), 1e-12);
  }
  EXPECT_NEAR(angle_of_fpr(1e-6, 3), std::acos(1 - 1e-6), 1e-9);
}

TEST(Hypercone, MatchesQuadratureInHighDimension) {
  for (int d : {8, 64, 512})
    for (double t : {0.3, 0.7, 1.0, 1.3}) {
      const double q = cap_fraction_quadrature(t, d);
      if (q < 1e-280) continue;
      EXPECT_NEAR(fpr_of_angle(t, d) / q, 1.0, 1e-8) << d << " " << t;
    }
}

TEST(Hypercone, ReferenceAngleAtOneInAMillion) {
  const double theta = angle_of_fpr(1e-6, 64);
  EXPECT_NEAR(theta, 0.9717, 5e-5);
  EXPECT_NEAR(std::cos(theta), 0.5639, 5e-5);
  EXPECT_NEAR(cap_fraction_quadrature(theta, 64), 1e-6, 1e-14);
}

TEST(Hypercone, AngleRoundTrip) {
  for (int d : {2, 8, 64, 512})
    for (double f : {1e-1, 1e-3, 1e-6, 1e-10, 1e-12}) {
      const double t = angle_of_fpr(f, d);
      EXPECT_NEAR(fpr_of_angle(t, d) / f, 1.0, 1e-9) << d << " " << f;
      // Going through cos(t) loses sin^2 precision for tiny angles.
      if (t > 0.01) EXPECT_NEAR(fpr_of_cosine(std::cos(t), d) / f, 1.0, 1e-9);
    }
}

TEST(Hypercone, Monotonicity) {
  for (int d : {4, 64}) {
    double prev = -1.0;
    for (double t = 0.05; t < pi / 2; t += 0.05) {
      const double f = fpr_of_angle(t, d);
      EXPECT_GT(f, prev);
      prev = f;
    }
  }
  for (int d = 3; d < 200; d += 7) EXPECT_LT(fpr_of_angle(1.0, d + 1), fpr_of_angle(1.0, d));
  EXPECT_EQ(fpr_of_angle(pi / 2, 64), 1.0);
  EXPECT_EQ(fpr_of_angle(0.0, 64), 0.0);
}

TEST(Hypercone, MonteCarloAtUnitAngle) {
  const int d = 64, n = 200000;
  const double expected = fpr_of_angle(1.0, d);
  const double c2 = std::cos(1.0) * std::cos(1.0);
  CounterRng rng(12);
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    double first = 0.0, norm2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double z = rng.normal();
      if (j == 0) first = z;
      norm2 += z * z;
    }
    hits += first * first > c2 * norm2;
  }
  EXPECT_NEAR(hits / double(n), expected, 4 * std::sqrt(expected * (1 - expected) / n));
}

TEST(Hypercone, PValueEqualsRateAtObservedAngle) {
  const std::vector<double> a = {0.6, 0.8, 0.0, 0.0};
  const std::vector<double> x = {1.0, 2.0, -0.5, 0.3};
  const double cosine = (0.6 * 1 + 0.8 * 2) / std::sqrt(1 + 4 + 0.25 + 0.09);
  EXPECT_NEAR(p_value(x, a), fpr_of_cosine(cosine, 4), 1e-14);
  std::vector<double> neg = x;
  for (auto& v : neg) v = -v;
  EXPECT_NEAR(p_value(neg, a), p_value(x, a), 1e-15);
  EXPECT_THROW(p_value(std::vector<double>(4, 0.0), a), InvalidArgument);
  EXPECT_THROW(p_value(std::vector<double>(3, 1.0), a), InvalidArgument);
}

TEST(Hypercone, ParameterValidation) {
  EXPECT_THROW(fpr_of_angle(2.0, 64), InvalidArgument);
  EXPECT_THROW(fpr_of_angle(0.5, 1), InvalidArgument);
  EXPECT_THROW(angle_of_fpr(0.0, 64), InvalidArgument);
  EXPECT_THROW(angle_of_fpr(1.0, 64), InvalidArgument);
  const auto p = HyperconeParams::from_fpr(1e-3, 64);
  EXPECT_NEAR(HyperconeParams::from_angle(p.theta, 64).fpr, 1e-3, 1e-12);
}
