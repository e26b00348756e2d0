#pragma once

// Detection statistics for the dual-hypercone detector.

#include <span>

namespace latentmark {

/// Regularized incomplete Beta function I_x(a, b), absolute error <= 1e-13.
/// Continued fraction (modified Lentz) with the x < (a+1)/(a+b+2) symmetry switch.
double reg_inc_beta(double x, double a, double b);

/// Probability that a uniformly random unit vector u satisfies |u^T a| > cos(theta)
/// in dimension d: 1 - I_{cos^2 theta}(1/2, (d-1)/2), evaluated through the
/// complementary form I_{sin^2 theta}((d-1)/2, 1/2) to keep relative accuracy
/// for tiny rates.
double fpr_of_angle(double theta, int d);
/// Same as fpr_of_angle for a given |cos theta| in [0, 1].
double fpr_of_cosine(double cosine, int d);
/// Inverse of fpr_of_angle by bisection on [0, pi/2].
double angle_of_fpr(double fpr, int d);

/// fpr_of_angle at the observed angle between x and the unit carrier a.
/// Throws InvalidArgument for a zero feature vector or mismatched sizes.
double p_value(std::span<const double> x, std::span<const double> carrier);

struct HyperconeParams {
  int d = 0;
  double theta = 0.0;
  double fpr = 0.0;

  static HyperconeParams from_fpr(double fpr, int d);
  static HyperconeParams from_angle(double theta, int d);
};

}  // namespace latentmark
