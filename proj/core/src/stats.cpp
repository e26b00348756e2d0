#include "latentmark/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "latentmark/error.hpp"

namespace latentmark {
namespace {

constexpr int kMaxIterations = 300;
constexpr double kTolerance = 1e-15;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a, b) / front, Numerical Recipes 'betacf' form.
double beta_continued_fraction(double x, double a, double b) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kTolerance) return h;
  }
  throw Error("incomplete beta continued fraction did not converge (a=" + std::to_string(a) +
              ", b=" + std::to_string(b) + ", x=" + std::to_string(x) + ")");
}

double log_front(double x, double a, double b) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
}

void check_dimension(int d) {
  if (d < 2) throw InvalidArgument("dimension must be at least 2");
}

}  // namespace

double reg_inc_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw InvalidArgument("reg_inc_beta: a and b must be positive");
  }
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("reg_inc_beta: x must be in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front(x, a, b)) * beta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - std::exp(log_front(1.0 - x, b, a)) * beta_continued_fraction(1.0 - x, b, a) / b;
}

double fpr_of_angle(double theta, int d) {
  check_dimension(d);
  if (!(theta >= 0.0 && theta <= std::numbers::pi / 2)) {
    throw InvalidArgument("angle must be in [0, pi/2]");
  }
  const double s = std::sin(theta);
  return reg_inc_beta(std::min(1.0, s * s), (d - 1) / 2.0, 0.5);
}

double fpr_of_cosine(double cosine, int d) {
  check_dimension(d);
  if (!(cosine >= 0.0 && cosine <= 1.0)) throw InvalidArgument("cosine must be in [0, 1]");
  const double sin2 = (1.0 - cosine) * (1.0 + cosine);
  return reg_inc_beta(std::clamp(sin2, 0.0, 1.0), (d - 1) / 2.0, 0.5);
}

double angle_of_fpr(double fpr, int d) {
  check_dimension(d);
  if (!(fpr > 0.0 && fpr < 1.0)) throw InvalidArgument("FPR must be in (0, 1)");
  double lo = 0.0;
  double hi = std::numbers::pi / 2;
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (fpr_of_angle(mid, d) < fpr) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double p_value(std::span<const double> x, std::span<const double> carrier) {
  if (x.size() != carrier.size()) throw InvalidArgument("p_value: dimension mismatch");
  double proj = 0.0;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    proj += x[i] * carrier[i];
    norm2 += x[i] * x[i];
  }
  if (norm2 == 0.0) throw InvalidArgument("p_value: zero feature vector");
  // sin^2 of the angle from the orthogonal residual, accurate near 0.
  double resid2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] - proj * carrier[i];
    resid2 += r * r;
  }
  const double sin2 = std::clamp(resid2 / norm2, 0.0, 1.0);
  return reg_inc_beta(sin2, (static_cast<int>(x.size()) - 1) / 2.0, 0.5);
}

HyperconeParams HyperconeParams::from_fpr(double fpr, int d) {
  return {d, angle_of_fpr(fpr, d), fpr};
}

HyperconeParams HyperconeParams::from_angle(double theta, int d) {
  return {d, theta, fpr_of_angle(theta, d)};
}

}  // namespace latentmark
