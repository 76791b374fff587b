#pragma once

namespace rngaudit::special {

/// Complementary error function.
double erfc(double x);

/// Regularized upper incomplete gamma Q(a, x), a > 0, x >= 0.
double igamc(double a, double x);

/// Standard normal cumulative distribution function.
double normal_cdf(double x);

}  // namespace rngaudit::special
