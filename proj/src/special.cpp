#include "rngaudit/special.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <string>

#include "rngaudit/errors.hpp"

namespace rngaudit::special {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw ArgumentError(std::string(what) + ": non-finite argument");
}

}  // namespace

double erfc(double x) {
  require_finite(x, "erfc");
  return std::erfc(x);
}

double igamc(double a, double x) {
  require_finite(a, "igamc");
  require_finite(x, "igamc");
  if (a <= 0.0) throw ArgumentError("igamc: shape must be positive");
  if (x < 0.0) throw ArgumentError("igamc: argument must be non-negative");
  if (x == 0.0) return 1.0;
  return boost::math::gamma_q(a, x);
}

double normal_cdf(double x) {
  require_finite(x, "normal_cdf");
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

}  // namespace rngaudit::special
