#pragma once

#include <cmath>

namespace tmap {

//! Softplus rectifier g(a) = log(1 + e^a), overflow-safe for large |a|.
inline double softplus(double a) {
  if (a > 30.0) return a + std::log1p(std::exp(-a));
  if (a < -30.0) return std::exp(a);
  return std::log1p(std::exp(a));
}

//! g'(a) = sigmoid(a).
inline double softplus_deriv(double a) {
  if (a >= 0.0) {
    const double e = std::exp(-a);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(a);
  return e / (1.0 + e);
}

//! log g(a), stable in the deep negative tail where g(a) ~ e^a.
inline double log_softplus(double a) {
  if (a < -30.0) return a;
  return std::log(softplus(a));
}

//! Inverse of softplus, g^{-1}(y) = log(e^y - 1); used to seed identity maps.
inline double softplus_inverse(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

} // namespace tmap
