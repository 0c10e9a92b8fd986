#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "tmap/indexset.hpp"

namespace tmap {

enum class BasisKind { probabilists_hermite };

//! One-dimensional polynomial family used as map base functions.
//! Evaluation is linearized beyond |x| > tail_bound: the tangent line at
//! the bound is continued outward, keeping value and slope continuous while
//! taming the raw Hermite growth on outlier samples.
struct BasisFamily {
  BasisKind kind = BasisKind::probabilists_hermite;
  int max_order = 10;
  double tail_bound = 3.0;

  BasisFamily() = default;
  BasisFamily(int max_order_, double tail_bound_ = 3.0)
      : max_order(max_order_), tail_bound(tail_bound_) {
    if (max_order < 1) throw std::invalid_argument("max_order must be >= 1");
    if (tail_bound <= 0.0) throw std::invalid_argument("tail_bound must be > 0");
  }
};

namespace detail {

//! He_n(x), He_n'(x), He_n''(x) by the three-term recurrence, without
//! tail handling. He_{n+1} = x He_n - n He_{n-1}; He_n' = n He_{n-1}.
inline void hermite_raw(int order, double x, double& v, double& d, double& dd) {
  double p0 = 1.0, p1 = x;
  if (order == 0) {
    v = 1.0;
    d = 0.0;
    dd = 0.0;
    return;
  }
  double pm2 = 0.0; // He_{order-2}
  for (int k = 2; k <= order; ++k) {
    double p2 = x * p1 - (k - 1) * p0;
    pm2 = p0;
    p0 = p1;
    p1 = p2;
  }
  // here p1 = He_order, p0 = He_{order-1}, pm2 = He_{order-2}
  v = p1;
  d = order * p0;
  dd = (order >= 2) ? static_cast<double>(order) * (order - 1) * pm2 : 0.0;
}

} // namespace detail

//! Value, first and second derivative of the order-n basis function with
//! tangent-line continuation beyond +-tail_bound.
inline void eval_1d_full(const BasisFamily& fam, int order, double x,
                         double& v, double& d, double& dd) {
  if (order < 0 || order > fam.max_order)
    throw std::out_of_range("basis order out of range");
  const double b = fam.tail_bound;
  if (x > b || x < -b) {
    const double xb = (x > b) ? b : -b;
    double vb, db, ddb;
    detail::hermite_raw(order, xb, vb, db, ddb);
    v = vb + db * (x - xb);
    d = db;
    dd = 0.0;
    return;
  }
  detail::hermite_raw(order, x, v, d, dd);
}

inline double eval_1d(const BasisFamily& fam, int order, double x) {
  double v, d, dd;
  eval_1d_full(fam, order, x, v, d, dd);
  return v;
}

//! Per-coordinate table of (value, deriv, second deriv) for orders 0..max,
//! shared across all multi-indices evaluated at the same point.
struct Basis1dTable {
  std::vector<double> v, d, dd; // indexed by order

  void fill(const BasisFamily& fam, double x, int up_to) {
    v.resize(up_to + 1);
    d.resize(up_to + 1);
    dd.resize(up_to + 1);
    for (int n = 0; n <= up_to; ++n) eval_1d_full(fam, n, x, v[n], d[n], dd[n]);
  }
};

//! Tensor-product basis value and gradient at x.
inline void eval_multi(const BasisFamily& fam, const MultiIndex& alpha,
                       std::span<const double> x, double& value,
                       std::vector<double>& grad) {
  const int d = static_cast<int>(alpha.size());
  if (static_cast<int>(x.size()) != d)
    throw std::invalid_argument("dimension mismatch");
  std::vector<double> vals(d), ders(d);
  for (int j = 0; j < d; ++j) {
    double v, dv, ddv;
    eval_1d_full(fam, alpha[j], x[j], v, dv, ddv);
    vals[j] = v;
    ders[j] = dv;
  }
  value = 1.0;
  for (int j = 0; j < d; ++j) value *= vals[j];
  grad.assign(d, 0.0);
  for (int j = 0; j < d; ++j) {
    double g = ders[j];
    for (int i = 0; i < d; ++i)
      if (i != j) g *= vals[i];
    grad[j] = g;
  }
}

} // namespace tmap
