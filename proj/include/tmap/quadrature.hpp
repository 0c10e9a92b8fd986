#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace tmap {

//! Gauss-Legendre nodes/weights on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

//! Computes (and caches) an n-point Gauss-Legendre rule via Newton iteration
//! on the Legendre polynomial roots.
inline const GaussLegendreRule& gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("quadrature order must be >= 1");
  static std::map<int, GaussLegendreRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Legendre recurrence for P_n and P_n'.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  auto [pos, _] = cache.emplace(n, std::move(rule));
  return pos->second;
}

//! Adaptive Simpson integration; used by tests and normalization checks.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-10,
                        int max_depth = 40) {
  struct Rec {
    static double simpson(F& f, double a, double m, double b, double fa,
                          double fm, double fb) {
      return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    }
    static double go(F& f, double a, double b, double fa, double fm, double fb,
                     double whole, double tol, int depth) {
      double m = 0.5 * (a + b);
      double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      double flm = f(lm), frm = f(rm);
      double left = simpson(f, a, lm, m, fa, flm, fm);
      double right = simpson(f, m, rm, b, fm, frm, fb);
      if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
      return go(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
             go(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }
  };
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return Rec::go(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

} // namespace tmap
