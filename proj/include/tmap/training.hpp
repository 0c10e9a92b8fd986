#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>

#include "tmap/component_cache.hpp"

namespace tmap {

//! Unnormalized target log-density with gradient; the callable contract
//! used by map-from-density training and the diagnostics.
struct TargetDensity {
  //! Returns log pi_bar(x); writes the gradient if grad != nullptr.
  std::function<double(const VectorXd&, VectorXd*)> logpdf;
};

class ObjectiveBase {
public:
  virtual ~ObjectiveBase() = default;
  virtual double value_grad(const VectorXd& w, VectorXd& grad) = 0;
  virtual int size() const = 0;
};

namespace detail {
inline void check_finite_objective(double v, int sample_index) {
  if (!std::isfinite(v))
    throw std::runtime_error("non-finite objective at sample " +
                             std::to_string(sample_index));
}
constexpr double half_log_2pi = 0.91893853320467274178;
} // namespace detail

//! Map-from-samples objective for one component:
//!   J_k = -(1/n) sum_i log S_k^sharp rho_k (x_i)
//!       =  (1/n) sum_i [ S_k(x_i)^2/2 + log(2 pi)/2 - log d_k S_k(x_i) ].
class SampleObjective : public ObjectiveBase {
public:
  explicit SampleObjective(ComponentCache& cache) : cache_(cache) {}

  double value_grad(const VectorXd& w, VectorXd& grad) override {
    cache_.forward(w);
    const auto& v = cache_.value();
    const auto& ld = cache_.logdk();
    const int n = cache_.n();
    double J = 0.0;
    for (int i = 0; i < n; ++i) {
      const double c = 0.5 * v[i] * v[i] + detail::half_log_2pi - ld[i];
      detail::check_finite_objective(c, i);
      J += c;
    }
    J /= n;
    VectorXd a = v / n;
    VectorXd b = VectorXd::Constant(n, -1.0 / n);
    cache_.backward(a, b, grad);
    return J;
  }

  //! Objective value only (used for held-out validation).
  double value(const VectorXd& w) {
    cache_.forward(w);
    const auto& v = cache_.value();
    const auto& ld = cache_.logdk();
    double J = 0.0;
    for (int i = 0; i < cache_.n(); ++i)
      J += 0.5 * v[i] * v[i] + detail::half_log_2pi - ld[i];
    return J / cache_.n();
  }

  int size() const override { return static_cast<int>(cache_.terms()); }

private:
  ComponentCache& cache_;
};

//! Least-squares regression objective for one component:
//!   J_k = 1/2 sum_i (S_k(x_i) - z_i)^2.
class RegressionObjective : public ObjectiveBase {
public:
  RegressionObjective(ComponentCache& cache, VectorXd targets)
      : cache_(cache), z_(std::move(targets)) {
    if (z_.size() != cache_.n())
      throw std::invalid_argument("target size mismatch");
  }

  double value_grad(const VectorXd& w, VectorXd& grad) override {
    cache_.forward(w);
    VectorXd r = cache_.value() - z_;
    for (int i = 0; i < r.size(); ++i) detail::check_finite_objective(r[i], i);
    VectorXd b = VectorXd::Zero(cache_.n());
    cache_.backward(r, b, grad);
    return 0.5 * r.squaredNorm();
  }

  double mean_squared_residual(const VectorXd& w) {
    cache_.forward(w);
    return (cache_.value() - z_).squaredNorm() / cache_.n();
  }

  int size() const override { return static_cast<int>(cache_.terms()); }

private:
  ComponentCache& cache_;
  VectorXd z_;
};

//! Map-from-density objective over all components of a d-dimensional map:
//!   J = - sum_i w_i [ log pi_bar(S(x_i)) + sum_k log d_k S_k(x_i) ],
//! with x_i ~ rho fixed and weights w_i summing to one (uniform 1/n when
//! omitted; quadrature weights when the x_i are deterministic nodes).
class DensityObjective : public ObjectiveBase {
public:
  DensityObjective(std::vector<ComponentCache*> caches, TargetDensity target,
                   VectorXd weights = VectorXd())
      : caches_(std::move(caches)), target_(std::move(target)),
        weights_(std::move(weights)) {
    if (caches_.empty()) throw std::invalid_argument("no component caches");
    n_ = caches_.front()->n();
    for (auto* c : caches_)
      if (c->n() != n_) throw std::invalid_argument("cache size mismatch");
    if (weights_.size() == 0)
      weights_ = VectorXd::Constant(n_, 1.0 / n_);
    else if (weights_.size() != n_)
      throw std::invalid_argument("weight count mismatch");
  }

  int dim() const { return static_cast<int>(caches_.size()); }

  int size() const override {
    int s = 0;
    for (auto* c : caches_) s += static_cast<int>(c->terms());
    return s;
  }

  double value_grad(const VectorXd& w, VectorXd& grad) override {
    const int d = dim();
    split_forward(w);
    // target values and gradients at the mapped points
    MatrixXd gtheta(n_, d);
    VectorXd s(d), gt(d);
    double J = 0.0;
    for (int i = 0; i < n_; ++i) {
      for (int k = 0; k < d; ++k) s[k] = caches_[k]->value()[i];
      const double lp = target_.logpdf(s, &gt);
      double c = -lp;
      for (int k = 0; k < d; ++k) c -= caches_[k]->logdk()[i];
      detail::check_finite_objective(c, i);
      J += weights_[i] * c;
      gtheta.row(i) = gt.transpose();
    }
    grad.resize(w.size());
    int off = 0;
    VectorXd b = -weights_;
    for (int k = 0; k < d; ++k) {
      const int m = static_cast<int>(caches_[k]->terms());
      VectorXd a = -gtheta.col(k).cwiseProduct(weights_);
      VectorXd gk;
      caches_[k]->backward(a, b, gk);
      grad.segment(off, m) = gk;
      off += m;
    }
    return J;
  }

  //! Splits the stacked coefficient vector and runs all component forwards.
  void split_forward(const VectorXd& w) {
    int off = 0;
    for (auto* c : caches_) {
      const int m = static_cast<int>(c->terms());
      c->forward(w.segment(off, m));
      off += m;
    }
    if (off != w.size())
      throw std::invalid_argument("stacked coefficient size mismatch");
  }

private:
  std::vector<ComponentCache*> caches_;
  TargetDensity target_;
  VectorXd weights_;
  int n_;
};

struct OptimReport {
  int iterations = 0;
  bool converged = false;
  bool line_search_warning = false;
};

//! Limited-memory BFGS with Armijo backtracking. Terminates when the
//! gradient infinity-norm drops below gtol or the iteration cap is hit.
//! On line-search failure the best iterate seen is returned with a warning.
inline OptimReport minimize(ObjectiveBase& obj, VectorXd& w,
                            int max_iters = 500, double gtol = 1e-6) {
  const int memory = 10;
  std::deque<VectorXd> s_hist, y_hist;
  VectorXd g, g_new;
  double f = obj.value_grad(w, g);
  VectorXd best_w = w;
  double best_f = f;
  OptimReport rep;
  for (int it = 0; it < max_iters; ++it) {
    rep.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() < gtol) {
      rep.converged = true;
      return rep;
    }
    // two-loop recursion
    VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      const double rho_i = 1.0 / y_hist[i].dot(s_hist[i]);
      alpha[i] = rho_i * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma = s_hist.back().dot(y_hist.back()) /
                           y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double rho_i = 1.0 / y_hist[i].dot(s_hist[i]);
      const double beta = rho_i * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    VectorXd p = -q;
    double gp = g.dot(p);
    if (gp >= 0.0) { // fall back to steepest descent
      p = -g;
      gp = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
    }
    // Armijo backtracking
    double step = 1.0;
    const double c1 = 1e-4;
    double f_new = 0.0;
    bool ok = false;
    VectorXd w_new;
    for (int ls = 0; ls < 40; ++ls) {
      w_new = w + step * p;
      try {
        f_new = obj.value_grad(w_new, g_new);
      } catch (const std::runtime_error&) {
        step *= 0.5;
        continue;
      }
      if (std::isfinite(f_new) && f_new <= f + c1 * step * gp) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      rep.line_search_warning = true;
      w = best_w;
      // leave gradient state consistent with the returned iterate
      obj.value_grad(w, g);
      return rep;
    }
    VectorXd s_vec = w_new - w;
    VectorXd y_vec = g_new - g;
    if (y_vec.dot(s_vec) > 1e-12 * s_vec.norm() * y_vec.norm()) {
      s_hist.push_back(s_vec);
      y_hist.push_back(y_vec);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    w = w_new;
    g = g_new;
    f = f_new;
    if (f < best_f) {
      best_f = f;
      best_w = w;
    }
  }
  rep.iterations = max_iters;
  return rep;
}

} // namespace tmap
