#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "tmap/component_cache.hpp"
#include "tmap/diagnostics.hpp"
#include "tmap/quadrature.hpp"
#include "tmap/training.hpp"
#include "tmap/transport.hpp"

namespace tmap {

//! Configuration of the greedy multi-index adaptation.
struct AtmConfig {
  int max_terms = 30;            // per component
  int max_order_per_var = 5;
  int max_total_order = 5;
  double tail_bound = 3.0;
  int quad_order = 32;

  // stopping rules, per objective kind
  double sample_stop_tol = 1e-4;       // validation improvement threshold
  int sample_stop_patience = 2;
  double density_stop_tol_sigma = 1e-3;
  double density_stop_tol_trace = 3.1622776601683794e-3; // 10^-2.5
  double regression_stop_tol = 1e-6;   // held-out mean squared residual

  int max_opt_iters = 500;
  double opt_gtol = 1e-6;
  double validation_fraction = 0.2;
  int n_density_samples = 5000;
  int n_density_test = 5000;

  // When set (one-dimensional targets only), map-from-density training uses
  // deterministic rho-weighted Gauss-Legendre nodes on [-bound, bound]
  // instead of Monte-Carlo draws. This removes the O(1/n) sampling floor of
  // the in-training diagnostic at a fraction of the cost.
  bool density_quadrature = false;
  int density_quad_nodes = 200;
  double density_quad_bound = 8.0;

  BasisFamily family() const {
    return BasisFamily(std::max(1, max_order_per_var), tail_bound);
  }
};

struct AtmTraceRow {
  int iteration = 0;
  int component = 0;             // 1-based, 0 when not applicable
  MultiIndex selected;           // empty on the final row
  double train_obj = 0.0;
  double val_metric = 0.0;       // validation objective or diagnostic
  std::uint64_t basis_evals = 0; // cumulative within this training run
};

struct AtmResult {
  std::vector<MapComponent> components;
  VectorXd shift, scale;
  MapDirection direction = MapDirection::pullback;
  std::vector<AtmTraceRow> trace;
  bool tol_reached = false;

  TriangularMap map() const {
    return TriangularMap(components, shift, scale, direction);
  }
};

namespace detail {

inline std::vector<MultiIndex> identity_terms(int k) {
  MultiIndex zero(k, 0), lin(k, 0);
  lin[k - 1] = 1;
  return {zero, lin};
}

inline VectorXd identity_coeffs() {
  VectorXd w(2);
  w[0] = 0.0;
  w[1] = softplus_inverse(1.0);
  return w;
}

//! Reduced margin of the current term set, filtered by the order caps.
inline std::vector<MultiIndex> capped_margin(const std::vector<MultiIndex>& terms,
                                             int dim, const AtmConfig& cfg) {
  MultiIndexSet aset(dim, terms);
  std::vector<MultiIndex> out;
  for (const auto& a : aset.reduced_margin()) {
    if (total_order(a) > cfg.max_total_order) continue;
    if (*std::max_element(a.begin(), a.end()) > cfg.max_order_per_var) continue;
    out.push_back(a);
  }
  return out;
}

//! Builds a MapComponent from append-ordered terms, permuting coefficients
//! into the set's lexicographic order.
inline MapComponent make_component(const std::vector<MultiIndex>& terms,
                                   const VectorXd& w, const BasisFamily& fam,
                                   int quad_order) {
  MultiIndexSet aset(static_cast<int>(terms.front().size()), terms);
  VectorXd ws(aset.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    auto it = std::lower_bound(aset.members().begin(), aset.members().end(),
                               terms[i]);
    ws[std::distance(aset.members().begin(), it)] = w[i];
  }
  return MapComponent(std::move(aset), std::move(ws), fam, quad_order);
}

struct Standardization {
  VectorXd shift, scale;
};

inline Standardization standardize(const MatrixXd& X) {
  Standardization s;
  const int d = static_cast<int>(X.cols());
  s.shift.resize(d);
  s.scale.resize(d);
  for (int j = 0; j < d; ++j) {
    s.shift[j] = X.col(j).mean();
    const double var =
        (X.col(j).array() - s.shift[j]).square().sum() / (X.rows() - 1);
    s.scale[j] = std::sqrt(var);
    if (!(s.scale[j] > 1e-12))
      throw std::runtime_error("degenerate sample column " + std::to_string(j));
  }
  return s;
}

} // namespace detail

//! Trains a triangular map in the pullback direction from target samples.
//! Components are adapted independently; the validation split drives the
//! stopping rule and the returned component is the best held-out iterate.
inline AtmResult train_from_samples(const MatrixXd& X, const AtmConfig& cfg) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n < 10) throw std::invalid_argument("need at least 10 samples");
  auto std_ = detail::standardize(X);
  MatrixXd Z = (X.rowwise() - std_.shift.transpose()).array().rowwise() /
               std_.scale.transpose().array();
  const int n_val = std::max(1, static_cast<int>(n * cfg.validation_fraction));
  const int n_train = n - n_val;
  const BasisFamily fam = cfg.family();

  AtmResult res;
  res.shift = std_.shift;
  res.scale = std_.scale;
  res.direction = MapDirection::pullback;
  const std::uint64_t c0 = BasisCounter::instance().value();

  for (int k = 1; k <= d; ++k) {
    ComponentCache train_cache(Z.topRows(n_train).leftCols(k), fam,
                               cfg.quad_order);
    ComponentCache val_cache(Z.bottomRows(n_val).leftCols(k), fam,
                             cfg.quad_order);
    auto terms = detail::identity_terms(k);
    VectorXd w = detail::identity_coeffs();
    train_cache.set_terms(terms);
    val_cache.set_terms(terms);

    std::vector<MultiIndex> best_terms = terms;
    VectorXd best_w = w;
    double best_val = std::numeric_limits<double>::infinity();
    int non_improve = 0;

    for (int iter = 0;; ++iter) {
      SampleObjective obj(train_cache);
      minimize(obj, w, cfg.max_opt_iters, cfg.opt_gtol);
      SampleObjective vobj(val_cache);
      const double val = vobj.value(w);
      VectorXd gtmp;
      const double train = obj.value_grad(w, gtmp);
      AtmTraceRow row{iter, k, {}, train, val,
                      BasisCounter::instance().value() - c0};
      if (val < best_val) {
        if (best_val - val <= cfg.sample_stop_tol)
          ++non_improve;
        else
          non_improve = 0;
        best_val = val;
        best_terms = terms;
        best_w = w;
      } else {
        ++non_improve;
      }
      if (non_improve >= cfg.sample_stop_patience ||
          static_cast<int>(terms.size()) >= cfg.max_terms) {
        res.trace.push_back(row);
        break;
      }
      auto cand = detail::capped_margin(terms, k, cfg);
      if (cand.empty()) {
        res.trace.push_back(row);
        break;
      }
      // evaluate the exact objective gradient at zero-initialized candidates
      const std::size_t m = terms.size();
      for (const auto& a : cand) train_cache.add_term(a);
      VectorXd w_ext = VectorXd::Zero(m + cand.size());
      w_ext.head(m) = w;
      VectorXd g_ext;
      obj.value_grad(w_ext, g_ext);
      std::size_t best_idx = 0;
      double best_g = -1.0;
      for (std::size_t c = 0; c < cand.size(); ++c) {
        const double g = std::abs(g_ext[m + c]);
        if (g > best_g) {
          best_g = g;
          best_idx = c;
        }
      }
      train_cache.truncate(m);
      const MultiIndex chosen = cand[best_idx];
      row.selected = chosen;
      res.trace.push_back(row);
      terms.push_back(chosen);
      train_cache.add_term(chosen);
      val_cache.add_term(chosen);
      w.conservativeResize(m + 1);
      w[m] = 0.0;
    }
    res.components.push_back(
        detail::make_component(best_terms, best_w, fam, cfg.quad_order));
  }
  return res;
}

//! Trains a map by least-squares regression onto given input/target pairs
//! (inputs are reference samples; no input standardization is applied).
inline AtmResult train_regression(const MatrixXd& X, const MatrixXd& Z,
                                  const AtmConfig& cfg) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (Z.rows() != n || Z.cols() != d)
    throw std::invalid_argument("target matrix shape mismatch");
  const int n_val = std::max(1, static_cast<int>(n * cfg.validation_fraction));
  const int n_train = n - n_val;
  const BasisFamily fam = cfg.family();

  AtmResult res;
  res.shift = VectorXd::Zero(d);
  res.scale = VectorXd::Ones(d);
  res.direction = MapDirection::pushforward;
  res.tol_reached = true;
  const std::uint64_t c0 = BasisCounter::instance().value();

  for (int k = 1; k <= d; ++k) {
    ComponentCache train_cache(X.topRows(n_train).leftCols(k), fam,
                               cfg.quad_order);
    ComponentCache val_cache(X.bottomRows(n_val).leftCols(k), fam,
                             cfg.quad_order);
    VectorXd z_train = Z.col(k - 1).head(n_train);
    VectorXd z_val = Z.col(k - 1).tail(n_val);
    auto terms = detail::identity_terms(k);
    VectorXd w = detail::identity_coeffs();
    train_cache.set_terms(terms);
    val_cache.set_terms(terms);

    std::vector<MultiIndex> best_terms = terms;
    VectorXd best_w = w;
    double best_val = std::numeric_limits<double>::infinity();
    bool reached = false;

    for (int iter = 0;; ++iter) {
      RegressionObjective obj(train_cache, z_train);
      minimize(obj, w, cfg.max_opt_iters, cfg.opt_gtol);
      RegressionObjective vobj(val_cache, z_val);
      const double val_mse = vobj.mean_squared_residual(w);
      VectorXd gtmp;
      const double train = obj.value_grad(w, gtmp);
      AtmTraceRow row{iter, k, {}, train, val_mse,
                      BasisCounter::instance().value() - c0};
      if (val_mse < best_val) {
        best_val = val_mse;
        best_terms = terms;
        best_w = w;
      }
      if (val_mse < cfg.regression_stop_tol) {
        reached = true;
        res.trace.push_back(row);
        break;
      }
      if (static_cast<int>(terms.size()) >= cfg.max_terms) {
        res.trace.push_back(row);
        break;
      }
      auto cand = detail::capped_margin(terms, k, cfg);
      if (cand.empty()) {
        res.trace.push_back(row);
        break;
      }
      const std::size_t m = terms.size();
      for (const auto& a : cand) train_cache.add_term(a);
      VectorXd w_ext = VectorXd::Zero(m + cand.size());
      w_ext.head(m) = w;
      VectorXd g_ext;
      obj.value_grad(w_ext, g_ext);
      std::size_t best_idx = 0;
      double best_g = -1.0;
      for (std::size_t c = 0; c < cand.size(); ++c) {
        const double g = std::abs(g_ext[m + c]);
        if (g > best_g) {
          best_g = g;
          best_idx = c;
        }
      }
      train_cache.truncate(m);
      const MultiIndex chosen = cand[best_idx];
      row.selected = chosen;
      res.trace.push_back(row);
      terms.push_back(chosen);
      train_cache.add_term(chosen);
      val_cache.add_term(chosen);
      w.conservativeResize(m + 1);
      w[m] = 0.0;
    }
    if (!reached) res.tol_reached = false;
    res.components.push_back(
        detail::make_component(best_terms, best_w, fam, cfg.quad_order));
  }
  return res;
}

//! Trains a pushforward map toward an unnormalized target density with
//! gradient. One joint optimization over all components; adaptation adds
//! the globally best candidate index per iteration and stops on the
//! variance or trace diagnostic threshold.
inline AtmResult train_from_density(const TargetDensity& target, int dim,
                                    const AtmConfig& cfg,
                                    std::mt19937_64& rng) {
  const BasisFamily fam = cfg.family();
  const bool quad_nodes = cfg.density_quadrature && dim == 1;
  MatrixXd X, Xtest;
  VectorXd node_weights; // normalized; empty means uniform Monte-Carlo
  if (quad_nodes) {
    const auto& rule = gauss_legendre(cfg.density_quad_nodes);
    const double b = cfg.density_quad_bound;
    X.resize(cfg.density_quad_nodes, 1);
    node_weights.resize(cfg.density_quad_nodes);
    for (int i = 0; i < X.rows(); ++i) {
      X(i, 0) = b * rule.nodes[i];
      node_weights[i] = rule.weights[i] * std::exp(-0.5 * X(i, 0) * X(i, 0));
    }
    node_weights /= node_weights.sum();
    Xtest = X;
  } else {
    std::normal_distribution<double> normal;
    X.resize(cfg.n_density_samples, dim);
    Xtest.resize(cfg.n_density_test, dim);
    for (int i = 0; i < X.rows(); ++i)
      for (int j = 0; j < dim; ++j) X(i, j) = normal(rng);
    for (int i = 0; i < Xtest.rows(); ++i)
      for (int j = 0; j < dim; ++j) Xtest(i, j) = normal(rng);
  }

  std::vector<ComponentCache> caches;
  caches.reserve(dim);
  std::vector<std::vector<MultiIndex>> terms(dim);
  std::vector<Eigen::Index> sizes(dim);
  for (int k = 1; k <= dim; ++k) {
    caches.emplace_back(X.leftCols(k), fam, cfg.quad_order);
    terms[k - 1] = detail::identity_terms(k);
    caches.back().set_terms(terms[k - 1]);
    sizes[k - 1] = 2;
  }
  VectorXd w = VectorXd::Zero(2 * dim);
  for (int k = 0; k < dim; ++k) w[2 * k + 1] = softplus_inverse(1.0);

  std::vector<ComponentCache*> cache_ptrs;
  for (auto& c : caches) cache_ptrs.push_back(&c);

  AtmResult res;
  res.shift = VectorXd::Zero(dim);
  res.scale = VectorXd::Ones(dim);
  res.direction = MapDirection::pushforward;
  const std::uint64_t c0 = BasisCounter::instance().value();
  const ReferenceDensity rho{dim};

  auto build_components = [&](const VectorXd& wall) {
    std::vector<MapComponent> comps;
    int off = 0;
    for (int k = 0; k < dim; ++k) {
      VectorXd wk = wall.segment(off, sizes[k]);
      comps.push_back(
          detail::make_component(terms[k], wk, fam, cfg.quad_order));
      off += static_cast<int>(sizes[k]);
    }
    return comps;
  };

  double best_sigma = std::numeric_limits<double>::infinity();
  std::vector<MapComponent> best_comps;

  for (int iter = 0;; ++iter) {
    DensityObjective obj(cache_ptrs, target, node_weights);
    minimize(obj, w, cfg.max_opt_iters, cfg.opt_gtol);
    auto comps = build_components(w);
    ComposedMap M({TriangularMap(comps, res.shift, res.scale,
                                 MapDirection::pushforward)});
    auto rep = diagnostics(M, target, rho, Xtest,
                           quad_nodes ? &node_weights : nullptr);
    VectorXd gtmp;
    const double train = obj.value_grad(w, gtmp);
    AtmTraceRow row{iter, 0, {}, train, rep.variance_diag,
                    BasisCounter::instance().value() - c0};
    if (rep.variance_diag < best_sigma) {
      best_sigma = rep.variance_diag;
      best_comps = comps;
    }
    if (rep.variance_diag < cfg.density_stop_tol_sigma ||
        rep.trace_diag < cfg.density_stop_tol_trace) {
      res.tol_reached = true;
      res.trace.push_back(row);
      break;
    }
    int total_terms = 0;
    for (int k = 0; k < dim; ++k) total_terms += static_cast<int>(sizes[k]);
    if (total_terms >= cfg.max_terms * dim) {
      res.trace.push_back(row);
      break;
    }
    // candidate pool: capped reduced margins of every component
    std::vector<std::pair<int, MultiIndex>> cand; // (component, index)
    for (int k = 0; k < dim; ++k)
      for (auto& a : detail::capped_margin(terms[k], k + 1, cfg))
        cand.emplace_back(k, std::move(a));
    if (cand.empty()) {
      res.trace.push_back(row);
      break;
    }
    for (auto& [k, a] : cand) caches[k].add_term(a);
    // stacked extended coefficients: zeros in each component's new slots
    VectorXd w_ext = VectorXd::Zero(total_terms + cand.size());
    {
      int off_old = 0, off_new = 0;
      for (int k = 0; k < dim; ++k) {
        w_ext.segment(off_new, sizes[k]) = w.segment(off_old, sizes[k]);
        off_old += static_cast<int>(sizes[k]);
        off_new += static_cast<int>(caches[k].terms());
      }
    }
    VectorXd g_ext;
    obj.value_grad(w_ext, g_ext);
    int best_k = -1;
    std::size_t best_pos = 0;
    double best_g = -1.0;
    {
      int off = 0;
      std::vector<int> cand_seen(dim, 0);
      for (int k = 0; k < dim; ++k) {
        const int mk = static_cast<int>(sizes[k]);
        const int ck = static_cast<int>(caches[k].terms()) - mk;
        for (int c = 0; c < ck; ++c) {
          const double g = std::abs(g_ext[off + mk + c]);
          if (g > best_g) {
            best_g = g;
            best_k = k;
            best_pos = c;
          }
        }
        off += mk + ck;
      }
    }
    // locate the chosen index within the flat candidate list
    MultiIndex chosen;
    {
      std::size_t seen = 0;
      for (auto& [k, a] : cand) {
        if (k == best_k) {
          if (seen == best_pos) {
            chosen = a;
            break;
          }
          ++seen;
        }
      }
    }
    for (int k = 0; k < dim; ++k) caches[k].truncate(sizes[k]);
    row.selected = chosen;
    row.component = best_k + 1;
    res.trace.push_back(row);
    terms[best_k].push_back(chosen);
    caches[best_k].add_term(chosen);
    // grow the stacked coefficient vector in place
    VectorXd w_new = VectorXd::Zero(w.size() + 1);
    {
      int off_old = 0, off_new = 0;
      for (int k = 0; k < dim; ++k) {
        w_new.segment(off_new, sizes[k]) = w.segment(off_old, sizes[k]);
        off_old += static_cast<int>(sizes[k]);
        off_new += static_cast<int>(sizes[k]) + (k == best_k ? 1 : 0);
      }
    }
    sizes[best_k] += 1;
    w = std::move(w_new);
  }
  res.components = best_comps;
  return res;
}

} // namespace tmap
