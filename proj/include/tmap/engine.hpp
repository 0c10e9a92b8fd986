#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tmap/atm.hpp"
#include "tmap/diagnostics.hpp"
#include "tmap/surrogate.hpp"

namespace tmap {

//! Prior over theta: log-density with gradient, both in theta coordinates.
struct PriorDensity {
  std::function<double(const VectorXd&, VectorXd*)> logpdf;
};

inline PriorDensity gaussian_prior(VectorXd mean, VectorXd std) {
  return PriorDensity{
      [mean = std::move(mean), std = std::move(std)](const VectorXd& th,
                                                     VectorXd* grad) {
        double lp = 0.0;
        if (grad) grad->resize(th.size());
        for (int j = 0; j < th.size(); ++j) {
          const double z = (th[j] - mean[j]) / std[j];
          lp += -0.5 * z * z;
          if (grad) (*grad)[j] = -z / std[j];
        }
        return lp;
      }};
}

enum class StepBranch { intermediate, recovery };

struct StepRecord {
  int t = 0;
  StepBranch branch = StepBranch::intermediate;
  bool compressed = false;
  bool compression_warning = false;
  double eps_sigma = 0.0;
  double eps_trace = 0.0;
  double train_sigma = 0.0;     // final in-training variance diagnostic
  double regression_mse = 0.0;  // held-out MSE of the compression, if any
  int atm_rounds = 0;           // adaptation rounds of the map trained here
  std::uint64_t train_cost = 0; // basis evals during map training/compression
  std::uint64_t diag_cost = 0;  // basis evals during diagnostics
  int composition_length = 0;
  int map_terms = 0;     // terms of the map trained this step
  int map_order = 0;     // max total degree of the map trained this step
  VectorXd mean;
  MatrixXd percentiles;  // 5 x n_theta rows: p5, p25, p50, p75, p95
};

struct EngineConfig {
  AtmConfig intermediate_atm;
  AtmConfig recovery_atm;
  AtmConfig regression_atm;
  double tol_sigma = 1e-3;
  double tol_trace = 3.1622776601683794e-3; // 10^-2.5
  int l_max = 5;
  bool compression_enabled = true;
  int n_diag_test = 5000;
  int n_regression_samples = 2000;
  int n_posterior_samples = 2000;
  int diag_subsample = 0; // 0 = evaluate all registered likelihood terms
  std::uint64_t seed = 1;
};

//! Online phase driver. Holds the composed posterior map, the surrogate
//! registry, and the per-step diagnostics history; never touches the
//! forward model.
class SequentialInference {
public:
  SequentialInference(PriorDensity prior, int n_theta, EngineConfig cfg)
      : prior_(std::move(prior)), n_theta_(n_theta), cfg_(std::move(cfg)) {}

  void register_surrogate(SurrogateLikelihood sur) {
    const int t = sur.step();
    surrogates_.emplace(t, std::move(sur));
  }

  int step() const { return t_; }
  const std::vector<StepRecord>& history() const { return history_; }
  const std::optional<ComposedMap>& posterior_map() const { return map_; }

  //! One Algorithm-2 step: intermediate or recovery map, then compression
  //! when the composition grows past l_max, then diagnostics of the running
  //! posterior.
  StepRecord assimilate(const VectorXd& y_t) {
    const int t = t_ + 1;
    auto it = surrogates_.find(t);
    if (it == surrogates_.end())
      throw std::runtime_error("no surrogate registered for step " +
                               std::to_string(t));
    observations_.push_back(y_t);
    StepRecord rec;
    rec.t = t;

    const bool recover_now =
        !history_.empty() && (history_.back().eps_sigma > cfg_.tol_sigma ||
                              history_.back().eps_trace > cfg_.tol_trace);
    const std::uint64_t c0 = BasisCounter::instance().value();
    std::mt19937_64 rng(derive_seed(t, 0));
    if (!recover_now) {
      rec.branch = StepBranch::intermediate;
      TargetDensity target = intermediate_target(it->second, y_t, t);
      auto res =
          train_from_density(target, n_theta_, cfg_.intermediate_atm, rng);
      note_trained_map(rec, res);
      push_map(res.map());
    } else {
      rec.branch = StepBranch::recovery;
      TargetDensity target = running_posterior_target(t, cfg_.diag_subsample);
      auto res = train_from_density(target, n_theta_, cfg_.recovery_atm, rng);
      note_trained_map(rec, res);
      map_ = ComposedMap({res.map()});
    }
    if (cfg_.compression_enabled &&
        static_cast<int>(map_->length()) > cfg_.l_max)
      compress(rec, t);
    rec.train_cost = BasisCounter::instance().value() - c0;
    rec.composition_length = static_cast<int>(map_->length());

    // diagnostics of the composed map against the running posterior
    const std::uint64_t d0 = BasisCounter::instance().value();
    {
      std::mt19937_64 drng(derive_seed(t, 1));
      MatrixXd Xtest = normal_matrix(cfg_.n_diag_test, n_theta_, drng);
      TargetDensity post = running_posterior_target(t, cfg_.diag_subsample);
      auto rep = diagnostics(*map_, post, ReferenceDensity{n_theta_}, Xtest);
      rec.eps_sigma = rep.variance_diag;
      rec.eps_trace = rep.trace_diag;
    }
    rec.diag_cost = BasisCounter::instance().value() - d0;

    summarize_posterior(rec);
    t_ = t;
    history_.push_back(rec);
    return rec;
  }

  //! n pushforward samples theta_i = T_t(eps_i); deterministic given seed.
  MatrixXd sample_posterior(int n, std::uint64_t seed) const {
    if (n < 1) throw std::invalid_argument("need n >= 1");
    if (!map_) throw std::runtime_error("no posterior map yet");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    MatrixXd out(n, n_theta_);
    VectorXd eps(n_theta_);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n_theta_; ++j) eps[j] = normal(rng);
      out.row(i) = map_->forward(eps).transpose();
    }
    return out;
  }

  //! Unnormalized running posterior in theta coordinates (all registered
  //! likelihood terms plus the prior); used for diagnostics and recovery.
  TargetDensity running_posterior_target(int t, int subsample = 0) const {
    std::vector<int> steps;
    for (int k = 1; k <= t; ++k) steps.push_back(k);
    double scale = 1.0;
    if (subsample > 0 && subsample < t) {
      std::mt19937_64 rng(derive_seed(t, 2));
      std::shuffle(steps.begin(), steps.end(), rng);
      steps.resize(subsample);
      scale = static_cast<double>(t) / subsample;
    }
    return TargetDensity{[this, steps, scale](const VectorXd& th,
                                              VectorXd* grad) {
      VectorXd gp;
      double lp = prior_.logpdf(th, grad ? &gp : nullptr);
      if (grad) *grad = gp;
      double ll = 0.0;
      for (int k : steps) {
        const auto& sur = surrogates_.at(k);
        ll += sur.loglik(th, observations_[k - 1]);
        if (grad) *grad += scale * sur.grad_loglik(th, observations_[k - 1]);
      }
      return lp + scale * ll;
    }};
  }

private:
  TargetDensity intermediate_target(const SurrogateLikelihood& sur,
                                    const VectorXd& y_t, int t) const {
    if (t == 1 || !map_) {
      // first step: T_1 pushes rho to the full posterior pi(theta | y_1)
      return TargetDensity{[this, &sur, y_t](const VectorXd& th,
                                             VectorXd* grad) {
        VectorXd gp;
        double lp = prior_.logpdf(th, grad ? &gp : nullptr);
        lp += sur.loglik(th, y_t);
        if (grad) *grad = gp + sur.grad_loglik(th, y_t);
        return lp;
      }};
    }
    // t > 1: T_t pushes rho to pi(y_t | T_{t-1}(x)) rho(x)
    const ComposedMap* prev = &*map_;
    const ReferenceDensity rho{n_theta_};
    return TargetDensity{[this, &sur, y_t, prev, rho](const VectorXd& x,
                                                      VectorXd* grad) {
      if (!grad) {
        const VectorXd th = prev->forward(x);
        double lp = sur.loglik(th, y_t);
        std::vector<double> xb(x.data(), x.data() + x.size());
        return lp + rho.log_density(xb);
      }
      VectorXd th, gld;
      MatrixXd J;
      double ld;
      prev->forward_full(x, th, J, ld, gld);
      const double lp = sur.loglik(th, y_t);
      const VectorXd gth = sur.grad_loglik(th, y_t);
      *grad = J.transpose() * gth - x;
      std::vector<double> xb(x.data(), x.data() + x.size());
      return lp + rho.log_density(xb);
    }};
  }

  void push_map(TriangularMap T) {
    if (!map_) {
      map_ = ComposedMap({std::move(T)});
      return;
    }
    auto maps = map_->maps();
    maps.push_back(std::move(T));
    map_ = ComposedMap(std::move(maps));
  }

  void compress(StepRecord& rec, int t) {
    std::mt19937_64 rng(derive_seed(t, 3));
    MatrixXd X = normal_matrix(cfg_.n_regression_samples, n_theta_, rng);
    MatrixXd Z(X.rows(), n_theta_);
    for (int i = 0; i < X.rows(); ++i)
      Z.row(i) = map_->forward(X.row(i).transpose()).transpose();
    auto res = train_regression(X, Z, cfg_.regression_atm);
    if (!res.trace.empty()) rec.regression_mse = res.trace.back().val_metric;
    if (res.tol_reached) {
      map_ = ComposedMap({res.map()});
      rec.compressed = true;
    } else {
      rec.compression_warning = true;
    }
  }

  void note_trained_map(StepRecord& rec, const AtmResult& res) const {
    int terms = 0, order = 0;
    for (const auto& c : res.components) {
      terms += static_cast<int>(c.index_set().size());
      order = std::max(order, c.index_set().max_total_order());
    }
    rec.map_terms = terms;
    rec.map_order = order;
    if (!res.trace.empty()) {
      rec.train_sigma = res.trace.back().val_metric;
      rec.atm_rounds = res.trace.back().iteration + 1;
    }
  }

  void summarize_posterior(StepRecord& rec) const {
    MatrixXd S = sample_posterior(cfg_.n_posterior_samples,
                                  derive_seed(rec.t, 4));
    const int n = static_cast<int>(S.rows());
    rec.mean = S.colwise().mean().transpose();
    rec.percentiles.resize(5, n_theta_);
    const double ps[5] = {0.05, 0.25, 0.50, 0.75, 0.95};
    for (int j = 0; j < n_theta_; ++j) {
      std::vector<double> col(S.col(j).data(), S.col(j).data() + n);
      std::sort(col.begin(), col.end());
      for (int p = 0; p < 5; ++p) {
        const double pos = ps[p] * (n - 1);
        const int lo = static_cast<int>(pos);
        const double frac = pos - lo;
        const int hi = std::min(lo + 1, n - 1);
        rec.percentiles(p, j) = (1.0 - frac) * col[lo] + frac * col[hi];
      }
    }
  }

  std::uint64_t derive_seed(int t, int purpose) const {
    std::uint64_t h = cfg_.seed;
    h ^= 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(t) * 0x100000001b3ull;
    h *= 0xff51afd7ed558ccdull;
    h ^= static_cast<std::uint64_t>(purpose) * 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    return h;
  }

  static MatrixXd normal_matrix(int n, int d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) X(i, j) = normal(rng);
    return X;
  }

  PriorDensity prior_;
  int n_theta_;
  EngineConfig cfg_;
  std::map<int, SurrogateLikelihood> surrogates_;
  std::vector<VectorXd> observations_;
  std::optional<ComposedMap> map_;
  std::vector<StepRecord> history_;
  int t_ = 0;
};

} // namespace tmap
