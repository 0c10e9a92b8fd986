#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace tmap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Chain {
  MatrixXd states;   // n x d
  VectorXd logpost;  // n
  int accepted = 0;

  double acceptance_rate() const {
    return states.rows() > 1
               ? static_cast<double>(accepted) / (states.rows() - 1)
               : 0.0;
  }
};

//! Symmetric Gaussian-proposal Metropolis-Hastings with fixed covariance.
//! The caller supplies the adaptive-Metropolis scale (2.4^2/d) Sigma; no
//! in-chain adaptation, so the chain stays Markov.
inline Chain mh_chain(const std::function<double(const VectorXd&)>& logpost,
                      const VectorXd& theta0, const MatrixXd& Sigma, int n,
                      std::uint64_t seed) {
  const int d = static_cast<int>(theta0.size());
  if (Sigma.rows() != d || Sigma.cols() != d)
    throw std::invalid_argument("proposal covariance shape mismatch");
  Eigen::LLT<MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("proposal covariance not positive definite");
  const MatrixXd L = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Chain chain;
  chain.states.resize(n, d);
  chain.logpost.resize(n);
  VectorXd theta = theta0;
  double lp = logpost(theta);
  if (!std::isfinite(lp))
    throw std::invalid_argument("log-posterior not finite at start");
  VectorXd z(d);
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      for (int j = 0; j < d; ++j) z[j] = normal(rng);
      VectorXd prop = theta + L * z;
      const double lp_prop = logpost(prop);
      if (std::log(unif(rng)) < lp_prop - lp) {
        theta = prop;
        lp = lp_prop;
        ++chain.accepted;
      }
    }
    chain.states.row(i) = theta.transpose();
    chain.logpost[i] = lp;
  }
  return chain;
}

//! Integrated autocorrelation time 1 + 2 sum of autocorrelations with the
//! adaptive truncation window: the first window M with M >= 5 * IACT(M).
inline double iact(const VectorXd& series) {
  const int n = static_cast<int>(series.size());
  if (n < 1000) throw std::invalid_argument("series too short for IACT");
  const double mean = series.mean();
  VectorXd c = series.array() - mean;
  const double var = c.squaredNorm() / n;
  if (!(var > 0.0)) throw std::invalid_argument("degenerate constant series");
  double tau = 1.0;
  for (int m = 1; m < n / 2; ++m) {
    double acov = 0.0;
    for (int i = 0; i < n - m; ++i) acov += c[i] * c[i + m];
    acov /= n;
    tau += 2.0 * acov / var;
    if (m >= 5.0 * tau) break;
  }
  return tau;
}

struct MarginalSummary {
  double mean = 0.0, stddev = 0.0;
  double p5 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p95 = 0.0;
};

struct ComparisonReport {
  std::vector<MarginalSummary> tm, mcmc;
  std::vector<double> mean_diff_se; // |mean diff| in combined standard errors
  bool agree = true;                // all marginal means within 3 combined SE
};

namespace detail {
inline MarginalSummary summarize(const VectorXd& col) {
  MarginalSummary s;
  const int n = static_cast<int>(col.size());
  s.mean = col.mean();
  s.stddev = std::sqrt((col.array() - s.mean).square().sum() / (n - 1));
  std::vector<double> v(col.data(), col.data() + n);
  std::sort(v.begin(), v.end());
  auto pct = [&](double p) {
    const double pos = p * (n - 1);
    const int lo = static_cast<int>(pos);
    const int hi = std::min(lo + 1, n - 1);
    return (1.0 - (pos - lo)) * v[lo] + (pos - lo) * v[hi];
  };
  s.p5 = pct(0.05);
  s.p25 = pct(0.25);
  s.p50 = pct(0.50);
  s.p75 = pct(0.75);
  s.p95 = pct(0.95);
  return s;
}
} // namespace detail

//! Per-marginal moments/percentiles for TM and MCMC samples plus mean
//! differences in units of combined Monte-Carlo standard error; the MCMC
//! standard error uses the IACT-deflated effective sample size.
inline ComparisonReport compare_posteriors(const MatrixXd& tm_samples,
                                           const MatrixXd& mcmc_states) {
  if (tm_samples.cols() != mcmc_states.cols())
    throw std::invalid_argument("dimension mismatch");
  ComparisonReport rep;
  const int d = static_cast<int>(tm_samples.cols());
  for (int j = 0; j < d; ++j) {
    auto st = detail::summarize(tm_samples.col(j));
    auto sm = detail::summarize(mcmc_states.col(j));
    double tau = 1.0;
    try {
      tau = std::max(1.0, iact(mcmc_states.col(j)));
    } catch (const std::invalid_argument&) {
      tau = 1.0;
    }
    const double se_tm = st.stddev / std::sqrt(double(tm_samples.rows()));
    const double se_mc =
        sm.stddev / std::sqrt(double(mcmc_states.rows()) / tau);
    const double se = std::sqrt(se_tm * se_tm + se_mc * se_mc);
    const double diff = std::abs(st.mean - sm.mean) / (se > 0.0 ? se : 1.0);
    rep.tm.push_back(st);
    rep.mcmc.push_back(sm);
    rep.mean_diff_se.push_back(diff);
    if (diff > 3.0) rep.agree = false;
  }
  return rep;
}

} // namespace tmap
