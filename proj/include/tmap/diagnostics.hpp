#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "tmap/training.hpp"
#include "tmap/transport.hpp"

namespace tmap {

struct DiagnosticsReport {
  double variance_diag = 0.0;
  double trace_diag = 0.0;
  int n_test = 0;
};

//! Variance diagnostic: half the empirical variance over reference test
//! points of the log-ratio between the pulled-back target and the
//! reference. Constant normalization offsets cancel in the variance.
//! Test points are either Monte-Carlo draws from rho (weights == nullptr,
//! uniform weighting) or deterministic nodes with normalized rho-weighted
//! quadrature weights.
inline double variance_diagnostic(const ComposedMap& M,
                                  const TargetDensity& target,
                                  const ReferenceDensity& rho,
                                  const MatrixXd& Xtest,
                                  const VectorXd* weights = nullptr) {
  const int n = static_cast<int>(Xtest.rows());
  if (n < 2) throw std::invalid_argument("need at least 2 test samples");
  if (weights && weights->size() != n)
    throw std::invalid_argument("weight count mismatch");
  VectorXd r(n), s;
  std::vector<double> xbuf(M.dim());
  for (int i = 0; i < n; ++i) {
    VectorXd x = Xtest.row(i).transpose();
    double logdet;
    M.forward_logdet(x, s, logdet);
    for (int j = 0; j < M.dim(); ++j) xbuf[j] = x[j];
    const double ri =
        target.logpdf(s, nullptr) + logdet - rho.log_density(xbuf);
    if (!std::isfinite(ri))
      throw std::runtime_error("non-finite log ratio in variance diagnostic");
    r[i] = ri;
  }
  if (!weights) {
    const double mean = r.mean();
    return 0.5 * (r.array() - mean).square().sum() / n;
  }
  const double mean = weights->dot(r);
  return 0.5 * weights->dot((r.array() - mean).square().matrix());
}

//! Trace diagnostic: mean of half the squared norm of the gradient of the
//! same log-ratio; an upper-bound estimate of the reverse KL divergence.
inline double trace_diagnostic(const ComposedMap& M,
                               const TargetDensity& target,
                               const ReferenceDensity& rho,
                               const MatrixXd& Xtest,
                               const VectorXd* weights = nullptr) {
  const int n = static_cast<int>(Xtest.rows());
  if (n < 1) throw std::invalid_argument("need test samples");
  if (weights && weights->size() != n)
    throw std::invalid_argument("weight count mismatch");
  const int d = M.dim();
  double acc = 0.0;
  VectorXd s, grad_logdet, gt(d);
  MatrixXd J;
  for (int i = 0; i < n; ++i) {
    VectorXd x = Xtest.row(i).transpose();
    double logdet;
    M.forward_full(x, s, J, logdet, grad_logdet);
    target.logpdf(s, &gt);
    // grad of [log pi_bar(M(x)) + logdet - log rho(x)]; grad log rho = -x
    VectorXd gr = J.transpose() * gt + grad_logdet + x;
    if (!gr.allFinite())
      throw std::runtime_error("non-finite gradient in trace diagnostic");
    acc += (weights ? n * (*weights)[i] : 1.0) * gr.squaredNorm();
  }
  return acc / (2.0 * n);
}

inline DiagnosticsReport diagnostics(const ComposedMap& M,
                                     const TargetDensity& target,
                                     const ReferenceDensity& rho,
                                     const MatrixXd& Xtest,
                                     const VectorXd* weights = nullptr) {
  DiagnosticsReport rep;
  rep.variance_diag = variance_diagnostic(M, target, rho, Xtest, weights);
  rep.trace_diag = trace_diagnostic(M, target, rho, Xtest, weights);
  rep.n_test = static_cast<int>(Xtest.rows());
  return rep;
}

} // namespace tmap
