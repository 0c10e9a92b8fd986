#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "tmap/counters.hpp"
#include "tmap/indexset.hpp"
#include "tmap/polybasis.hpp"
#include "tmap/quadrature.hpp"
#include "tmap/softplus.hpp"
#include "tmap/transport.hpp"

namespace tmap {

//! Cached evaluation of one rectified component over a fixed sample matrix.
//!
//! For fixed samples the basis values at the quadrature nodes never change,
//! so each optimizer iteration reduces to dense matrix-vector products.
//! Columns are appended when the ATM loop adds candidate terms and truncated
//! when candidates are discarded.
class ComponentCache {
public:
  //! X: n x k sample block (already standardized).
  ComponentCache(MatrixXd X, BasisFamily fam, int quad_order)
      : X_(std::move(X)), fam_(fam), q_(quad_order),
        k_(static_cast<int>(X_.cols())), n_(static_cast<int>(X_.rows())) {
    const auto& rule = gauss_legendre(q_);
    const int ord = fam_.max_order;
    // per-coordinate 1-d basis value tables for the prefix variables
    prefix_v_.resize(k_ - 1);
    for (int j = 0; j < k_ - 1; ++j) {
      prefix_v_[j].resize(n_, ord + 1);
      Basis1dTable t;
      for (int i = 0; i < n_; ++i) {
        t.fill(fam_, X_(i, j), ord);
        for (int o = 0; o <= ord; ++o) prefix_v_[j](i, o) = t.v[o];
      }
    }
    // basis derivative tables for the diagonal variable at the quadrature
    // nodes (q per row) and the endpoint (last row slot)
    diag_d_.resize(n_ * (q_ + 1), ord + 1);
    qw_.resize(n_ * q_);
    Basis1dTable t;
    for (int i = 0; i < n_; ++i) {
      const double xk = X_(i, k_ - 1);
      for (int j = 0; j < q_; ++j) {
        const double node = 0.5 * xk * (rule.nodes[j] + 1.0);
        t.fill(fam_, node, ord);
        for (int o = 0; o <= ord; ++o) diag_d_(i * (q_ + 1) + j, o) = t.d[o];
        qw_[i * q_ + j] = 0.5 * xk * rule.weights[j];
      }
      t.fill(fam_, xk, ord);
      for (int o = 0; o <= ord; ++o) diag_d_(i * (q_ + 1) + q_, o) = t.d[o];
    }
    basis0_.resize(ord + 1);
    Basis1dTable t0;
    t0.fill(fam_, 0.0, ord);
    for (int o = 0; o <= ord; ++o) basis0_[o] = t0.v[o];
  }

  int n() const { return n_; }
  int k() const { return k_; }
  std::size_t terms() const { return terms_.size(); }
  const std::vector<MultiIndex>& term_list() const { return terms_; }

  void add_term(const MultiIndex& a) {
    if (static_cast<int>(a.size()) != k_)
      throw std::invalid_argument("term dimension mismatch");
    VectorXd pre = VectorXd::Ones(n_);
    for (int j = 0; j < k_ - 1; ++j) pre.array() *= prefix_v_[j].col(a[j]).array();
    const int ak = a[k_ - 1];
    append_col(B0_, pre * basis0_[ak]);
    VectorXd dcol(n_ * q_), decol(n_);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < q_; ++j)
        dcol[i * q_ + j] = pre[i] * diag_d_(i * (q_ + 1) + j, ak);
      decol[i] = pre[i] * diag_d_(i * (q_ + 1) + q_, ak);
    }
    append_col(D_, dcol);
    append_col(Dend_, decol);
    terms_.push_back(a);
  }

  void set_terms(const std::vector<MultiIndex>& ts) {
    terms_.clear();
    B0_.resize(n_, 0);
    D_.resize(n_ * q_, 0);
    Dend_.resize(n_, 0);
    for (const auto& a : ts) add_term(a);
  }

  void truncate(std::size_t m) {
    if (m > terms_.size()) throw std::invalid_argument("truncate grows cache");
    terms_.resize(m);
    B0_.conservativeResize(Eigen::NoChange, m);
    D_.conservativeResize(Eigen::NoChange, m);
    Dend_.conservativeResize(Eigen::NoChange, m);
  }

  //! Evaluates S_k and log d_k S_k at every sample; caches activations for
  //! a subsequent backward() with the same coefficients.
  void forward(const VectorXd& w) {
    if (w.size() != static_cast<Eigen::Index>(terms_.size()))
      throw std::invalid_argument("coefficient size mismatch");
    act_ = D_ * w;
    dend_ = Dend_ * w;
    value_ = B0_ * w;
    for (int i = 0; i < n_; ++i) {
      double s = 0.0;
      for (int j = 0; j < q_; ++j) {
        const int r = i * q_ + j;
        s += qw_[r] * softplus(act_[r]);
      }
      value_[i] += s;
    }
    logdk_.resize(n_);
    for (int i = 0; i < n_; ++i) logdk_[i] = log_softplus(dend_[i]);
    BasisCounter::instance().add(static_cast<std::uint64_t>(terms_.size()) *
                                 (q_ + 2) * n_);
  }

  const VectorXd& value() const { return value_; }
  const VectorXd& logdk() const { return logdk_; }

  //! Accumulates dJ/dw for J = sum_i a_i * value_i + b_i * logdk_i,
  //! using the activations of the last forward().
  void backward(const VectorXd& a, const VectorXd& b, VectorXd& g) const {
    g.noalias() = B0_.transpose() * a;
    VectorXd node_coeff(n_ * q_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < q_; ++j) {
        const int r = i * q_ + j;
        node_coeff[r] = a[i] * qw_[r] * softplus_deriv(act_[r]);
      }
    g.noalias() += D_.transpose() * node_coeff;
    VectorXd end_coeff(n_);
    for (int i = 0; i < n_; ++i)
      end_coeff[i] = b[i] * softplus_deriv(dend_[i]) / softplus(dend_[i]);
    g.noalias() += Dend_.transpose() * end_coeff;
  }

private:
  static void append_col(MatrixXd& M, const VectorXd& col) {
    M.conservativeResize(col.size(), M.cols() + 1);
    M.col(M.cols() - 1) = col;
  }

  MatrixXd X_;
  BasisFamily fam_;
  int q_, k_, n_;
  std::vector<MatrixXd> prefix_v_;
  MatrixXd diag_d_;
  VectorXd qw_, basis0_;

  std::vector<MultiIndex> terms_;
  MatrixXd B0_, D_, Dend_;
  VectorXd act_, dend_, value_, logdk_;
};

} // namespace tmap
