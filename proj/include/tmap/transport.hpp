#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "tmap/counters.hpp"
#include "tmap/indexset.hpp"
#include "tmap/polybasis.hpp"
#include "tmap/quadrature.hpp"
#include "tmap/softplus.hpp"

namespace tmap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

//! Standard normal reference density (product form).
struct ReferenceDensity {
  int dim = 1;

  double log_density(std::span<const double> x) const {
    constexpr double log2pi = 1.8378770664093454836;
    double s = -0.5 * log2pi * dim;
    for (double v : x) s -= 0.5 * v * v;
    return s;
  }

  void grad_log_density(std::span<const double> x, VectorXd& g) const {
    g.resize(dim);
    for (int j = 0; j < dim; ++j) g[j] = -x[j];
  }
};

struct ComponentEval {
  double value = 0.0;
  double dk = 0.0; // diagonal partial, strictly positive by construction
};

//! One monotone KR component S_k built with the rectifier: an arbitrary
//! polynomial base function f is turned into a function strictly increasing
//! in its last variable by integrating softplus(d_k f) from 0 to x_k with a
//! fixed-order Gauss-Legendre rule.
class MapComponent {
public:
  MapComponent(MultiIndexSet aset, VectorXd coeffs, BasisFamily family,
               int quad_order = 32)
      : aset_(std::move(aset)), w_(std::move(coeffs)), fam_(family),
        quad_order_(quad_order) {
    if (static_cast<std::size_t>(w_.size()) != aset_.size())
      throw std::invalid_argument("coefficient count != index set size");
    if (quad_order_ < 1) throw std::invalid_argument("quad_order must be >= 1");
    if (fam_.max_order < aset_.max_order())
      fam_.max_order = aset_.max_order();
  }

  //! Identity-in-x_k component: f = g^{-1}(1) * x_k.
  static MapComponent identity(int k, BasisFamily family, int quad_order = 32) {
    MultiIndex zero(k, 0), lin(k, 0);
    lin[k - 1] = 1;
    MultiIndexSet aset(k, {zero, lin});
    VectorXd w = VectorXd::Zero(2);
    // members sorted lex: zero first, then lin
    w[1] = softplus_inverse(1.0);
    return MapComponent(std::move(aset), std::move(w), family, quad_order);
  }

  int dim() const { return aset_.dim(); }
  const MultiIndexSet& index_set() const { return aset_; }
  const VectorXd& coeffs() const { return w_; }
  const BasisFamily& family() const { return fam_; }
  int quad_order() const { return quad_order_; }

  ComponentEval eval(std::span<const double> x) const {
    check_input(x);
    const int k = dim();
    const auto& rule = gauss_legendre(quad_order_);
    Workspace ws;
    prepare_prefix(x, ws);

    double f0 = 0.0, dfk_end = 0.0;
    {
      Basis1dTable tk0, tkx;
      tk0.fill(fam_, 0.0, aset_.max_order());
      tkx.fill(fam_, x[k - 1], aset_.max_order());
      for (std::size_t m = 0; m < aset_.size(); ++m) {
        const int ak = aset_[m][k - 1];
        f0 += w_[m] * ws.pre_val[m] * tk0.v[ak];
        dfk_end += w_[m] * ws.pre_val[m] * tkx.d[ak];
      }
    }
    double integral = 0.0;
    const double half = 0.5 * x[k - 1];
    Basis1dTable tk;
    for (int q = 0; q < quad_order_; ++q) {
      const double t = half * (rule.nodes[q] + 1.0);
      tk.fill(fam_, t, aset_.max_order());
      double dfk = 0.0;
      for (std::size_t m = 0; m < aset_.size(); ++m)
        dfk += w_[m] * ws.pre_val[m] * tk.d[aset_[m][k - 1]];
      integral += rule.weights[q] * softplus(dfk);
    }
    BasisCounter::instance().add(aset_.size() * (quad_order_ + 2));
    return {f0 + half * integral, softplus(dfk_end)};
  }

  //! Root-find x_k with S_k(prefix, x_k) = z; monotone bracket expansion
  //! then safeguarded Newton/bisection, residual tolerance 1e-10.
  double invert(std::span<const double> prefix, double z) const {
    if (!std::isfinite(z)) throw std::invalid_argument("non-finite target");
    const int k = dim();
    if (static_cast<int>(prefix.size()) != k - 1)
      throw std::invalid_argument("prefix dimension mismatch");
    std::vector<double> x(prefix.begin(), prefix.end());
    x.push_back(0.0);
    auto value_at = [&](double xk) {
      x[k - 1] = xk;
      return eval(x);
    };
    double lo = -1.0, hi = 1.0;
    double flo = value_at(lo).value, fhi = value_at(hi).value;
    int doublings = 0;
    while (flo > z && doublings < 60) {
      lo *= 2.0;
      flo = value_at(lo).value;
      ++doublings;
    }
    while (fhi < z && doublings < 60) {
      hi *= 2.0;
      fhi = value_at(hi).value;
      ++doublings;
    }
    if (flo > z || fhi < z)
      throw std::runtime_error("inversion bracket failure");
    double xk = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      auto e = value_at(xk);
      const double r = e.value - z;
      if (std::abs(r) < 1e-10) return xk;
      if (r > 0.0)
        hi = xk;
      else
        lo = xk;
      double step = r / e.dk;
      double next = xk - step;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      xk = next;
    }
    return xk;
  }

  //! d value / d w and d log(dk) / d w, including zero-coefficient terms.
  void coeff_grad(std::span<const double> x, VectorXd& dvalue,
                  VectorXd& dlogdk) const {
    check_input(x);
    const int k = dim();
    const std::size_t m = aset_.size();
    const auto& rule = gauss_legendre(quad_order_);
    Workspace ws;
    prepare_prefix(x, ws);

    dvalue.setZero(m);
    dlogdk.setZero(m);
    Basis1dTable tk0, tkx, tk;
    tk0.fill(fam_, 0.0, aset_.max_order());
    tkx.fill(fam_, x[k - 1], aset_.max_order());
    double dfk_end = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      dfk_end += w_[i] * ws.pre_val[i] * tkx.d[aset_[i][k - 1]];
    const double ratio = softplus_deriv(dfk_end) / softplus(dfk_end);
    for (std::size_t i = 0; i < m; ++i) {
      dvalue[i] = ws.pre_val[i] * tk0.v[aset_[i][k - 1]];
      dlogdk[i] = ratio * ws.pre_val[i] * tkx.d[aset_[i][k - 1]];
    }
    const double half = 0.5 * x[k - 1];
    for (int q = 0; q < quad_order_; ++q) {
      const double t = half * (rule.nodes[q] + 1.0);
      tk.fill(fam_, t, aset_.max_order());
      double dfk = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        dfk += w_[i] * ws.pre_val[i] * tk.d[aset_[i][k - 1]];
      const double gp = softplus_deriv(dfk);
      const double c = half * rule.weights[q] * gp;
      for (std::size_t i = 0; i < m; ++i)
        dvalue[i] += c * ws.pre_val[i] * tk.d[aset_[i][k - 1]];
    }
    BasisCounter::instance().add(m * (quad_order_ + 2));
  }

  //! Gradients of value and of dk with respect to the input variables.
  //! The prefix dependence differentiates under the integral sign.
  void input_grad(std::span<const double> x, VectorXd& dval_dx,
                  VectorXd& ddk_dx) const {
    check_input(x);
    const int k = dim();
    const std::size_t m = aset_.size();
    const auto& rule = gauss_legendre(quad_order_);
    Workspace ws;
    prepare_prefix(x, ws);
    prepare_prefix_derivs(x, ws);

    dval_dx.setZero(k);
    ddk_dx.setZero(k);
    Basis1dTable tk0, tkx, tk;
    tk0.fill(fam_, 0.0, aset_.max_order());
    tkx.fill(fam_, x[k - 1], aset_.max_order());

    double dfk_end = 0.0, ddfk_end = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const int ak = aset_[i][k - 1];
      dfk_end += w_[i] * ws.pre_val[i] * tkx.d[ak];
      ddfk_end += w_[i] * ws.pre_val[i] * tkx.dd[ak];
    }
    const double gp_end = softplus_deriv(dfk_end);
    // diagonal entries
    dval_dx[k - 1] = softplus(dfk_end);
    ddk_dx[k - 1] = gp_end * ddfk_end;
    // d_j d_k f at the endpoint, for the dk gradient
    for (int j = 0; j < k - 1; ++j) {
      double mixed = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        mixed += w_[i] * ws.pre_dj[j][i] * tkx.d[aset_[i][k - 1]];
      ddk_dx[j] = gp_end * mixed;
    }
    // prefix gradient of f(prefix, 0)
    for (int j = 0; j < k - 1; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        s += w_[i] * ws.pre_dj[j][i] * tk0.v[aset_[i][k - 1]];
      dval_dx[j] = s;
    }
    const double half = 0.5 * x[k - 1];
    for (int q = 0; q < quad_order_; ++q) {
      const double t = half * (rule.nodes[q] + 1.0);
      tk.fill(fam_, t, aset_.max_order());
      double dfk = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        dfk += w_[i] * ws.pre_val[i] * tk.d[aset_[i][k - 1]];
      const double c = half * rule.weights[q] * softplus_deriv(dfk);
      for (int j = 0; j < k - 1; ++j) {
        double mixed = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          mixed += w_[i] * ws.pre_dj[j][i] * tk.d[aset_[i][k - 1]];
        dval_dx[j] += c * mixed;
      }
    }
    BasisCounter::instance().add(m * (quad_order_ + 2));
  }

private:
  struct Workspace {
    std::vector<Basis1dTable> tabs_;          // prefix coordinate tables
    std::vector<double> pre_val;              // prefix product per term
    std::vector<std::vector<double>> pre_dj;  // per prefix coord: d_j product
  };

  void check_input(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim())
      throw std::invalid_argument("component input dimension mismatch");
    for (double v : x)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite input");
  }

  void prepare_prefix(std::span<const double> x, Workspace& ws) const {
    const int k = dim();
    const std::size_t m = aset_.size();
    std::vector<Basis1dTable> tabs(k - 1);
    for (int j = 0; j < k - 1; ++j) tabs[j].fill(fam_, x[j], aset_.max_order());
    ws.pre_val.assign(m, 1.0);
    for (std::size_t i = 0; i < m; ++i)
      for (int j = 0; j < k - 1; ++j)
        ws.pre_val[i] *= tabs[j].v[aset_[i][j]];
    ws.tabs_ = std::move(tabs);
  }

  void prepare_prefix_derivs(std::span<const double> x, Workspace& ws) const {
    const int k = dim();
    const std::size_t m = aset_.size();
    ws.pre_dj.assign(k - 1, std::vector<double>(m, 1.0));
    for (int j = 0; j < k - 1; ++j)
      for (std::size_t i = 0; i < m; ++i) {
        double p = 1.0;
        for (int l = 0; l < k - 1; ++l)
          p *= (l == j) ? ws.tabs_[l].d[aset_[i][l]]
                        : ws.tabs_[l].v[aset_[i][l]];
        ws.pre_dj[j][i] = p;
      }
  }

  MultiIndexSet aset_;
  VectorXd w_;
  BasisFamily fam_;
  int quad_order_;
};

enum class MapDirection { pullback, pushforward };

//! Lower-triangular monotone map with a per-variable affine standardization
//! applied before the components. The standardization's log-determinant is
//! constant and enters every pullback.
class TriangularMap {
public:
  TriangularMap(std::vector<MapComponent> components, VectorXd shift,
                VectorXd scale, MapDirection direction)
      : comps_(std::move(components)), shift_(std::move(shift)),
        scale_(std::move(scale)), direction_(direction) {
    const int d = static_cast<int>(comps_.size());
    if (d < 1) throw std::invalid_argument("map needs at least one component");
    for (int k = 0; k < d; ++k)
      if (comps_[k].dim() != k + 1)
        throw std::invalid_argument("component dimension out of order");
    if (shift_.size() != d || scale_.size() != d)
      throw std::invalid_argument("standardization dimension mismatch");
    for (int k = 0; k < d; ++k)
      if (!(scale_[k] > 0.0))
        throw std::invalid_argument("standardization scale must be positive");
  }

  static TriangularMap identity(int dim, BasisFamily family = BasisFamily(5),
                                int quad_order = 32,
                                MapDirection direction =
                                    MapDirection::pushforward) {
    std::vector<MapComponent> comps;
    comps.reserve(dim);
    for (int k = 1; k <= dim; ++k)
      comps.push_back(MapComponent::identity(k, family, quad_order));
    return TriangularMap(std::move(comps), VectorXd::Zero(dim),
                         VectorXd::Ones(dim), direction);
  }

  int dim() const { return static_cast<int>(comps_.size()); }
  const std::vector<MapComponent>& components() const { return comps_; }
  const VectorXd& shift() const { return shift_; }
  const VectorXd& scale() const { return scale_; }
  MapDirection direction() const { return direction_; }

  //! S(x): standardize then apply components.
  VectorXd forward(const VectorXd& x) const {
    const int d = dim();
    std::vector<double> z(d);
    for (int k = 0; k < d; ++k) z[k] = (x[k] - shift_[k]) / scale_[k];
    VectorXd out(d);
    for (int k = 0; k < d; ++k)
      out[k] = comps_[k].eval(std::span<const double>(z.data(), k + 1)).value;
    return out;
  }

  //! Solves S(x) = r component by component.
  VectorXd inverse(const VectorXd& r) const {
    const int d = dim();
    std::vector<double> z(d);
    for (int k = 0; k < d; ++k) {
      std::span<const double> prefix(z.data(), k);
      z[k] = comps_[k].invert(prefix, r[k]);
    }
    VectorXd x(d);
    for (int k = 0; k < d; ++k) x[k] = shift_[k] + scale_[k] * z[k];
    return x;
  }

  //! log S^sharp rho (x) = log rho(S(x)) + log |det grad S(x)|.
  double log_pullback(const ReferenceDensity& rho, const VectorXd& x) const {
    const int d = dim();
    std::vector<double> z(d), s(d);
    double logdet = 0.0;
    for (int k = 0; k < d; ++k) z[k] = (x[k] - shift_[k]) / scale_[k];
    for (int k = 0; k < d; ++k) {
      auto e = comps_[k].eval(std::span<const double>(z.data(), k + 1));
      s[k] = e.value;
      logdet += std::log(e.dk) - std::log(scale_[k]);
    }
    return rho.log_density(s) + logdet;
  }

  //! Forward value plus log-determinant, one pass.
  void forward_logdet(const VectorXd& x, VectorXd& s, double& logdet) const {
    const int d = dim();
    std::vector<double> z(d);
    for (int k = 0; k < d; ++k) z[k] = (x[k] - shift_[k]) / scale_[k];
    s.resize(d);
    logdet = 0.0;
    for (int k = 0; k < d; ++k) {
      auto e = comps_[k].eval(std::span<const double>(z.data(), k + 1));
      s[k] = e.value;
      logdet += std::log(e.dk) - std::log(scale_[k]);
    }
  }

  //! Lower-triangular Jacobian dS/dx, and optionally the gradient of the
  //! log-determinant with respect to x.
  MatrixXd jacobian(const VectorXd& x, VectorXd* grad_logdet = nullptr) const {
    const int d = dim();
    std::vector<double> z(d);
    for (int k = 0; k < d; ++k) z[k] = (x[k] - shift_[k]) / scale_[k];
    MatrixXd J = MatrixXd::Zero(d, d);
    if (grad_logdet) grad_logdet->setZero(d);
    VectorXd dval, ddk;
    for (int k = 0; k < d; ++k) {
      std::span<const double> zk(z.data(), k + 1);
      comps_[k].input_grad(zk, dval, ddk);
      auto e = comps_[k].eval(zk);
      for (int j = 0; j <= k; ++j) J(k, j) = dval[j] / scale_[j];
      if (grad_logdet)
        for (int j = 0; j <= k; ++j)
          (*grad_logdet)[j] += ddk[j] / (e.dk * scale_[j]);
    }
    return J;
  }

private:
  std::vector<MapComponent> comps_;
  VectorXd shift_, scale_;
  MapDirection direction_;
};

//! Ordered composition 𝒯 = T_1 ∘ ... ∘ T_t, applied innermost-last.
//! Pushforward-trained members are evaluated forward; a pullback-trained
//! member in the stack is inverted.
class ComposedMap {
public:
  explicit ComposedMap(std::vector<TriangularMap> maps)
      : maps_(std::move(maps)) {
    if (maps_.empty()) throw std::invalid_argument("empty composition");
    for (const auto& m : maps_)
      if (m.dim() != maps_.front().dim())
        throw std::invalid_argument("composed maps must share dimension");
  }

  int dim() const { return maps_.front().dim(); }
  std::size_t length() const { return maps_.size(); }
  const std::vector<TriangularMap>& maps() const { return maps_; }

  VectorXd forward(const VectorXd& eps) const {
    VectorXd x = eps;
    for (auto it = maps_.rbegin(); it != maps_.rend(); ++it)
      x = apply(*it, x);
    return x;
  }

  //! Forward value with the accumulated pushforward log-determinant
  //! log |det grad 𝒯(eps)|.
  void forward_logdet(const VectorXd& eps, VectorXd& out,
                      double& logdet) const {
    VectorXd x = eps;
    logdet = 0.0;
    for (auto it = maps_.rbegin(); it != maps_.rend(); ++it) {
      VectorXd s;
      double ld;
      it->forward_logdet(x, s, ld);
      logdet += ld;
      x = s;
    }
    out = x;
  }

  //! Forward value, chain-rule Jacobian, log-determinant and its gradient
  //! with respect to eps.
  void forward_full(const VectorXd& eps, VectorXd& out, MatrixXd& J,
                    double& logdet, VectorXd& grad_logdet) const {
    const int d = dim();
    VectorXd x = eps;
    J = MatrixXd::Identity(d, d);
    logdet = 0.0;
    grad_logdet = VectorXd::Zero(d);
    for (auto it = maps_.rbegin(); it != maps_.rend(); ++it) {
      VectorXd gl;
      MatrixXd Jm = it->jacobian(x, &gl);
      VectorXd s;
      double ld;
      it->forward_logdet(x, s, ld);
      logdet += ld;
      grad_logdet += J.transpose() * gl;
      J = Jm * J;
      x = s;
    }
    out = x;
  }

private:
  static VectorXd apply(const TriangularMap& m, const VectorXd& x) {
    if (m.direction() == MapDirection::pushforward) return m.forward(x);
    return m.inverse(x);
  }

  std::vector<TriangularMap> maps_;
};

} // namespace tmap
