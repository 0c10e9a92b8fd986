#pragma once

#include <Eigen/Dense>
#include <random>
#include <stdexcept>
#include <vector>

#include "tmap/atm.hpp"
#include "tmap/models.hpp"
#include "tmap/transport.hpp"

namespace tmap {

//! Surrogate likelihood log pi(y_t | theta): the lower (y) block of a joint
//! triangular map trained on (theta, y_t) samples, theta ordered first so
//! the block pulls rho(y) back to the conditional.
class SurrogateLikelihood {
public:
  SurrogateLikelihood(TriangularMap joint, int n_theta, int n_y, int step)
      : joint_(std::move(joint)), n_theta_(n_theta), n_y_(n_y), step_(step) {
    if (joint_.dim() != n_theta_ + n_y_)
      throw std::invalid_argument("joint map dimension mismatch");
    if (joint_.direction() != MapDirection::pullback)
      throw std::invalid_argument("surrogate map must be pullback-trained");
  }

  int n_theta() const { return n_theta_; }
  int n_y() const { return n_y_; }
  int step() const { return step_; }
  const TriangularMap& joint_map() const { return joint_; }

  //! log of the pullback of rho(y) through the y-block with theta clamped.
  double loglik(const VectorXd& theta, const VectorXd& y) const {
    std::vector<double> z = standardized(theta, y);
    constexpr double half_log_2pi = 0.91893853320467274178;
    double ll = 0.0;
    const auto& comps = joint_.components();
    for (int k = n_theta_; k < n_theta_ + n_y_; ++k) {
      auto e = comps[k].eval(std::span<const double>(z.data(), k + 1));
      ll += -0.5 * e.value * e.value - half_log_2pi + std::log(e.dk) -
            std::log(joint_.scale()[k]);
    }
    return ll;
  }

  //! Gradient of loglik with respect to theta: the theta columns of the
  //! y-block Jacobian chained with the reference score and the diagonal
  //! log-derivative terms.
  VectorXd grad_loglik(const VectorXd& theta, const VectorXd& y) const {
    std::vector<double> z = standardized(theta, y);
    VectorXd g = VectorXd::Zero(n_theta_);
    const auto& comps = joint_.components();
    VectorXd dval, ddk;
    for (int k = n_theta_; k < n_theta_ + n_y_; ++k) {
      std::span<const double> zk(z.data(), k + 1);
      auto e = comps[k].eval(zk);
      comps[k].input_grad(zk, dval, ddk);
      for (int j = 0; j < n_theta_; ++j)
        g[j] += (-e.value * dval[j] + ddk[j] / e.dk) / joint_.scale()[j];
    }
    return g;
  }

  //! Samples y | theta by inverting the y-block on fresh reference draws.
  VectorXd sample_y_given_theta(const VectorXd& theta,
                                std::mt19937_64& rng) const {
    std::vector<double> z(n_theta_ + n_y_);
    for (int j = 0; j < n_theta_; ++j)
      z[j] = (theta[j] - joint_.shift()[j]) / joint_.scale()[j];
    std::normal_distribution<double> normal;
    const auto& comps = joint_.components();
    VectorXd y(n_y_);
    for (int k = n_theta_; k < n_theta_ + n_y_; ++k) {
      const double r = normal(rng);
      std::span<const double> prefix(z.data(), k);
      z[k] = comps[k].invert(prefix, r);
      y[k - n_theta_] = joint_.shift()[k] + joint_.scale()[k] * z[k];
    }
    return y;
  }

private:
  std::vector<double> standardized(const VectorXd& theta,
                                   const VectorXd& y) const {
    if (theta.size() != n_theta_ || y.size() != n_y_)
      throw std::invalid_argument("surrogate input dimension mismatch");
    std::vector<double> z(n_theta_ + n_y_);
    for (int j = 0; j < n_theta_; ++j)
      z[j] = (theta[j] - joint_.shift()[j]) / joint_.scale()[j];
    for (int j = 0; j < n_y_; ++j)
      z[n_theta_ + j] =
          (y[j] - joint_.shift()[n_theta_ + j]) / joint_.scale()[n_theta_ + j];
    return z;
  }

  TriangularMap joint_;
  int n_theta_, n_y_, step_;
};

//! Algorithm step 4: train the joint triangular map from samples and keep
//! the y-block as the surrogate likelihood.
inline SurrogateLikelihood build_surrogate(const JointSampleSet& joint,
                                           const AtmConfig& cfg) {
  const int n_theta = static_cast<int>(joint.theta.cols());
  const int n_y = static_cast<int>(joint.y.cols());
  MatrixXd X(joint.theta.rows(), n_theta + n_y);
  X.leftCols(n_theta) = joint.theta;
  X.rightCols(n_y) = joint.y;
  auto res = train_from_samples(X, cfg); // throws on degenerate columns
  return SurrogateLikelihood(res.map(), n_theta, n_y, joint.step);
}

} // namespace tmap
