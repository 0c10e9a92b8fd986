#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "tmap/counters.hpp"

namespace tmap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

//! EM31 two-layer (ice over water) analytic configuration.
//! Default conductivities are chosen so sigma_eff(2m) is about 630 mS/m,
//! making sigma_eps = 63 a ten percent noise level; they are not taken from
//! field data and are fully configurable.
struct Em31Config {
  double sigma_ice = 20.0;    // mS/m
  double sigma_water = 2400.0; // mS/m
  double sigma_eps = 63.0;     // additive noise std, mS/m

  void validate() const {
    if (!(sigma_water > sigma_ice) || sigma_ice < 0.0)
      throw std::invalid_argument("require sigma_water > sigma_ice >= 0");
    if (!(sigma_eps > 0.0))
      throw std::invalid_argument("sigma_eps must be positive");
  }
};

//! Effective conductivity of a planar two-layer ground as a function of
//! ice thickness theta: sigma_I (1 - R) + sigma_W R, R = 1/sqrt(4 theta^2 + 1).
inline double em31_sigma_eff(double theta, const Em31Config& cfg) {
  if (theta < 0.0) throw std::invalid_argument("thickness must be >= 0");
  const double R = 1.0 / std::sqrt(4.0 * theta * theta + 1.0);
  return cfg.sigma_ice * (1.0 - R) + cfg.sigma_water * R;
}

//! d sigma_eff / d theta; strictly negative for sigma_water > sigma_ice.
inline double em31_sigma_eff_deriv(double theta, const Em31Config& cfg) {
  const double u = 4.0 * theta * theta + 1.0;
  const double dR = -4.0 * theta * std::pow(u, -1.5);
  return (cfg.sigma_water - cfg.sigma_ice) * dR;
}

//! Unnormalized additive-Gaussian log-likelihood -((y - sigma_eff)/s)^2 / 2
//! for a generic scalar forward mean h(theta); gradient via the chain rule.
inline double analytic_gaussian_loglik(double y, double h, double sigma_eps,
                                       double dh_dtheta = 0.0,
                                       double* grad = nullptr) {
  const double r = (y - h) / sigma_eps;
  if (grad) *grad = r / sigma_eps * dh_dtheta;
  return -0.5 * r * r;
}

//! Multiplicative-noise log-likelihood log[ (1/h) pi_eps(y/h) ] for
//! y = h(theta) * eps with eps ~ N(1, s^2) style densities supplied by the
//! caller; here pi_eps is Gaussian with mean mu_eps and std s_eps.
inline double multiplicative_gaussian_loglik(double y, double h, double mu_eps,
                                             double s_eps) {
  if (h == 0.0) throw std::invalid_argument("forward mean must be nonzero");
  const double z = (y / h - mu_eps) / s_eps;
  constexpr double half_log_2pi = 0.91893853320467274178;
  return -std::log(std::abs(h)) - 0.5 * z * z - std::log(s_eps) - half_log_2pi;
}

//! Synthetic tilt attenuation: sigma_eff(theta) * cos^2(alpha in degrees).
//! A smooth, monotone-in-alpha stand-in for the device-tilt physics; it is
//! not derived from the electromagnetic model.
inline double tilt_surrogate_model(double theta, double alpha_deg,
                                   const Em31Config& cfg) {
  if (alpha_deg < 0.0 || alpha_deg > 5.0)
    throw std::invalid_argument("tilt angle must lie in [0, 5] degrees");
  const double c = std::cos(alpha_deg * M_PI / 180.0);
  return em31_sigma_eff(theta, cfg) * c * c;
}

//! Modal ice-water interface z(x) = theta_0 + sum_k theta_k Psi_k(x) with
//! sine modes Psi_k(x) = sin(k pi x / L) on [0, L]. Mode shapes are a
//! configurable default, not fixed by any reference geometry.
struct InterfaceGeometry {
  int mode_count = 0;
  double domain_length = 10.0;

  double height(const VectorXd& theta, double x) const {
    if (theta.size() != mode_count + 1)
      throw std::invalid_argument("theta size must be mode_count + 1");
    if (x < 0.0 || x > domain_length)
      throw std::invalid_argument("position outside domain");
    double z = theta[0];
    for (int k = 1; k <= mode_count; ++k)
      z += theta[k] * std::sin(k * M_PI * x / domain_length);
    return z;
  }
};

//! Black-box forward model contract: deterministic given (theta, xi, eta, t).
//! xi is measurement noise input, eta the nuisance block; both are sampled
//! per row in Phase I and then discarded.
struct ForwardModel {
  int n_theta = 1;
  int n_y = 1;
  int n_noise = 1;
  int n_nuisance = 0;
  std::function<VectorXd(const VectorXd& theta, const VectorXd& xi,
                         const VectorXd& eta, int t)>
      call;

  VectorXd operator()(const VectorXd& theta, const VectorXd& xi,
                      const VectorXd& eta, int t) const {
    ModelCallCounter::instance().add(1);
    return call(theta, xi, eta, t);
  }
};

//! EM31 analytic model with additive Gaussian noise; xi[0] is the standard
//! normal noise innovation.
inline ForwardModel em31_model(const Em31Config& cfg) {
  cfg.validate();
  ForwardModel m;
  m.n_theta = 1;
  m.n_y = 1;
  m.n_noise = 1;
  m.n_nuisance = 0;
  m.call = [cfg](const VectorXd& theta, const VectorXd& xi, const VectorXd&,
                 int) {
    VectorXd y(1);
    y[0] = em31_sigma_eff(theta[0], cfg) + cfg.sigma_eps * xi[0];
    return y;
  };
  return m;
}

//! EM31 with the synthetic tilt nuisance; eta[0] is the tilt angle in
//! degrees. With include_nuisance = false the angle is frozen at zero,
//! which is the deliberately "incorrect" training model.
inline ForwardModel em31_tilt_model(const Em31Config& cfg,
                                    bool include_nuisance = true) {
  cfg.validate();
  ForwardModel m;
  m.n_theta = 1;
  m.n_y = 1;
  m.n_noise = 1;
  m.n_nuisance = 1;
  m.call = [cfg, include_nuisance](const VectorXd& theta, const VectorXd& xi,
                                   const VectorXd& eta, int) {
    const double alpha = include_nuisance ? eta[0] : 0.0;
    VectorXd y(1);
    y[0] = tilt_surrogate_model(theta[0], alpha, cfg) + cfg.sigma_eps * xi[0];
    return y;
  };
  return m;
}

//! Linear-Gaussian toy model y = theta + xi; the conjugate benchmark.
inline ForwardModel linear_gaussian_model(int n_theta = 1) {
  ForwardModel m;
  m.n_theta = n_theta;
  m.n_y = n_theta;
  m.n_noise = n_theta;
  m.n_nuisance = 0;
  m.call = [](const VectorXd& theta, const VectorXd& xi, const VectorXd&,
              int) { return VectorXd(theta + xi); };
  return m;
}

using RowSampler = std::function<VectorXd(std::mt19937_64&)>;

inline RowSampler gaussian_sampler(VectorXd mean, VectorXd std) {
  return [mean = std::move(mean), std = std::move(std)](std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    VectorXd x(mean.size());
    for (int j = 0; j < x.size(); ++j) x[j] = mean[j] + std[j] * n(rng);
    return x;
  };
}

inline RowSampler standard_normal_sampler(int dim) {
  return gaussian_sampler(VectorXd::Zero(dim), VectorXd::Ones(dim));
}

inline RowSampler uniform_sampler(double lo, double hi, int dim = 1) {
  return [lo, hi, dim](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    VectorXd x(dim);
    for (int j = 0; j < dim; ++j) x[j] = u(rng);
    return x;
  };
}

//! Row-aligned joint samples (theta_i, y_i) at one assimilation step.
struct JointSampleSet {
  MatrixXd theta;
  MatrixXd y;
  int step = 0;
  std::uint64_t seed = 0;
  int skipped = 0; // rows dropped due to model failure
};

//! Algorithm steps 1-3: draw (theta, xi, eta), push through the model,
//! discard nuisance draws. Per-row RNG streams keyed by (seed, t, row) make
//! the output deterministic under any parallel schedule.
inline JointSampleSet generate_joint_samples(
    const ForwardModel& model, const RowSampler& proposal,
    const RowSampler& noise, const RowSampler& nuisance, int t, int n,
    std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one sample");
  JointSampleSet out;
  out.step = t;
  out.seed = seed;
  out.theta.resize(n, model.n_theta);
  out.y.resize(n, model.n_y);
  int rows = 0;
  for (int i = 0; i < n; ++i) {
    std::seed_seq sq{static_cast<unsigned long long>(seed),
                     static_cast<unsigned long long>(t),
                     static_cast<unsigned long long>(i)};
    std::mt19937_64 rng(sq);
    const VectorXd th = proposal(rng);
    const VectorXd xi = noise(rng);
    const VectorXd eta = model.n_nuisance > 0 ? nuisance(rng) : VectorXd();
    try {
      const VectorXd y = model(th, xi, eta, t);
      out.theta.row(rows) = th.transpose();
      out.y.row(rows) = y.transpose();
      ++rows;
    } catch (const std::exception&) {
      ++out.skipped;
    }
  }
  out.theta.conservativeResize(rows, Eigen::NoChange);
  out.y.conservativeResize(rows, Eigen::NoChange);
  return out;
}

} // namespace tmap
