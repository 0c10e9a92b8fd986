#include <doctest.h>

#include <algorithm>
#include <random>

#include "tmap/models.hpp"

using namespace tmap;

TEST_CASE("em31 effective conductivity") {
  Em31Config cfg; // 20 / 2400
  SUBCASE("endpoints") {
    CHECK(em31_sigma_eff(0.0, cfg) == doctest::Approx(cfg.sigma_water));
    // far-field asymptote toward the ice conductivity
    CHECK(std::abs(em31_sigma_eff(100.0, cfg) - cfg.sigma_ice) <
          (cfg.sigma_water - cfg.sigma_ice) * (1.0 / 200.0) * 2.0);
  }
  SUBCASE("mid value") {
    const double expect =
        cfg.sigma_ice * (1.0 - 1.0 / std::sqrt(2.0)) +
        cfg.sigma_water / std::sqrt(2.0);
    CHECK(em31_sigma_eff(0.5, cfg) == doctest::Approx(expect));
    CHECK(expect == doctest::Approx(1702.9).epsilon(1e-3));
  }
  SUBCASE("strictly decreasing and error on negative thickness") {
    double prev = em31_sigma_eff(0.0, cfg);
    for (double th = 0.05; th <= 5.0; th += 0.05) {
      const double v = em31_sigma_eff(th, cfg);
      CHECK(v < prev);
      prev = v;
    }
    CHECK_THROWS_AS(em31_sigma_eff(-0.1, cfg), std::invalid_argument);
  }
  SUBCASE("derivative matches finite differences") {
    const double h = 1e-6;
    for (double th : {0.2, 1.0, 2.0, 3.5}) {
      const double fd =
          (em31_sigma_eff(th + h, cfg) - em31_sigma_eff(th - h, cfg)) /
          (2.0 * h);
      CHECK(em31_sigma_eff_deriv(th, cfg) ==
            doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("analytic additive-Gaussian log-likelihood") {
  Em31Config cfg;
  const double th = 2.0;
  const double h = em31_sigma_eff(th, cfg);
  CHECK(analytic_gaussian_loglik(h, h, cfg.sigma_eps) == doctest::Approx(0.0));
  CHECK(analytic_gaussian_loglik(h + cfg.sigma_eps, h, cfg.sigma_eps) ==
        doctest::Approx(-0.5));
  SUBCASE("gradient in theta matches finite differences") {
    const double y = h + 30.0;
    const double eps = 1e-6;
    double g;
    analytic_gaussian_loglik(y, h, cfg.sigma_eps,
                             em31_sigma_eff_deriv(th, cfg), &g);
    const double fp = analytic_gaussian_loglik(
        y, em31_sigma_eff(th + eps, cfg), cfg.sigma_eps);
    const double fm = analytic_gaussian_loglik(
        y, em31_sigma_eff(th - eps, cfg), cfg.sigma_eps);
    CHECK(g == doctest::Approx((fp - fm) / (2.0 * eps)).epsilon(1e-6));
  }
}

TEST_CASE("multiplicative-noise likelihood against Monte Carlo") {
  // y = H * eps, eps ~ N(1, 0.1^2), H = 5: density of y at a grid point
  const double H = 5.0, mu = 1.0, s = 0.1;
  std::mt19937_64 rng(201);
  std::normal_distribution<double> nd(mu, s);
  const int n = 200000;
  std::vector<double> ys(n);
  for (int i = 0; i < n; ++i) ys[i] = H * nd(rng);
  for (double y : {4.6, 5.0, 5.4}) {
    const double bw = 0.05;
    const int cnt = static_cast<int>(
        std::count_if(ys.begin(), ys.end(), [&](double v) {
          return std::abs(v - y) < bw;
        }));
    const double mc_density = cnt / (2.0 * bw * n);
    const double model = std::exp(multiplicative_gaussian_loglik(y, H, mu, s));
    CHECK(model == doctest::Approx(mc_density).epsilon(0.05));
  }
  CHECK_THROWS_AS(multiplicative_gaussian_loglik(1.0, 0.0, mu, s),
                  std::invalid_argument);
}

TEST_CASE("tilt attenuation model") {
  Em31Config cfg;
  CHECK(tilt_surrogate_model(1.4, 0.0, cfg) ==
        doctest::Approx(em31_sigma_eff(1.4, cfg)));
  const double c5 = std::cos(5.0 * M_PI / 180.0);
  CHECK(tilt_surrogate_model(2.0, 5.0, cfg) ==
        doctest::Approx(em31_sigma_eff(2.0, cfg) * c5 * c5));
  CHECK(c5 * c5 == doctest::Approx(0.99240).epsilon(1e-4));
  double prev = tilt_surrogate_model(2.0, 0.0, cfg);
  for (double a = 0.5; a <= 5.0; a += 0.5) {
    const double v = tilt_surrogate_model(2.0, a, cfg);
    CHECK(v < prev);
    prev = v;
  }
  CHECK_THROWS_AS(tilt_surrogate_model(2.0, 5.1, cfg), std::invalid_argument);
  CHECK_THROWS_AS(tilt_surrogate_model(2.0, -0.1, cfg), std::invalid_argument);
}

TEST_CASE("interface geometry") {
  InterfaceGeometry geom{2, 10.0};
  VectorXd th(3);
  th << 2.0, 0.0, 0.0;
  CHECK(geom.height(th, 0.0) == doctest::Approx(2.0));
  CHECK(geom.height(th, 7.3) == doctest::Approx(2.0));
  th << 1.0, 0.7, 0.0;
  // first sine mode vanishes at x = 0, L/1... use x = 0 and x = 10
  CHECK(geom.height(th, 0.0) == doctest::Approx(1.0));
  CHECK(geom.height(th, 10.0) == doctest::Approx(1.0).epsilon(1e-9));
  SUBCASE("linearity") {
    VectorXd a(3), b(3);
    a << 0.5, -0.2, 0.3;
    b << 1.1, 0.4, -0.6;
    for (double x : {1.0, 3.3, 8.2}) {
      CHECK(geom.height(2.0 * a + 3.0 * b, x) ==
            doctest::Approx(2.0 * geom.height(a, x) + 3.0 * geom.height(b, x))
                .epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(geom.height(th, -0.5), std::invalid_argument);
  CHECK_THROWS_AS(geom.height(VectorXd::Zero(2), 1.0), std::invalid_argument);
}

TEST_CASE("joint sample generation") {
  SUBCASE("identity model with zero noise copies theta") {
    ForwardModel m;
    m.n_theta = 1;
    m.n_y = 1;
    m.n_noise = 1;
    m.call = [](const VectorXd& th, const VectorXd&, const VectorXd&, int) {
      return th;
    };
    auto prior = standard_normal_sampler(1);
    auto noise = standard_normal_sampler(1);
    auto js = generate_joint_samples(m, prior, noise, noise, 1, 500, 7);
    CHECK((js.theta - js.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK(js.skipped == 0);
  }
  SUBCASE("same seed reproduces the set exactly") {
    auto m = em31_model(Em31Config{});
    auto prior = gaussian_sampler(VectorXd::Constant(1, 2.0),
                                  VectorXd::Constant(1, 0.25));
    auto noise = standard_normal_sampler(1);
    auto a = generate_joint_samples(m, prior, noise, noise, 3, 400, 99);
    auto b = generate_joint_samples(m, prior, noise, noise, 3, 400, 99);
    CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("em31 residual noise level is sigma_eps") {
    Em31Config cfg;
    auto m = em31_model(cfg);
    auto prior = gaussian_sampler(VectorXd::Constant(1, 2.0),
                                  VectorXd::Constant(1, 0.25));
    auto noise = standard_normal_sampler(1);
    auto js = generate_joint_samples(m, prior, noise, noise, 1, 20000, 5);
    VectorXd res(js.y.rows());
    for (int i = 0; i < res.size(); ++i)
      res[i] = js.y(i, 0) - em31_sigma_eff(js.theta(i, 0), cfg);
    const double mean = res.mean();
    const double sd =
        std::sqrt((res.array() - mean).square().sum() / (res.size() - 1));
    CHECK(sd == doctest::Approx(63.0).epsilon(3.0 / 63.0));
  }
  SUBCASE("model failures skip rows with a count") {
    ForwardModel m;
    m.n_theta = 1;
    m.n_y = 1;
    m.call = [](const VectorXd& th, const VectorXd&, const VectorXd&, int) {
      if (th[0] < 0.0) throw std::runtime_error("negative input");
      return th;
    };
    auto prior = standard_normal_sampler(1);
    auto noise = standard_normal_sampler(1);
    auto js = generate_joint_samples(m, prior, noise, noise, 1, 1000, 11);
    CHECK(js.skipped > 300);
    CHECK(js.skipped < 700);
    CHECK(js.theta.rows() + js.skipped == 1000);
    CHECK(js.theta.minCoeff() >= 0.0);
  }
  SUBCASE("theta marginal matches the proposal (KS test)") {
    ForwardModel m = linear_gaussian_model(1);
    auto prior = standard_normal_sampler(1);
    auto noise = standard_normal_sampler(1);
    auto js = generate_joint_samples(m, prior, noise, noise, 1, 20000, 13);
    std::vector<double> th(js.theta.col(0).data(),
                           js.theta.col(0).data() + js.theta.rows());
    std::sort(th.begin(), th.end());
    double ks = 0.0;
    const double n = static_cast<double>(th.size());
    for (std::size_t i = 0; i < th.size(); ++i) {
      const double cdf = 0.5 * std::erfc(-th[i] / std::sqrt(2.0));
      ks = std::max(ks, std::abs(cdf - (i + 1) / n));
      ks = std::max(ks, std::abs(cdf - i / n));
    }
    // 1% critical value of the one-sample KS statistic: 1.63 / sqrt(n)
    CHECK(ks < 1.63 / std::sqrt(n));
  }
}

TEST_CASE("model call counter increments per forward evaluation") {
  ModelCallCounter::instance().reset();
  auto m = linear_gaussian_model(1);
  VectorXd th = VectorXd::Zero(1), xi = VectorXd::Zero(1);
  m(th, xi, VectorXd(), 1);
  m(th, xi, VectorXd(), 1);
  CHECK(ModelCallCounter::instance().value() == 2);
}
