//! Acceptance suite: one pass/fail line per criterion, all run from main().
//! Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <vector>

#include "tmap/baseline.hpp"
#include "tmap/engine.hpp"
#include "tmap/serialize.hpp"

using namespace tmap;

namespace {

int failures = 0;

void report(int criterion, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d %-28s %s\n", pass ? "PASS" : "FAIL",
              criterion, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

MatrixXd normal_matrix(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = nd(rng);
  return X;
}

//! Deterministic-node density training: sigma-only stop well below the
//! engine tolerance; n_samples only matters for multi-d fallbacks.
AtmConfig tight_density_atm(int n_samples) {
  AtmConfig cfg;
  cfg.density_stop_tol_sigma = 1e-6;
  cfg.density_stop_tol_trace = 1e-12;
  cfg.density_quadrature = true;
  cfg.max_terms = 10;
  cfg.n_density_samples = n_samples;
  cfg.n_density_test = n_samples;
  return cfg;
}

EngineConfig benchmark_engine(int n_density) {
  EngineConfig cfg;
  cfg.intermediate_atm = tight_density_atm(n_density);
  cfg.recovery_atm = tight_density_atm(n_density);
  cfg.recovery_atm.density_stop_tol_sigma = 1e-5;
  cfg.regression_atm.regression_stop_tol = 1e-9;
  cfg.n_diag_test = 4000;
  cfg.n_regression_samples = 1200;
  cfg.n_posterior_samples = 4000;
  cfg.seed = 7;
  return cfg;
}

double step_evals(const StepRecord& r) {
  return static_cast<double>(r.train_cost + r.diag_cost);
}

// ------------------------------------------------------------- fixtures

struct Pipeline {
  std::vector<SurrogateLikelihood> surrogates;
  std::vector<VectorXd> observations;
};

//! Phase-I fixture: per-step surrogates plus observations from theta_ref.
Pipeline build_pipeline(const ForwardModel& model, const RowSampler& prior,
                        const RowSampler& nuisance_data,
                        const RowSampler& nuisance_train,
                        const VectorXd& theta_ref, int T, int n_joint,
                        std::uint64_t seed, const AtmConfig& cfg) {
  Pipeline p;
  auto noise = standard_normal_sampler(std::max(1, model.n_noise));
  for (int t = 1; t <= T; ++t) {
    auto js = generate_joint_samples(model, prior, noise, nuisance_train, t,
                                     n_joint, seed);
    p.surrogates.push_back(build_surrogate(js, cfg));
    std::seed_seq sq{static_cast<unsigned long long>(seed ^ 0xabcdull),
                     static_cast<unsigned long long>(t)};
    std::mt19937_64 rng(sq);
    const VectorXd xi = noise(rng);
    const VectorXd eta =
        model.n_nuisance > 0 ? nuisance_data(rng) : VectorXd();
    p.observations.push_back(model(theta_ref, xi, eta, t));
  }
  return p;
}

const Em31Config kEm31{}; // 20 / 2400 / 63

//! Shared EM31 benchmark fixture (40 steps, 20,000 joint samples per step).
const Pipeline& em31_pipeline() {
  static Pipeline p = [] {
    auto prior = gaussian_sampler(VectorXd::Constant(1, 2.0),
                                  VectorXd::Constant(1, 0.25));
    AtmConfig cfg;
    return build_pipeline(em31_model(kEm31), prior, standard_normal_sampler(1),
                          standard_normal_sampler(1),
                          VectorXd::Constant(1, 2.0), 40, 20000, 11, cfg);
  }();
  return p;
}

PriorDensity em31_prior() {
  return gaussian_prior(VectorXd::Constant(1, 2.0),
                        VectorXd::Constant(1, 0.25));
}

std::vector<StepRecord> run_engine(SequentialInference& eng,
                                   const Pipeline& p, int T) {
  std::vector<StepRecord> out;
  for (int t = 1; t <= T; ++t) out.push_back(eng.assimilate(p.observations[t - 1]));
  return out;
}

// ------------------------------------------------------------- criteria

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  auto model = linear_gaussian_model(1);
  auto prior_s = standard_normal_sampler(1);
  AtmConfig scfg;
  auto p = build_pipeline(model, prior_s, prior_s, prior_s,
                          VectorXd::Constant(1, 0.4), 20, 20000, 21, scfg);
  auto ecfg = benchmark_engine(3000);
  ecfg.n_posterior_samples = 20000;
  SequentialInference eng(gaussian_prior(VectorXd::Zero(1), VectorXd::Ones(1)),
                          1, ecfg);
  for (const auto& s : p.surrogates) eng.register_surrogate(s);

  double worst_mean = 0.0, worst_var = 0.0;
  double ysum = 0.0;
  bool pass = true;
  for (int t = 1; t <= 20; ++t) {
    ysum += p.observations[t - 1][0];
    auto rec = eng.assimilate(p.observations[t - 1]);
    MatrixXd S = eng.sample_posterior(20000, 1000 + t);
    const double mean = S.col(0).mean();
    const double var =
        (S.col(0).array() - mean).square().sum() / (S.rows() - 1);
    const double amean = ysum / (1.0 + t);
    const double avar = 1.0 / (1.0 + t);
    worst_mean = std::max(worst_mean, std::abs(mean - amean));
    worst_var = std::max(worst_var, std::abs(var - avar) / avar);
    if (std::abs(mean - amean) > 0.03 || std::abs(var - avar) / avar > 0.05)
      pass = false;
  }
  const double secs = elapsed_s(t0);
  if (secs > 300.0) pass = false;
  report(1, "conjugate-Gaussian pipeline", pass,
         fmt("max |mean err| %.4f (tol 0.03), max var err %.1f%% (tol 5%%), "
             "%.0f s (tol 300)",
             worst_mean, 100.0 * worst_var, secs));
}

void criterion_2() {
  const auto& p = em31_pipeline();
  const auto& sur = p.surrogates.front();
  const double s2pi = std::log(kEm31.sigma_eps * std::sqrt(2.0 * M_PI));
  std::vector<double> rel;
  for (int i = 0; i <= 20; ++i) {
    const double th = 1.0 + 2.0 * i / 20.0;
    const double h = em31_sigma_eff(th, kEm31);
    for (int j = 0; j <= 20; ++j) {
      const double y = h + (-2.0 + 4.0 * j / 20.0) * kEm31.sigma_eps;
      const double truth =
          analytic_gaussian_loglik(y, h, kEm31.sigma_eps) - s2pi;
      const double approx = sur.loglik(VectorXd::Constant(1, th),
                                       VectorXd::Constant(1, y));
      rel.push_back(std::abs(approx - truth) / std::abs(truth));
    }
  }
  std::sort(rel.begin(), rel.end());
  const double median = rel[rel.size() / 2];
  report(2, "surrogate likelihood accuracy", median < 0.05,
         fmt("median rel error %.3f%% (tol 5%%), worst %.1f%%", 100.0 * median,
             100.0 * rel.back()));
}

//! Shared 40-step EM31 engine run with compression on (criteria 3 and 4).
const std::vector<StepRecord>& em31_run_compressed() {
  static std::vector<StepRecord> recs = [] {
    SequentialInference eng(em31_prior(), 1, benchmark_engine(2000));
    for (const auto& s : em31_pipeline().surrogates) eng.register_surrogate(s);
    return run_engine(eng, em31_pipeline(), 40);
  }();
  return recs;
}

void criterion_3() {
  const auto& recs = em31_run_compressed();
  int max_len = 0;
  double max_sigma = 0.0;
  for (const auto& r : recs) {
    max_len = std::max(max_len, r.composition_length);
    max_sigma = std::max(max_sigma, r.eps_sigma);
  }
  const auto& last = recs.back();
  const double sd =
      (last.percentiles(4, 0) - last.percentiles(0, 0)) / (2.0 * 1.6448536);
  const double median = last.percentiles(2, 0);
  const bool pass = max_len <= 5 && max_sigma <= 1e-3 &&
                    std::abs(median - 2.0) < 3.0 * sd && sd < 0.25 / 4.0;
  report(3, "sequential EM31 run", pass,
         fmt("max length %d (tol 5), max eps_sigma %.2e (tol 1e-3), "
             "median %.4f, sd %.4f (tol %.4f)",
             max_len, max_sigma, median, sd, 0.25 / 4.0));
}

void criterion_4() {
  const auto& recs = em31_run_compressed();
  std::vector<double> costs;
  for (int t = 5; t <= 40; ++t) costs.push_back(step_evals(recs[t - 1]));
  std::vector<double> sorted = costs;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double worst = sorted.back();
  const bool flat = worst <= 2.0 * median;

  // compression off: cost must grow with the composition length
  EngineConfig off = benchmark_engine(800);
  off.compression_enabled = false;
  off.intermediate_atm.density_stop_tol_sigma = 3e-3;
  off.intermediate_atm.density_stop_tol_trace = 3e-3;
  off.tol_sigma = 1e9; // keep every step on the intermediate branch
  off.tol_trace = 1e9;
  off.n_diag_test = 500;
  SequentialInference eng(em31_prior(), 1, off);
  for (const auto& s : em31_pipeline().surrogates) eng.register_surrogate(s);
  auto recs_off = run_engine(eng, em31_pipeline(), 40);
  const double growth = step_evals(recs_off.back()) / step_evals(recs_off.front());
  const bool grows = growth >= 2.0;
  report(4, "cost flatness vs growth", flat && grows,
         fmt("on: max/median %.2f (tol 2.0); off: step40/step1 %.1fx (tol "
             ">= 2)",
             worst / median, growth));
}

void criterion_5() {
  EngineConfig cfg = benchmark_engine(1500);
  cfg.intermediate_atm.density_stop_tol_sigma = 2e-2; // deliberately loose
  cfg.intermediate_atm.density_stop_tol_trace = 2e-2;
  SequentialInference eng(em31_prior(), 1, cfg);
  for (const auto& s : em31_pipeline().surrogates) eng.register_surrogate(s);
  auto recs = run_engine(eng, em31_pipeline(), 40);

  std::vector<double> inter_costs;
  int recoveries = 0;
  bool post_ok = true;
  double max_rec_sigma = 0.0;
  std::vector<double> rec_costs;
  for (const auto& r : recs) {
    if (r.branch == StepBranch::recovery) {
      ++recoveries;
      max_rec_sigma = std::max(max_rec_sigma, r.eps_sigma);
      if (r.eps_sigma > cfg.tol_sigma) post_ok = false;
      rec_costs.push_back(static_cast<double>(r.train_cost));
    } else {
      // training evals only: the diagnostics overhead is identical on both
      // branches and grows with t, which would mask the comparison when
      // recoveries happen early in the run
      inter_costs.push_back(static_cast<double>(r.train_cost));
    }
  }
  std::sort(inter_costs.begin(), inter_costs.end());
  const double med_inter =
      inter_costs.empty() ? 0.0 : inter_costs[inter_costs.size() / 2];
  bool costly = !rec_costs.empty();
  for (double c : rec_costs)
    if (c <= med_inter) costly = false;
  const bool pass = recoveries >= 1 && post_ok && costly;
  report(5, "recovery behavior", pass,
         fmt("%d recoveries, max post-recovery eps_sigma %.2e (tol 1e-3), "
             "min recovery/median intermediate cost %.2f",
             recoveries, max_rec_sigma,
             rec_costs.empty() || med_inter == 0.0
                 ? 0.0
                 : *std::min_element(rec_costs.begin(), rec_costs.end()) /
                       med_inter));
}

void criterion_6() {
  MatrixXd Xtest = normal_matrix(10000, 1, 61);
  const ReferenceDensity rho{1};
  ComposedMap id({TriangularMap::identity(1)});
  TargetDensity exact{[](const VectorXd& x, VectorXd* g) {
    if (g) *g = -x;
    return -0.5 * x.squaredNorm();
  }};
  const double v0 = variance_diagnostic(id, exact, rho, Xtest);
  const double t0 = trace_diagnostic(id, exact, rho, Xtest);
  const double delta = 0.1;
  TargetDensity shifted{[delta](const VectorXd& x, VectorXd* g) {
    if (g) {
      g->resize(1);
      (*g)[0] = -(x[0] - delta);
    }
    return -0.5 * (x[0] - delta) * (x[0] - delta);
  }};
  const double v1 = variance_diagnostic(id, shifted, rho, Xtest);
  const double t1 = trace_diagnostic(id, shifted, rho, Xtest);
  const bool pass = v0 < 1e-10 && t0 < 1e-10 &&
                    std::abs(v1 - 0.005) < 0.1 * 0.005 &&
                    std::abs(t1 - 0.005) < 1e-6 * 0.005;
  report(6, "diagnostics closed form", pass,
         fmt("exact %.1e/%.1e, shifted sigma %.5f (0.005 +- 10%%), trace "
             "%.7f (exact)",
             v0, t0, v1, t1));
}

void criterion_7() {
  em31_pipeline(); // shared fixture; keep its one-time build off the clock
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(71);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-6;
  bool pass = true;
  double worst = 0.0;
  auto track = [&](double got, double fd, double tol) {
    const double rel = std::abs(got - fd) / (1.0 + std::abs(fd));
    worst = std::max(worst, rel / tol);
    if (rel > tol) pass = false;
  };

  MultiIndexSet aset(2, {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}});
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd w(aset.size());
    for (int i = 0; i < w.size(); ++i) w[i] = 0.4 * nd(rng);
    MapComponent c(aset, w, BasisFamily(3), 32);
    std::vector<double> x = {u(rng), u(rng)};
    // grad_coeff
    VectorXd dv, dl;
    c.coeff_grad(x, dv, dl);
    for (int i = 0; i < w.size(); ++i) {
      VectorXd wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      MapComponent cp(aset, wp, BasisFamily(3), 32);
      MapComponent cm(aset, wm, BasisFamily(3), 32);
      track(dv[i], (cp.eval(x).value - cm.eval(x).value) / (2 * h), 1e-5);
      track(dl[i],
            (std::log(cp.eval(x).dk) - std::log(cm.eval(x).dk)) / (2 * h),
            1e-5);
    }
    // grad_input
    VectorXd gx, gd;
    c.input_grad(x, gx, gd);
    for (int j = 0; j < 2; ++j) {
      auto xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      track(gx[j], (c.eval(xp).value - c.eval(xm).value) / (2 * h), 1e-5);
      track(gd[j], (c.eval(xp).dk - c.eval(xm).dk) / (2 * h), 1e-5);
    }
  }
  // objective gradients
  MatrixXd X = normal_matrix(200, 2, 72);
  for (int rep = 0; rep < 100; ++rep) {
    ComponentCache cache(X, BasisFamily(3), 32);
    cache.set_terms({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
    SampleObjective obj(cache);
    VectorXd w(4), g, tmp;
    for (int i = 0; i < 4; ++i) w[i] = 0.4 * nd(rng);
    obj.value_grad(w, g);
    const int i = rep % 4;
    VectorXd wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    track(g[i], (obj.value_grad(wp, tmp) - obj.value_grad(wm, tmp)) / (2 * h),
          1e-5);
  }
  // surrogate grad_loglik
  {
    const auto& sur = em31_pipeline().surrogates.front();
    std::uniform_real_distribution<double> ut(1.6, 2.4);
    for (int rep = 0; rep < 100; ++rep) {
      VectorXd th(1), y(1);
      th[0] = ut(rng);
      y[0] = em31_sigma_eff(th[0], kEm31) + 30.0 * nd(rng);
      const double hs = 1e-5;
      VectorXd tp = th, tm = th;
      tp[0] += hs;
      tm[0] -= hs;
      const double fd = (sur.loglik(tp, y) - sur.loglik(tm, y)) / (2 * hs);
      track(sur.grad_loglik(th, y)[0], fd, 1e-4);
    }
  }
  const double secs = elapsed_s(t0);
  if (secs > 60.0) pass = false;
  report(7, "gradient suite", pass,
         fmt("worst rel error %.2f of tolerance, %.1f s (tol 60)", worst,
             secs));
}

void criterion_8() {
  std::mt19937_64 rng(81);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  MultiIndexSet aset(2, {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}});
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd w(aset.size());
    for (int i = 0; i < w.size(); ++i) w[i] = 0.4 * nd(rng);
    MapComponent c(aset, w, BasisFamily(3), 32);
    for (int p = 0; p < 1000; ++p) {
      std::vector<double> x = {u(rng), u(rng)};
      const double z = c.eval(x).value;
      std::vector<double> prefix = {x[0]};
      worst = std::max(worst, std::abs(c.invert(prefix, z) - x[1]));
    }
  }
  // trained 1-d map normalization
  std::normal_distribution<double> data(2.0, 0.25);
  MatrixXd X(8000, 1);
  for (int i = 0; i < X.rows(); ++i) {
    const double z = data(rng);
    X(i, 0) = z + 0.1 * (z - 2.0) * (z - 2.0);
  }
  AtmConfig cfg;
  auto res = train_from_samples(X, cfg);
  auto S = res.map();
  const double mass = adaptive_simpson(
      [&](double x) {
        VectorXd v(1);
        v[0] = x;
        return std::exp(S.log_pullback(ReferenceDensity{1}, v));
      },
      0.0, 4.0, 1e-8); // +-8 sigma; keeps the peak inside the initial nodes
  const bool pass = worst < 1e-8 && std::abs(mass - 1.0) < 1e-3;
  report(8, "inversion and normalization", pass,
         fmt("worst round-trip %.1e (tol 1e-8), pullback mass %.6f "
             "(tol 1 +- 1e-3)",
             worst, mass));
}

void criterion_9() {
  Em31Config cfg = kEm31;
  cfg.sigma_eps = 2.5; // sharpened noise so the tilt bias is detectable
  auto prior = gaussian_sampler(VectorXd::Constant(1, 2.0),
                                VectorXd::Constant(1, 0.25));
  auto tilt = uniform_sampler(0.0, 5.0, 1);
  auto frozen = uniform_sampler(0.0, 0.0, 1); // unused when model ignores eta
  AtmConfig scfg;
  const int T = 20;
  // data always comes from the tilted instrument
  auto correct = build_pipeline(em31_tilt_model(cfg, true), prior, tilt, tilt,
                                VectorXd::Constant(1, 2.0), T, 20000, 91,
                                scfg);
  auto incorrect =
      build_pipeline(em31_tilt_model(cfg, false), prior, tilt, frozen,
                     VectorXd::Constant(1, 2.0), T, 20000, 91, scfg);
  incorrect.observations = correct.observations; // same measured data

  auto run = [&](const Pipeline& p) {
    auto ecfg = benchmark_engine(2000);
    // coverage/width comparison only; the drift margin of the 1e-6 stop is
    // not needed over 20 steps and the sharpened targets train slowly
    ecfg.intermediate_atm.density_stop_tol_sigma = 1e-5;
    ecfg.n_diag_test = 2000;
    SequentialInference eng(em31_prior(), 1, ecfg);
    for (const auto& s : p.surrogates) eng.register_surrogate(s);
    return run_engine(eng, p, T);
  };
  auto rc = run(correct);
  auto ri = run(incorrect);

  int cov_c = 0, cov_i = 0, n = 0;
  double width_c = 0.0, width_i = 0.0;
  for (int t = 11; t <= T; ++t) {
    const auto &a = rc[t - 1], &b = ri[t - 1];
    ++n;
    if (a.percentiles(0, 0) <= 2.0 && 2.0 <= a.percentiles(4, 0)) ++cov_c;
    if (b.percentiles(0, 0) <= 2.0 && 2.0 <= b.percentiles(4, 0)) ++cov_i;
    width_c += a.percentiles(4, 0) - a.percentiles(0, 0);
    width_i += b.percentiles(4, 0) - b.percentiles(0, 0);
  }
  const bool pass = cov_c >= static_cast<int>(0.8 * n) && width_i < width_c &&
                    cov_i < cov_c;
  report(9, "nuisance marginalization", pass,
         fmt("coverage correct %d/%d (need >= %d), incorrect %d/%d; mean "
             "width %.4f vs %.4f",
             cov_c, n, static_cast<int>(0.8 * n), cov_i, n, width_c / n,
             width_i / n));
}

void criterion_10() {
  // conjugate case at t = 10
  auto model = linear_gaussian_model(1);
  auto prior_s = standard_normal_sampler(1);
  AtmConfig scfg;
  auto p = build_pipeline(model, prior_s, prior_s, prior_s,
                          VectorXd::Constant(1, 0.4), 10, 20000, 101, scfg);
  auto ecfg = benchmark_engine(2000);
  ecfg.n_posterior_samples = 20000;
  auto prior = gaussian_prior(VectorXd::Zero(1), VectorXd::Ones(1));
  SequentialInference eng(prior, 1, ecfg);
  for (const auto& s : p.surrogates) eng.register_surrogate(s);
  run_engine(eng, p, 10);
  MatrixXd tm = eng.sample_posterior(20000, 5);
  const double tm_mean = tm.col(0).mean();
  const double tm_var =
      (tm.col(0).array() - tm_mean).square().sum() / (tm.rows() - 1);

  auto logpost = [&](const VectorXd& th) {
    double lp = prior.logpdf(th, nullptr);
    for (int t = 1; t <= 10; ++t)
      lp += p.surrogates[t - 1].loglik(th, p.observations[t - 1]);
    return lp;
  };
  MatrixXd Sigma = MatrixXd::Constant(1, 1, tm_var);
  auto chain = mh_chain(logpost, VectorXd::Constant(1, tm_mean),
                        (2.4 * 2.4 / 1.0) * Sigma, 100000, 6);
  auto rep = compare_posteriors(tm, chain.states);
  const bool agree = rep.agree;

  std::mt19937_64 rng(102);
  std::normal_distribution<double> nd;
  VectorXd iid(100000), ar(200000);
  for (int i = 0; i < iid.size(); ++i) iid[i] = nd(rng);
  ar[0] = 0.0;
  for (int i = 1; i < ar.size(); ++i) ar[i] = 0.5 * ar[i - 1] + nd(rng);
  const double iact_iid = iact(iid);
  const double iact_ar = iact(ar);
  const bool pass = agree && std::abs(iact_iid - 1.0) < 0.1 &&
                    std::abs(iact_ar - 3.0) < 0.3;
  report(10, "MCMC baseline", pass,
         fmt("mean diff %.2f SE (tol 3), iid IACT %.3f (1 +- 0.1), AR(1) "
             "IACT %.2f (3 +- 10%%)",
             rep.mean_diff_se[0], iact_iid, iact_ar));
}

} // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_10();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_9();
  std::printf("%s: %d criterion(s) failed\n",
              failures == 0 ? "SUCCESS" : "FAILURE", failures);
  return failures;
}
