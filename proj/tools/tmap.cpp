//! Command-line driver: simulation, surrogate training, sequential
//! assimilation, MCMC baseline, and map diagnostics, wired through a JSON
//! configuration file with flag overrides. Exit codes: 0 success, 1
//! configuration error, 2 numerical failure.

#include <CLI11.hpp>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "tmap/baseline.hpp"
#include "tmap/blackbox.hpp"
#include "tmap/csv.hpp"
#include "tmap/engine.hpp"
#include "tmap/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tmap;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  json raw;
  std::string model = "em31";
  Em31Config em31;
  bool tilt_nuisance = true;
  std::string blackbox_command;
  int n_theta = 1, n_y = 1, n_noise = 1, n_nuisance = 0;
  VectorXd theta_ref, prior_mean, prior_std;
  int steps = 40;
  int n_joint = 20000;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  AtmConfig surrogate_atm;
  EngineConfig engine;
  int mcmc_n = 100000;
  double burn_in_fraction = 0.1;
};

VectorXd json_vector(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<VectorXd>(v.data(), v.size());
}

void load_atm(const json& j, AtmConfig& cfg) {
  cfg.max_terms = j.value("max_terms", cfg.max_terms);
  cfg.max_order_per_var = j.value("max_order_per_var", cfg.max_order_per_var);
  cfg.max_total_order = j.value("max_total_order", cfg.max_total_order);
  cfg.tail_bound = j.value("tail_bound", cfg.tail_bound);
  cfg.quad_order = j.value("quad_order", cfg.quad_order);
  cfg.sample_stop_tol = j.value("sample_stop_tol", cfg.sample_stop_tol);
  cfg.density_stop_tol_sigma =
      j.value("stop_tol_sigma", cfg.density_stop_tol_sigma);
  cfg.density_stop_tol_trace =
      j.value("stop_tol_trace", cfg.density_stop_tol_trace);
  cfg.regression_stop_tol =
      j.value("regression_stop_tol", cfg.regression_stop_tol);
  cfg.max_opt_iters = j.value("max_opt_iters", cfg.max_opt_iters);
  cfg.n_density_samples = j.value("n_density_samples", cfg.n_density_samples);
  cfg.n_density_test = j.value("n_density_test", cfg.n_density_test);
  cfg.density_quadrature =
      j.value("density_quadrature", cfg.density_quadrature);
  cfg.density_quad_nodes =
      j.value("density_quad_nodes", cfg.density_quad_nodes);
  cfg.density_quad_bound =
      j.value("density_quad_bound", cfg.density_quad_bound);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  RunConfig c;
  try {
    in >> c.raw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  const json& j = c.raw;
  if (!j.contains("model")) throw ConfigError("missing model id");
  c.model = j.at("model").get<std::string>();
  const json mp = j.value("model_params", json::object());
  c.em31.sigma_ice = mp.value("sigma_ice", c.em31.sigma_ice);
  c.em31.sigma_water = mp.value("sigma_water", c.em31.sigma_water);
  c.em31.sigma_eps = mp.value("sigma_eps", c.em31.sigma_eps);
  c.tilt_nuisance = mp.value("include_nuisance", true);
  c.blackbox_command = mp.value("command", "");
  c.n_theta = mp.value("n_theta", 1);
  c.n_y = mp.value("n_y", c.n_theta);
  c.n_noise = mp.value("n_noise", c.n_y);
  c.n_nuisance = mp.value("n_nuisance", 0);
  c.steps = j.value("steps", 40);
  c.n_joint = j.value("n_joint_samples", 20000);
  c.seed = j.value("seed", std::uint64_t{1});
  c.output_dir = j.value("output_dir", "out");
  if (j.contains("theta_ref")) c.theta_ref = json_vector(j.at("theta_ref"));
  if (j.contains("prior")) {
    c.prior_mean = json_vector(j.at("prior").at("mean"));
    c.prior_std = json_vector(j.at("prior").at("std"));
  }
  if (j.contains("atm")) load_atm(j.at("atm"), c.surrogate_atm);
  if (j.contains("engine")) {
    const json& e = j.at("engine");
    c.engine.tol_sigma = e.value("tol_sigma", c.engine.tol_sigma);
    c.engine.tol_trace = e.value("tol_trace", c.engine.tol_trace);
    c.engine.l_max = e.value("l_max", c.engine.l_max);
    c.engine.compression_enabled =
        e.value("compression_enabled", c.engine.compression_enabled);
    c.engine.n_diag_test = e.value("n_diag_test", c.engine.n_diag_test);
    c.engine.n_regression_samples =
        e.value("n_regression_samples", c.engine.n_regression_samples);
    c.engine.n_posterior_samples =
        e.value("n_posterior_samples", c.engine.n_posterior_samples);
    c.engine.diag_subsample = e.value("diag_subsample", 0);
    if (e.contains("intermediate_atm"))
      load_atm(e.at("intermediate_atm"), c.engine.intermediate_atm);
    if (e.contains("recovery_atm"))
      load_atm(e.at("recovery_atm"), c.engine.recovery_atm);
    if (e.contains("regression_atm"))
      load_atm(e.at("regression_atm"), c.engine.regression_atm);
  }
  c.engine.seed = c.seed;
  if (j.contains("mcmc")) {
    c.mcmc_n = j.at("mcmc").value("n", c.mcmc_n);
    c.burn_in_fraction =
        j.at("mcmc").value("burn_in_fraction", c.burn_in_fraction);
  }
  if (c.steps < 0) throw ConfigError("steps must be >= 0");
  if (c.burn_in_fraction < 0.0 || c.burn_in_fraction >= 1.0)
    throw ConfigError("burn_in_fraction must lie in [0, 1)");
  return c;
}

struct ModelBundle {
  ForwardModel model;
  std::shared_ptr<BlackBoxModel> blackbox; // keeps the child process alive
};

ModelBundle make_model(const RunConfig& c) {
  ModelBundle b;
  if (c.model == "em31") {
    b.model = em31_model(c.em31);
  } else if (c.model == "em31-tilt") {
    b.model = em31_tilt_model(c.em31, c.tilt_nuisance);
  } else if (c.model == "linear-gaussian") {
    b.model = linear_gaussian_model(c.n_theta);
  } else if (c.model == "blackbox") {
    if (c.blackbox_command.empty())
      throw ConfigError("blackbox model requires model_params.command");
    b.blackbox = std::make_shared<BlackBoxModel>(
        c.blackbox_command, c.n_theta, c.n_y, c.n_noise, c.n_nuisance);
    b.model = b.blackbox->as_forward_model();
  } else {
    throw ConfigError("unknown model id: " + c.model);
  }
  return b;
}

RowSampler prior_sampler(const RunConfig& c, int dim) {
  if (c.prior_mean.size() == dim && c.prior_std.size() == dim)
    return gaussian_sampler(c.prior_mean, c.prior_std);
  return standard_normal_sampler(dim);
}

RowSampler nuisance_sampler(const RunConfig& c, int dim) {
  if (c.model == "em31-tilt") return uniform_sampler(0.0, 5.0, dim);
  return standard_normal_sampler(std::max(1, dim));
}

PriorDensity make_prior(const RunConfig& c, int dim) {
  VectorXd mean = c.prior_mean.size() == dim ? c.prior_mean
                                             : VectorXd::Zero(dim);
  VectorXd std = c.prior_std.size() == dim ? c.prior_std : VectorXd::Ones(dim);
  return gaussian_prior(mean, std);
}

int worker_count(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("TMAP_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void write_config_copy(const RunConfig& c, const fs::path& dir) {
  std::ofstream out(dir / "config.json");
  out << c.raw.dump(2) << "\n";
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& c) {
  auto bundle = make_model(c);
  const auto& model = bundle.model;
  const int d = model.n_theta;
  if (c.theta_ref.size() != d)
    throw ConfigError("theta_ref dimension must match the model");
  fs::create_directories(c.output_dir);
  write_config_copy(c, c.output_dir);

  auto noise = standard_normal_sampler(std::max(1, model.n_noise));
  auto nuis = nuisance_sampler(c, std::max(1, model.n_nuisance));
  CsvTable obs;
  obs.manifest = {{"format", "tmap-observations/1"},
                  {"model", c.model},
                  {"seed", std::to_string(c.seed)},
                  {"steps", std::to_string(c.steps)}};
  obs.columns = {"step"};
  for (int j = 0; j < model.n_y; ++j)
    obs.columns.push_back("y" + std::to_string(j));
  obs.data.resize(c.steps, 1 + model.n_y);
  for (int t = 1; t <= c.steps; ++t) {
    std::seed_seq sq{static_cast<unsigned long long>(c.seed),
                     static_cast<unsigned long long>(t), 0xdeadull};
    std::mt19937_64 rng(sq);
    const VectorXd xi = noise(rng);
    const VectorXd eta = model.n_nuisance > 0 ? nuis(rng) : VectorXd();
    const VectorXd y = model(c.theta_ref, xi, eta, t);
    obs.data(t - 1, 0) = t;
    obs.data.row(t - 1).tail(model.n_y) = y.transpose();
  }
  write_csv((fs::path(c.output_dir) / "observations.csv").string(), obs);

  CsvTable truth;
  truth.manifest = {{"format", "tmap-truth/1"},
                    {"seed", std::to_string(c.seed)}};
  truth.columns.clear();
  for (int j = 0; j < d; ++j)
    truth.columns.push_back("theta" + std::to_string(j));
  truth.data = c.theta_ref.transpose();
  write_csv((fs::path(c.output_dir) / "ground_truth.csv").string(), truth);
  std::cout << "wrote " << c.steps << " observations to " << c.output_dir
            << "\n";
  return 0;
}

// ------------------------------------------------------- train-likelihoods

int cmd_train_likelihoods(const RunConfig& c, int workers_flag) {
  auto bundle = make_model(c);
  const auto& model = bundle.model;
  fs::path dir = fs::path(c.output_dir) / "registry";
  fs::create_directories(dir);
  write_config_copy(c, c.output_dir);

  auto prior = prior_sampler(c, model.n_theta);
  auto noise = standard_normal_sampler(std::max(1, model.n_noise));
  auto nuis = nuisance_sampler(c, std::max(1, model.n_nuisance));

  const int workers =
      c.model == "blackbox" ? 1 : worker_count(workers_flag);
  std::atomic<int> next{1};
  std::vector<std::string> failures(c.steps + 1);
  auto run_step = [&](int t) {
    try {
      auto js = generate_joint_samples(model, prior, noise, nuis, t,
                                       c.n_joint, c.seed);
      CsvTable tbl;
      tbl.manifest = {{"format", "tmap-joint-samples/1"},
                      {"model", c.model},
                      {"step", std::to_string(t)},
                      {"seed", std::to_string(c.seed)},
                      {"skipped", std::to_string(js.skipped)}};
      for (int j = 0; j < model.n_theta; ++j)
        tbl.columns.push_back("theta" + std::to_string(j));
      for (int j = 0; j < model.n_y; ++j)
        tbl.columns.push_back("y" + std::to_string(j));
      tbl.data.resize(js.theta.rows(), model.n_theta + model.n_y);
      tbl.data.leftCols(model.n_theta) = js.theta;
      tbl.data.rightCols(model.n_y) = js.y;
      write_csv((dir / ("samples_" + std::to_string(t) + ".csv")).string(),
                tbl);
      auto sur = build_surrogate(js, c.surrogate_atm);
      save_surrogate(sur,
                     (dir / ("surrogate_" + std::to_string(t) + ".json"))
                         .string());
    } catch (const std::exception& e) {
      failures[t] = e.what();
    }
  };
  auto worker = [&] {
    for (int t; (t = next.fetch_add(1)) <= c.steps;) run_step(t);
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  json manifest;
  manifest["format"] = "tmap-registry/1";
  manifest["model"] = c.model;
  manifest["seed"] = c.seed;
  manifest["steps"] = c.steps;
  manifest["n_joint_samples"] = c.n_joint;
  json steps = json::array();
  int failed = 0;
  for (int t = 1; t <= c.steps; ++t) {
    json s;
    s["step"] = t;
    s["surrogate"] = "surrogate_" + std::to_string(t) + ".json";
    s["samples"] = "samples_" + std::to_string(t) + ".csv";
    if (!failures[t].empty()) {
      s["error"] = failures[t];
      ++failed;
    }
    steps.push_back(s);
  }
  manifest["entries"] = steps;
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << "\n";
  std::cout << "trained " << (c.steps - failed) << "/" << c.steps
            << " surrogates into " << dir << "\n";
  for (int t = 1; t <= c.steps; ++t)
    if (!failures[t].empty())
      std::cerr << "step " << t << " failed: " << failures[t] << "\n";
  return 0;
}

// ------------------------------------------------------------- assimilate

MatrixXd load_observations(const std::string& path, int n_y) {
  auto tbl = read_csv(path);
  if (static_cast<int>(tbl.columns.size()) != 1 + n_y)
    throw ConfigError("observation file has wrong column count");
  return tbl.data.rightCols(n_y);
}

std::vector<SurrogateLikelihood> load_registry(const fs::path& dir,
                                               int steps) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw ConfigError("missing registry manifest in " + dir.string());
  json manifest;
  mf >> manifest;
  std::vector<SurrogateLikelihood> out;
  for (const auto& e : manifest.at("entries")) {
    const int t = e.at("step").get<int>();
    if (t > steps) continue;
    if (e.contains("error"))
      throw std::runtime_error("surrogate for step " + std::to_string(t) +
                               " failed during training");
    out.push_back(
        load_surrogate((dir / e.at("surrogate").get<std::string>()).string()));
  }
  if (static_cast<int>(out.size()) < steps)
    throw ConfigError("registry does not cover all requested steps");
  return out;
}

int cmd_assimilate(const RunConfig& c, const std::string& obs_path,
                   const std::string& registry) {
  fs::path reg = registry.empty()
                     ? fs::path(c.output_dir) / "registry"
                     : fs::path(registry);
  auto surrogates = load_registry(reg, c.steps);
  const int d = surrogates.front().n_theta();
  const int n_y = surrogates.front().n_y();
  MatrixXd Y = load_observations(
      obs_path.empty()
          ? (fs::path(c.output_dir) / "observations.csv").string()
          : obs_path,
      n_y);
  if (Y.rows() < c.steps) throw ConfigError("fewer observations than steps");

  SequentialInference eng(make_prior(c, d), d, c.engine);
  for (auto& s : surrogates) eng.register_surrogate(std::move(s));

  fs::create_directories(c.output_dir);
  write_config_copy(c, c.output_dir);
  CsvTable log;
  log.manifest = {{"format", "tmap-assimilation-log/1"},
                  {"seed", std::to_string(c.seed)}};
  log.columns = {"step",        "branch",     "compressed", "eps_sigma",
                 "eps_trace",   "train_cost", "diag_cost",  "comp_length",
                 "map_terms",   "map_order"};
  for (int j = 0; j < d; ++j) {
    const std::string sj = std::to_string(j);
    for (const char* p : {"mean", "p5", "p25", "p50", "p75", "p95"})
      log.columns.push_back(std::string(p) + "_" + sj);
  }
  log.data.resize(c.steps, log.columns.size());
  for (int t = 1; t <= c.steps; ++t) {
    auto rec = eng.assimilate(Y.row(t - 1).transpose());
    Eigen::Index col = 0;
    auto put = [&](double v) { log.data(t - 1, col++) = v; };
    put(t);
    put(rec.branch == StepBranch::recovery ? 1.0 : 0.0);
    put(rec.compressed ? 1.0 : 0.0);
    put(rec.eps_sigma);
    put(rec.eps_trace);
    put(static_cast<double>(rec.train_cost));
    put(static_cast<double>(rec.diag_cost));
    put(rec.composition_length);
    put(rec.map_terms);
    put(rec.map_order);
    for (int j = 0; j < d; ++j) {
      put(rec.mean[j]);
      for (int p = 0; p < 5; ++p) put(rec.percentiles(p, j));
    }
    std::cout << "step " << t
              << (rec.branch == StepBranch::recovery ? " [recovery]" : "")
              << (rec.compressed ? " [compressed]" : "")
              << " eps_sigma=" << rec.eps_sigma
              << " eps_trace=" << rec.eps_trace << " mean=" << rec.mean[0]
              << "\n";
  }
  write_csv((fs::path(c.output_dir) / "assimilation_log.csv").string(), log);

  MatrixXd S = eng.sample_posterior(c.engine.n_posterior_samples, c.seed);
  CsvTable post;
  post.manifest = {{"format", "tmap-posterior-samples/1"},
                   {"seed", std::to_string(c.seed)},
                   {"step", std::to_string(c.steps)}};
  for (int j = 0; j < d; ++j)
    post.columns.push_back("theta" + std::to_string(j));
  post.data = S;
  write_csv((fs::path(c.output_dir) / "posterior_samples.csv").string(), post);
  return 0;
}

// ------------------------------------------------------------------- mcmc

int cmd_mcmc(const RunConfig& c, const std::string& obs_path,
             const std::string& registry, const std::string& tm_run) {
  fs::path reg = registry.empty()
                     ? fs::path(c.output_dir) / "registry"
                     : fs::path(registry);
  auto surrogates = load_registry(reg, c.steps);
  const int d = surrogates.front().n_theta();
  const int n_y = surrogates.front().n_y();
  MatrixXd Y = load_observations(
      obs_path.empty()
          ? (fs::path(c.output_dir) / "observations.csv").string()
          : obs_path,
      n_y);
  if (Y.rows() < c.steps) throw ConfigError("fewer observations than steps");

  // running posterior over all steps in theta coordinates
  auto prior = make_prior(c, d);
  auto logpost = [&](const VectorXd& th) {
    double lp = prior.logpdf(th, nullptr);
    for (int t = 1; t <= c.steps; ++t)
      lp += surrogates[t - 1].loglik(th, Y.row(t - 1).transpose());
    return lp;
  };

  // start point and proposal covariance from the TM run when available
  VectorXd theta0 = c.prior_mean.size() == d ? c.prior_mean
                                             : VectorXd::Zero(d);
  MatrixXd Sigma = MatrixXd::Identity(d, d);
  if (c.prior_std.size() == d)
    Sigma = c.prior_std.cwiseProduct(c.prior_std).asDiagonal();
  MatrixXd tm_samples;
  fs::path tm_dir = tm_run.empty() ? fs::path(c.output_dir) : fs::path(tm_run);
  const fs::path tm_file = tm_dir / "posterior_samples.csv";
  if (fs::exists(tm_file)) {
    tm_samples = read_csv(tm_file.string()).data;
    theta0 = tm_samples.colwise().mean().transpose();
    MatrixXd centered = tm_samples.rowwise() - theta0.transpose();
    Sigma = centered.transpose() * centered / (tm_samples.rows() - 1);
  } else {
    std::cerr << "warning: no transport run found at " << tm_file
              << "; starting from the prior mean\n";
  }
  const MatrixXd prop = (2.4 * 2.4 / d) * Sigma;
  auto chain = mh_chain(logpost, theta0, prop, c.mcmc_n, c.seed);

  fs::create_directories(c.output_dir);
  const int burn = static_cast<int>(c.burn_in_fraction * c.mcmc_n);
  MatrixXd kept = chain.states.bottomRows(c.mcmc_n - burn);

  CsvTable ct;
  ct.manifest = {{"format", "tmap-chain/1"},
                 {"seed", std::to_string(c.seed)},
                 {"burn_in", std::to_string(burn)},
                 {"acceptance_rate", std::to_string(chain.acceptance_rate())}};
  for (int j = 0; j < d; ++j)
    ct.columns.push_back("theta" + std::to_string(j));
  ct.columns.push_back("logpost");
  ct.data.resize(kept.rows(), d + 1);
  ct.data.leftCols(d) = kept;
  ct.data.col(d) = chain.logpost.tail(kept.rows());
  write_csv((fs::path(c.output_dir) / "chain.csv").string(), ct);

  CsvTable it;
  it.manifest = {{"format", "tmap-iact/1"}};
  it.columns = {"dimension", "iact"};
  it.data.resize(d, 2);
  for (int j = 0; j < d; ++j) {
    it.data(j, 0) = j;
    it.data(j, 1) = iact(kept.col(j));
  }
  write_csv((fs::path(c.output_dir) / "iact.csv").string(), it);

  if (tm_samples.rows() > 0) {
    auto rep = compare_posteriors(tm_samples, kept);
    CsvTable cmp;
    cmp.manifest = {{"format", "tmap-comparison/1"},
                    {"agree", rep.agree ? "1" : "0"}};
    cmp.columns = {"dimension", "tm_mean",   "tm_std",   "mcmc_mean",
                   "mcmc_std",  "tm_p50",    "mcmc_p50", "mean_diff_se"};
    cmp.data.resize(d, 8);
    for (int j = 0; j < d; ++j) {
      cmp.data.row(j) << j, rep.tm[j].mean, rep.tm[j].stddev,
          rep.mcmc[j].mean, rep.mcmc[j].stddev, rep.tm[j].p50,
          rep.mcmc[j].p50, rep.mean_diff_se[j];
    }
    write_csv((fs::path(c.output_dir) / "comparison.csv").string(), cmp);
    std::cout << "comparison: " << (rep.agree ? "agree" : "DISAGREE")
              << " (max mean diff "
              << *std::max_element(rep.mean_diff_se.begin(),
                                   rep.mean_diff_se.end())
              << " combined SE)\n";
  }
  std::cout << "acceptance rate " << chain.acceptance_rate() << "\n";
  return 0;
}

// --------------------------------------------------------------- diagnose

int cmd_diagnose(const RunConfig& c, const std::string& map_path,
                 const std::string& obs_path, const std::string& registry) {
  fs::path reg = registry.empty()
                     ? fs::path(c.output_dir) / "registry"
                     : fs::path(registry);
  auto surrogates = load_registry(reg, c.steps);
  const int d = surrogates.front().n_theta();
  const int n_y = surrogates.front().n_y();
  MatrixXd Y = load_observations(
      obs_path.empty()
          ? (fs::path(c.output_dir) / "observations.csv").string()
          : obs_path,
      n_y);
  auto prior = make_prior(c, d);
  TargetDensity post{[&](const VectorXd& th, VectorXd* grad) {
    double lp = prior.logpdf(th, grad);
    VectorXd g;
    for (int t = 1; t <= c.steps; ++t) {
      lp += surrogates[t - 1].loglik(th, Y.row(t - 1).transpose());
      if (grad)
        *grad += surrogates[t - 1].grad_loglik(th, Y.row(t - 1).transpose());
    }
    return lp;
  }};
  ComposedMap M({load_map(map_path)});
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> nd;
  MatrixXd Xtest(c.engine.n_diag_test, d);
  for (int i = 0; i < Xtest.rows(); ++i)
    for (int j = 0; j < d; ++j) Xtest(i, j) = nd(rng);
  auto rep = diagnostics(M, post, ReferenceDensity{d}, Xtest);
  std::cout << "eps_sigma " << rep.variance_diag << "\neps_trace "
            << rep.trace_diag << "\nn_test " << rep.n_test << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive triangular transport maps for sequential inference"};
  app.require_subcommand(1);

  std::string config_path, obs_path, registry, tm_run, map_path;
  std::string out_override;
  int workers = 0;
  std::uint64_t seed_override = 0;
  bool have_seed = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON configuration file")
        ->required();
    sub->add_option("-o,--out", out_override, "override output directory");
    sub->add_option("--seed", seed_override, "override RNG seed")
        ->each([&](const std::string&) { have_seed = true; });
  };

  auto* sim = app.add_subcommand("simulate", "generate observations");
  add_common(sim);
  auto* train = app.add_subcommand("train-likelihoods",
                                   "build per-step surrogate likelihoods");
  add_common(train);
  train->add_option("-j,--workers", workers,
                    "parallel workers (default: TMAP_WORKERS or hardware)");
  auto* assim = app.add_subcommand("assimilate",
                                   "sequential posterior characterization");
  add_common(assim);
  assim->add_option("--obs", obs_path, "observations CSV");
  assim->add_option("--registry", registry, "surrogate registry directory");
  auto* mcmc = app.add_subcommand("mcmc", "Metropolis-Hastings baseline");
  add_common(mcmc);
  mcmc->add_option("--obs", obs_path, "observations CSV");
  mcmc->add_option("--registry", registry, "surrogate registry directory");
  mcmc->add_option("--tm-run", tm_run,
                   "directory of an assimilate run (start/proposal)");
  auto* diag = app.add_subcommand("diagnose", "diagnostics of a stored map");
  add_common(diag);
  diag->add_option("--map", map_path, "map file to diagnose")->required();
  diag->add_option("--obs", obs_path, "observations CSV");
  diag->add_option("--registry", registry, "surrogate registry directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (have_seed) {
      cfg.seed = seed_override;
      cfg.engine.seed = seed_override;
    }
    if (sim->parsed()) return cmd_simulate(cfg);
    if (train->parsed()) return cmd_train_likelihoods(cfg, workers);
    if (assim->parsed()) return cmd_assimilate(cfg, obs_path, registry);
    if (mcmc->parsed()) return cmd_mcmc(cfg, obs_path, registry, tm_run);
    if (diag->parsed()) return cmd_diagnose(cfg, map_path, obs_path, registry);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
