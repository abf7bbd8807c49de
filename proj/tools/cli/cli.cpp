#include "cli.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "causalma/error.hpp"
#include "causalma/heterogeneity.hpp"
#include "causalma/ipd_data.hpp"
#include "causalma/prediction.hpp"
#include "causalma/serialization.hpp"
#include "causalma/simulation.hpp"
#include "causalma/transport_estimators.hpp"
#include "causalma/version.hpp"
#include "json_config.hpp"

namespace causalma::cli {
namespace fs = std::filesystem;

namespace {

// Configuration or I/O problem detected by the tool itself (exit 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string input;
  std::string schema;
  std::string output_dir = "causalma-out";
  unsigned workers = 0;
  std::string membership = "pairwise";
  std::string treatment_model = "empirical";
  bool hajek = false;

  EstimatorOptions estimator() const {
    EstimatorOptions o;
    if (membership == "multinomial") o.membership = MembershipModel::Multinomial;
    if (treatment_model == "logistic") o.treatment_model = TreatmentModel::Logistic;
    o.hajek = hajek;
    return o;
  }
  Json estimator_json() const {
    return Json{{"membership", membership}, {"treatment-model", treatment_model}, {"hajek", hajek}};
  }
};

struct EstimateConfig {
  DataOptions data;
  std::vector<std::string> arms;
  std::vector<std::string> methods{"om"};
};

struct GammaConfig {
  DataOptions data;
  std::string arm;
  std::string method = "om";
  int b = 1000;
  std::uint64_t seed = 0;
};

struct PredictConfig {
  DataOptions data;
  std::string arm;
  std::string estimator = "om";
  std::vector<std::string> methods{"mom", "simple", "wild"};
  std::vector<std::string> constructions{"quantile", "normal"};
  std::string multiplier = "normal";
  int b = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  bool dump_draws = false;
  bool paper_scale = false;
};

struct SimulateConfig {
  int m = 5;
  std::string delta = "normal";
  bool grid = false;
  int reps = 200;
  int b = 200;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::vector<std::string> methods{"mom", "simple", "wild"};
  std::vector<std::string> constructions{"quantile", "normal"};
  bool center_pareto = false;
  std::string pareto_order = "scale-shape";
  bool paper_scale = false;
  bool plot_data = false;
  std::string output_dir = "causalma-out";
  unsigned workers = 0;
};

void add_input_options(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--input", d.input, "IPD CSV file")->required();
  cmd->add_option("--schema", d.schema, "JSON sidecar renaming columns");
  cmd->add_option("--output-dir", d.output_dir, "Directory for output files")->capture_default_str();
  cmd->add_option("--workers", d.workers, "Worker threads (0: all available)")->capture_default_str();
  cmd->add_option("--membership", d.membership, "Study membership model")
      ->check(CLI::IsMember({"pairwise", "multinomial"}))
      ->capture_default_str();
  cmd->add_option("--treatment-model", d.treatment_model, "Treatment probability model")
      ->check(CLI::IsMember({"empirical", "logistic"}))
      ->capture_default_str();
  cmd->add_flag("--hajek", d.hajek, "Normalize inverse-probability weights by their sum");
}

CLI::Option* add_level(CLI::App* cmd, double& level) {
  return cmd->add_option("--level", level, "Nominal interval level")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw UsageError(fmt::format("--level must lie in (0, 1), got {}", level));
}

IpdDataset load(const DataOptions& d) {
  const ColumnMapping schema = d.schema.empty() ? ColumnMapping{} : ColumnMapping::from_json_file(d.schema);
  return load_ipd(d.input, schema);
}

fs::path prepare_output_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError(fmt::format("cannot create output directory '{}': {}", dir, ec.message()));
  return fs::path(dir);
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError(fmt::format("cannot open '{}' for writing", path.string()));
  writer(out);
  if (!out) throw UsageError(fmt::format("failed writing '{}'", path.string()));
}

void write_json(const fs::path& path, const Json& j) {
  write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

// The replayable configuration: feeding this file back through --config
// reproduces the run. Output location and worker count are deliberately left
// out because they do not affect results.
void write_run_config(const fs::path& dir, const OutputHeader& header) {
  Json j{{"command", header.command}};
  for (const auto& [key, value] : header.config.items()) j[key] = value;
  write_json(dir / "run_config.json", j);
}

Json data_config(const DataOptions& d) {
  Json j{{"input", d.input}};
  if (!d.schema.empty()) j["schema"] = d.schema;
  const Json estimator = d.estimator_json();
  for (const auto& [key, value] : estimator.items()) j[key] = value;
  return j;
}

int cmd_estimate(const EstimateConfig& cfg) {
  const IpdDataset ds = load(cfg.data);
  std::vector<std::string> arms = cfg.arms.empty() ? ds.arms() : cfg.arms;
  for (const auto& a : arms) ds.arm_index(a);  // UnknownArm before any fitting
  std::vector<Method> methods;
  for (const auto& m : cfg.methods) methods.push_back(parse_method(m));

  std::vector<PooledEstimate> pooled;
  for (const auto& arm : arms) {
    for (Method m : methods) pooled.push_back(estimate_pooled(ds, arm, m, cfg.data.estimator()));
  }

  OutputHeader header{"estimate", data_config(cfg.data), 0};
  header.config["arm"] = arms;
  header.config["method"] = cfg.methods;
  const fs::path dir = prepare_output_dir(cfg.data.output_dir);
  Json list = Json::array();
  for (const auto& p : pooled) list.push_back(to_json(p));
  write_json(dir / "estimates.json", with_header(header, "estimates", std::move(list)));
  write_file(dir / "estimates.csv", [&](std::ostream& out) {
    write_csv_header(out, header);
    write_estimates_csv(out, pooled);
  });
  write_run_config(dir, header);

  for (const auto& p : pooled) {
    std::cout << fmt::format("{:<12} {:<5} pooled {:.6f}\n", p.arm, to_string(p.method), p.value);
  }
  return kExitOk;
}

struct MomResult {
  PredictionInterval interval;
  HeterogeneityEstimate gamma;
  double var_pooled = 0.0;
  std::size_t failures = 0;
};

HeterogeneityEstimate gamma_from_bootstrap(const PooledEstimate& pooled, const JointBootstrap& boot) {
  Eigen::VectorXd mu(static_cast<Eigen::Index>(pooled.per_study.size()));
  for (std::size_t s = 0; s < pooled.per_study.size(); ++s) mu[static_cast<Eigen::Index>(s)] = pooled.per_study[s].value;
  return estimate_gamma_squared(CorrelatedEstimates::with_equal_weights(mu, boot.covariance()));
}

int cmd_gamma(const GammaConfig& cfg) {
  const IpdDataset ds = load(cfg.data);
  const Method method = parse_method(cfg.method);
  const EstimatorOptions est = cfg.data.estimator();
  const PooledEstimate pooled = estimate_pooled(ds, cfg.arm, method, est);
  JointBootstrapOptions jb;
  jb.replicates = cfg.b;
  jb.seed = derive_seed(cfg.seed, {1});
  jb.workers = cfg.data.workers;
  const JointBootstrap boot = joint_bootstrap(ds, ds.arm_index(cfg.arm), method, jb, est);
  const HeterogeneityEstimate gamma = gamma_from_bootstrap(pooled, boot);

  OutputHeader header{"gamma", data_config(cfg.data), cfg.seed};
  header.config["arm"] = cfg.arm;
  header.config["method"] = cfg.method;
  header.config["b"] = cfg.b;
  header.config["seed"] = cfg.seed;
  const fs::path dir = prepare_output_dir(cfg.data.output_dir);
  Json payload = to_json(gamma);
  payload["var_pooled"] = boot.pooled_variance(gamma.inputs.weights);
  payload["bootstrap_failures"] = boot.failures;
  payload["pooled"] = to_json(pooled);
  write_json(dir / "gamma.json", with_header(header, "heterogeneity", std::move(payload)));
  write_run_config(dir, header);

  std::cout << fmt::format("gamma_tilde_sq {:.6f}\ngamma_hat_sq   {:.6f}\n", gamma.gamma_tilde_sq, gamma.gamma_hat_sq);
  return kExitOk;
}

int cmd_predict(PredictConfig cfg) {
  check_level(cfg.level);
  const IpdDataset ds = load(cfg.data);
  const Method estimator = parse_method(cfg.estimator);
  const EstimatorOptions est = cfg.data.estimator();
  std::vector<IntervalMethod> methods;
  for (const auto& m : cfg.methods) {
    const IntervalMethod im = parse_interval_method(m);
    if (std::find(methods.begin(), methods.end(), im) == methods.end()) methods.push_back(im);
  }
  std::vector<Construction> constructions;
  for (const auto& c : cfg.constructions) constructions.push_back(parse_construction(c));
  const auto wants = [&](IntervalMethod m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  if (wants(IntervalMethod::MoM) && ds.num_studies() <= 2) {
    throw Error(ErrorKind::TooFewStudies,
                fmt::format("method-of-moments intervals need at least 3 trials, got {}", ds.num_studies()));
  }
  if (wants(IntervalMethod::WildBootstrap) && estimator != Method::OM) {
    throw UsageError("the wild bootstrap is available for the outcome-model estimator only");
  }
  const MultiplierLaw law = cfg.multiplier == "rademacher" ? MultiplierLaw::Rademacher : MultiplierLaw::Normal;
  const int arm = ds.arm_index(cfg.arm);

  const PooledEstimate pooled = estimate_pooled(ds, cfg.arm, estimator, est);
  std::vector<PredictionInterval> intervals;
  std::optional<MomResult> mom;
  std::vector<std::pair<std::string, BootstrapDraws>> draws;
  for (IntervalMethod m : methods) {
    if (m == IntervalMethod::MoM) {
      JointBootstrapOptions jb;
      jb.replicates = cfg.b;
      jb.seed = derive_seed(cfg.seed, {1});
      jb.workers = cfg.data.workers;
      const JointBootstrap boot = joint_bootstrap(ds, arm, estimator, jb, est);
      MomResult r;
      r.gamma = gamma_from_bootstrap(pooled, boot);
      r.var_pooled = boot.pooled_variance(r.gamma.inputs.weights);
      r.failures = boot.failures;
      r.interval = mom_interval(pooled, r.gamma, r.var_pooled, cfg.level);
      r.interval.b_reps = cfg.b;
      intervals.push_back(r.interval);
      mom = std::move(r);
      continue;
    }
    BootstrapSettings settings;
    settings.replicates = cfg.b;
    settings.workers = cfg.data.workers;
    BootstrapDraws d;
    if (m == IntervalMethod::SimpleBootstrap) {
      settings.seed = derive_seed(cfg.seed, {2});
      d = simple_bootstrap_predict(ds, cfg.arm, estimator, settings, est);
    } else {
      settings.seed = derive_seed(cfg.seed, {3});
      d = wild_bootstrap_predict(ds, cfg.arm, settings, law);
    }
    for (Construction c : constructions) {
      PredictionInterval pi = interval_from_draws(d, c, cfg.level, m);
      pi.b_reps = cfg.b;
      intervals.push_back(pi);
    }
    draws.emplace_back(to_string(m), std::move(d));
  }

  OutputHeader header{"predict", data_config(cfg.data), cfg.seed};
  header.config["arm"] = cfg.arm;
  header.config["estimator"] = cfg.estimator;
  header.config["methods"] = cfg.methods;
  header.config["construction"] = cfg.constructions;
  header.config["multiplier"] = cfg.multiplier;
  header.config["b"] = cfg.b;
  header.config["level"] = cfg.level;
  header.config["seed"] = cfg.seed;
  header.config["dump-draws"] = cfg.dump_draws;
  header.config["paper-scale"] = cfg.paper_scale;

  const fs::path dir = prepare_output_dir(cfg.data.output_dir);
  Json payload{{"pooled", to_json(pooled)}};
  Json list = Json::array();
  for (const auto& pi : intervals) list.push_back(to_json(pi));
  payload["intervals"] = std::move(list);
  if (mom) {
    Json g = to_json(mom->gamma);
    g["var_pooled"] = mom->var_pooled;
    g["bootstrap_failures"] = mom->failures;
    payload["heterogeneity"] = std::move(g);
  }
  Json failures = Json::object();
  for (const auto& [name, d] : draws) failures[name] = d.failures;
  payload["bootstrap_failures"] = std::move(failures);
  write_json(dir / "intervals.json", with_header(header, "prediction", std::move(payload)));
  write_file(dir / "intervals.csv", [&](std::ostream& out) {
    write_csv_header(out, header);
    write_intervals_csv(out, intervals);
  });
  if (cfg.dump_draws) {
    for (const auto& [name, d] : draws) {
      write_file(dir / fmt::format("draws_{}.csv", name), [&](std::ostream& out) {
        write_csv_header(out, header);
        write_draws_csv(out, d);
      });
    }
  }
  write_run_config(dir, header);

  for (const auto& pi : intervals) {
    const std::string label =
        pi.method == IntervalMethod::MoM ? "mom" : to_string(pi.method) + "/" + to_string(pi.construction);
    std::cout << fmt::format("{:<16} [{:.6f}, {:.6f}]\n", label, pi.lower, pi.upper);
  }
  return kExitOk;
}

int cmd_simulate(const SimulateConfig& cfg) {
  check_level(cfg.level);
  Scenario base;
  base.m = cfg.m;
  base.delta_law = DeltaLaw::parse(cfg.delta);
  base.delta_law.center_pareto = cfg.center_pareto;
  base.delta_law.pareto_order = cfg.pareto_order == "shape-scale" ? ParetoOrder::ShapeScale : ParetoOrder::ScaleShape;
  base.reps = cfg.reps;
  base.b_reps = cfg.b;
  base.level = cfg.level;
  base.seed = cfg.seed;
  const std::vector<MethodSpec> methods = expand_methods(cfg.methods, cfg.constructions);
  const std::vector<Scenario> scenarios = cfg.grid ? scenario_grid(base) : std::vector<Scenario>{base};
  for (const auto& s : scenarios) s.validate();

  std::vector<CoverageReport> reports;
  for (const auto& s : scenarios) {
    auto r = run_scenario(s, methods, cfg.workers);
    for (auto& rep : r) {
      std::cout << fmt::format("m={:<3} delta={:<12} {:<16} coverage {:.3f} (se {:.3f}) width {:.3f}\n", s.m,
                               s.delta_law.name(), rep.method, rep.coverage, rep.mc_se, rep.mean_width);
      reports.push_back(std::move(rep));
    }
  }

  OutputHeader header{"simulate", Json::object(), cfg.seed};
  header.config["m"] = cfg.m;
  header.config["delta"] = cfg.delta;
  header.config["grid"] = cfg.grid;
  header.config["reps"] = cfg.reps;
  header.config["b"] = cfg.b;
  header.config["level"] = cfg.level;
  header.config["seed"] = cfg.seed;
  header.config["methods"] = cfg.methods;
  header.config["construction"] = cfg.constructions;
  header.config["center-pareto"] = cfg.center_pareto;
  header.config["pareto-order"] = cfg.pareto_order;
  header.config["paper-scale"] = cfg.paper_scale;
  header.config["plot-data"] = cfg.plot_data;

  const fs::path dir = prepare_output_dir(cfg.output_dir);
  Json list = Json::array();
  for (const auto& r : reports) list.push_back(to_json(r));
  Json payload{{"scenarios", Json::array()}, {"reports", std::move(list)}};
  for (const auto& s : scenarios) payload["scenarios"].push_back(to_json(s));
  write_json(dir / "coverage.json", with_header(header, "coverage", std::move(payload)));
  write_file(dir / "coverage.csv", [&](std::ostream& out) {
    write_csv_header(out, header);
    write_coverage_csv(out, reports);
  });
  if (cfg.plot_data) {
    write_file(dir / "plot_data.csv", [&](std::ostream& out) {
      write_csv_header(out, header);
      write_plot_data_csv(out, reports);
    });
  }
  write_run_config(dir, header);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Causally interpretable meta-analysis of individual participant data", "causalma"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();  // lets --config follow the subcommand name
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file of flag values; command-line flags win");

  EstimateConfig est;
  auto* c_est = app.add_subcommand("estimate", "Transported mean potential outcomes per trial and pooled");
  add_input_options(c_est, est.data);
  c_est->add_option("--arm", est.arms, "Arms to estimate (default: all)")->delimiter(',');
  c_est->add_option("--method", est.methods, "om, ipw, aipw (comma separated)")
      ->delimiter(',')
      ->capture_default_str();

  GammaConfig gam;
  auto* c_gam = app.add_subcommand("gamma", "Between-study variance with a bootstrap covariance");
  add_input_options(c_gam, gam.data);
  c_gam->add_option("--arm", gam.arm, "Treatment arm")->required();
  c_gam->add_option("--method", gam.method, "om, ipw or aipw")->capture_default_str();
  c_gam->add_option("--b", gam.b, "Bootstrap replicates")->check(CLI::PositiveNumber)->capture_default_str();
  c_gam->add_option("--seed", gam.seed, "Master seed")->required();
  bool gam_paper_scale = false;
  c_gam->add_flag("--paper-scale", gam_paper_scale, "Use B = 1000 unless --b is given");

  PredictConfig pre;
  auto* c_pre = app.add_subcommand("predict", "Prediction intervals for a new trial in the target population");
  add_input_options(c_pre, pre.data);
  c_pre->add_option("--arm", pre.arm, "Treatment arm")->required();
  c_pre->add_option("--estimator", pre.estimator, "Per-trial estimator: om, ipw or aipw")->capture_default_str();
  c_pre->add_option("--methods,--method", pre.methods, "mom, simple, wild (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  c_pre->add_option("--construction", pre.constructions, "Bootstrap interval construction: quantile, normal")
      ->delimiter(',')
      ->capture_default_str();
  c_pre->add_option("--multiplier", pre.multiplier, "Wild bootstrap multiplier law")
      ->check(CLI::IsMember({"normal", "rademacher"}))
      ->capture_default_str();
  auto* pre_b = c_pre->add_option("--b", pre.b, "Bootstrap replicates")->check(CLI::PositiveNumber)->capture_default_str();
  add_level(c_pre, pre.level);
  c_pre->add_option("--seed", pre.seed, "Master seed")->required();
  c_pre->add_flag("--dump-draws", pre.dump_draws, "Write bootstrap draws as CSV");
  c_pre->add_flag("--paper-scale", pre.paper_scale, "Use B = 1000 unless --b is given");

  SimulateConfig sim;
  auto* c_sim = app.add_subcommand("simulate", "Coverage of prediction intervals on simulated meta-analyses");
  c_sim->add_option("--m", sim.m, "Number of trials")->capture_default_str();
  c_sim->add_option("--delta", sim.delta, "Trial shift law: uniform, normal, exponential, pareto")
      ->capture_default_str();
  c_sim->add_flag("--grid", sim.grid, "Run all 20 scenarios (m x delta law)");
  auto* sim_reps = c_sim->add_option("--reps", sim.reps, "Monte Carlo replications")->capture_default_str();
  auto* sim_b = c_sim->add_option("--b", sim.b, "Bootstrap replicates")->capture_default_str();
  add_level(c_sim, sim.level);
  c_sim->add_option("--seed", sim.seed, "Master seed")->required();
  c_sim->add_option("--methods,--method", sim.methods, "mom, simple, wild (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  c_sim->add_option("--construction", sim.constructions, "quantile, normal (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  c_sim->add_flag("--center-pareto", sim.center_pareto, "Subtract the Pareto mean from its draws");
  c_sim->add_option("--pareto-order", sim.pareto_order, "Reading of Pareto(1, 3)")
      ->check(CLI::IsMember({"scale-shape", "shape-scale"}))
      ->capture_default_str();
  c_sim->add_flag("--paper-scale", sim.paper_scale, "Use reps = b = 1000 unless given explicitly");
  c_sim->add_flag("--plot-data", sim.plot_data, "Also write coverage series for plotting");
  c_sim->add_option("--output-dir", sim.output_dir, "Directory for output files")->capture_default_str();
  c_sim->add_option("--workers", sim.workers, "Worker threads (0: all available)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (c_est->parsed()) return cmd_estimate(est);
    if (c_gam->parsed()) {
      if (gam_paper_scale && c_gam->get_option("--b")->count() == 0) gam.b = 1000;
      return cmd_gamma(gam);
    }
    if (c_pre->parsed()) {
      if (pre.paper_scale && pre_b->count() == 0) pre.b = 1000;
      return cmd_predict(pre);
    }
    if (c_sim->parsed()) {
      if (sim.paper_scale) {
        if (sim_reps->count() == 0) sim.reps = 1000;
        if (sim_b->count() == 0) sim.b = 1000;
      }
      return cmd_simulate(sim);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_input_error(e.kind()) ? kExitInput : kExitEstimation;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitEstimation;
  }
  return kExitInput;
}

}  // namespace causalma::cli
