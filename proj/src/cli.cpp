#include "statekit/cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "statekit/csv_ingest.hpp"
#include "statekit/registry.hpp"
#include "statekit/report_io.hpp"
#include "statekit/simulation.hpp"

namespace statekit {
namespace {

using nlohmann::json;

constexpr const char* kEnvPrefix = "STATEKIT_";

struct Settings {
  // data
  std::string input;
  std::string metric;
  std::string y = "y";
  std::string z;
  std::string treatment = "treatment";
  std::string covariates;
  std::string cuped_covariate;
  std::string estimators;
  // simulation
  std::uint64_t seed = 1;
  std::uint64_t dgp_seed = 268;
  std::size_t reps = 1000;
  double outliers = 0.005;
  std::string fractions = "0,0.0025,0.005,0.01";
  bool fast = false;
  std::string mode = "aa";
  std::size_t pool_size = 200000;
  std::size_t draw_size = 20000;
  double effect_scale = 1.0;
  std::string proxy_mode = "pool";
  bool dump_estimates = false;
  // output
  std::string output;
  std::string format = "json";
  std::string fit_trace;
  unsigned threads = 0;
  // predictor
  std::string predictor = "trees";
  std::uint32_t folds = 5;
  std::uint64_t predictor_seed = 20240501;
  std::string train_on = "pooled";
  int n_trees = 200;
  int max_depth = 4;
  double learning_rate = 0.1;
  double subsample = 0.8;
  int min_leaf = 20;
  int max_bins = 255;
  double ridge_lambda = 1e-6;
  std::string ridge_basis = "full";
  bool standardize = false;
  // EM and robust baselines
  int em_max_iter = 500;
  double em_tol = 1e-8;
  double em_v_init = 4.0;
  double em_v_max = 1e6;
  std::string em_dof_update = "profile";
  double winsor_percentile = 0.99;
  bool winsor_two_sided = false;
  double huber_k = 1.345;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad outlier fraction '" + item + "'");
    }
  }
  return out;
}

MetricSpec metric_of(const Settings& s) {
  if (s.metric == "count") {
    if (!s.z.empty()) throw Error(ErrorCode::InvalidConfig, "--z given for a count metric");
    return MetricSpec::count(s.y);
  }
  if (s.metric == "ratio") {
    if (s.z.empty()) {
      throw Error(ErrorCode::InvalidConfig, "ratio metric requires a denominator column (--z)");
    }
    return MetricSpec::ratio(s.y, s.z);
  }
  throw Error(ErrorCode::InvalidConfig, "--metric must be count or ratio");
}

MetricKind simulated_metric(const Settings& s) {
  if (s.metric == "count") return MetricKind::Count;
  if (s.metric == "ratio") return MetricKind::Ratio;
  throw Error(ErrorCode::InvalidConfig, "--metric must be count or ratio");
}

std::vector<std::string> estimators_of(const Settings& s, MetricKind metric, bool simulation) {
  if (!s.estimators.empty()) return split_list(s.estimators);
  if (metric == MetricKind::Ratio) {
    return {"ratio_dim", "ratio_cuped_delta", "ratio_transformed_dim", "ratio_state"};
  }
  if (simulation) return {"dim", "cuped", "cupac", "mlrate", "state", "winsorized_dim", "huber"};
  return {"dim", "cuped", "cupac", "mlrate", "state"};
}

PredictorConfig predictor_of(const Settings& s) {
  PredictorConfig c;
  if (s.predictor == "trees") {
    c.family = PredictorFamily::BoostedTrees;
  } else if (s.predictor == "ridge") {
    c.family = PredictorFamily::BasisRidge;
  } else {
    throw Error(ErrorCode::InvalidConfig, "--predictor must be trees or ridge");
  }
  if (s.train_on == "pooled") {
    c.pool = TrainingPool::Pooled;
  } else if (s.train_on == "control") {
    c.pool = TrainingPool::ControlOnly;
  } else {
    throw Error(ErrorCode::InvalidConfig, "--train-on must be pooled or control");
  }
  if (s.ridge_basis == "full") {
    c.ridge.basis = RidgeBasis::Full;
  } else if (s.ridge_basis == "linear") {
    c.ridge.basis = RidgeBasis::Linear;
  } else {
    throw Error(ErrorCode::InvalidConfig, "--ridge-basis must be full or linear");
  }
  c.k = s.folds;
  c.seed = s.predictor_seed;
  c.trees.n_trees = s.n_trees;
  c.trees.max_depth = s.max_depth;
  c.trees.learning_rate = s.learning_rate;
  c.trees.subsample = s.subsample;
  c.trees.min_samples_leaf = s.min_leaf;
  c.trees.max_bins = s.max_bins;
  c.ridge.lambda = s.ridge_lambda;
  c.ridge.standardize = s.standardize;
  c.threads = s.threads;
  c.check();
  return c;
}

EstimatorOptions options_of(const Settings& s) {
  EstimatorOptions o;
  o.em.max_iter = s.em_max_iter;
  o.em.tol = s.em_tol;
  o.em.v_init = s.em_v_init;
  o.em.v_max = s.em_v_max;
  if (s.em_dof_update == "profile") {
    o.em.dof_update = DofUpdate::Profile;
  } else if (s.em_dof_update == "variational") {
    o.em.dof_update = DofUpdate::Variational;
  } else {
    throw Error(ErrorCode::InvalidConfig, "--em-dof-update must be profile or variational");
  }
  o.em.check();
  o.winsor_percentile = s.winsor_percentile;
  o.winsor_two_sided = s.winsor_two_sided;
  o.huber.tuning = s.huber_k;
  return o;
}

json predictor_json(const Settings& s) {
  return {{"family", s.predictor},        {"folds", s.folds},
          {"seed", s.predictor_seed},     {"train_on", s.train_on},
          {"n_trees", s.n_trees},         {"max_depth", s.max_depth},
          {"learning_rate", s.learning_rate}, {"subsample", s.subsample},
          {"min_samples_leaf", s.min_leaf},   {"max_bins", s.max_bins},
          {"ridge_lambda", s.ridge_lambda},   {"ridge_basis", s.ridge_basis},
          {"standardize", s.standardize}};
}

json options_json(const Settings& s) {
  return {{"em", {{"max_iter", s.em_max_iter}, {"tol", s.em_tol}, {"v_init", s.em_v_init},
                  {"v_max", s.em_v_max}, {"dof_update", s.em_dof_update}}},
          {"winsor_percentile", s.winsor_percentile},
          {"winsor_two_sided", s.winsor_two_sided},
          {"huber_k", s.huber_k}};
}

void emit(const Settings& s, const std::string& text, std::ostream& out) {
  if (s.output.empty()) {
    out << text;
    return;
  }
  std::ofstream file(s.output, std::ios::binary);
  if (!file) throw Error(ErrorCode::FileNotFound, "cannot write '" + s.output + "'");
  file << text;
}

class Attributed : public Error {
 public:
  Attributed(const Error& e, std::string estimator)
      : Error(e.code(), e.what()), estimator_(std::move(estimator)) {}
  const std::string& estimator() const noexcept { return estimator_; }

 private:
  std::string estimator_;
};

int analyze(const Settings& s, std::ostream& out, std::ostream& err) {
  if (s.input.empty()) throw Error(ErrorCode::InvalidConfig, "analyze requires --input");
  const MetricSpec metric = metric_of(s);
  const auto tags = estimators_of(s, metric.kind, false);
  check_estimators(tags, metric.kind);
  const PredictorConfig predictor = predictor_of(s);
  const EstimatorOptions options = options_of(s);
  const OutputFormat format = parse_format(s.format);

  ColumnMap columns;
  columns.treatment = s.treatment;
  columns.covariates = split_list(s.covariates);
  const IngestResult data = ingest_csv(s.input, metric, columns);
  for (const auto& w : data.warnings) err << "warning: " << w << '\n';
  const ExperimentFrame& frame = data.frame;

  bool want_y = false, want_p = false, want_cov = false;
  for (const auto& tag : tags) {
    const auto needs = needs_of(tag);
    want_y = want_y || needs.proxy_y;
    want_p = want_p || needs.proxy_p;
    want_cov = want_cov || needs.covariate;
  }
  if ((want_y || want_p) && frame.dim() == 0) {
    throw Error(ErrorCode::InvalidConfig, "proxy-based estimators need covariate columns");
  }

  std::vector<double> covariate;
  std::string cuped_name;
  if (want_cov) {
    if (frame.dim() == 0) throw Error(ErrorCode::InvalidConfig, "CUPED needs a covariate column");
    std::size_t j = 0;
    if (!s.cuped_covariate.empty()) {
      const auto& names = data.covariate_names;
      const auto it = std::find(names.begin(), names.end(), s.cuped_covariate);
      if (it == names.end()) {
        throw Error(ErrorCode::InvalidConfig,
                    "--cuped-covariate '" + s.cuped_covariate + "' is not a covariate column");
      }
      j = static_cast<std::size_t>(it - names.begin());
    }
    cuped_name = data.covariate_names[j];
    covariate = frame.covariate_column(j);
  }

  ProxyColumn proxy_y, proxy_p;
  std::optional<RatioTransform> transform;
  if (metric.kind == MetricKind::Ratio) transform = build_transform(frame);
  if (want_y) proxy_y = fit_proxy(frame, predictor);
  if (want_p) proxy_p = proxy_for_p(frame, transform->p, predictor);

  EstimatorInputs in;
  in.frame = &frame;
  in.proxy_y = want_y ? &proxy_y : nullptr;
  in.proxy_p = want_p ? &proxy_p : nullptr;
  in.transform = transform ? &*transform : nullptr;
  in.covariate = covariate;
  in.options = &options;

  std::vector<AteReport> reports;
  for (const auto& tag : tags) {
    try {
      reports.push_back(run_estimator(tag, in));
    } catch (const Error& e) {
      throw Attributed(e, tag);
    }
  }

  if (!s.fit_trace.empty()) {
    json traces = json::object();
    if (want_y && std::find(tags.begin(), tags.end(), "state") != tags.end()) {
      traces["state"] = to_json(fit_state(frame, proxy_y, options.em));
    }
    if (want_p) {
      traces["ratio_state"] =
          to_json(fit_state(EmData{frame.treatment(), proxy_p.yhat, transform->p}, options.em));
    }
    std::ofstream file(s.fit_trace);
    if (!file) throw Error(ErrorCode::FileNotFound, "cannot write '" + s.fit_trace + "'");
    file << traces.dump(2) << '\n';
  }

  RunHeader header;
  header.command = "analyze";
  header.config = {{"input", s.input},
                   {"metric", {{"kind", s.metric}, {"numerator", s.y}, {"denominator", s.z}}},
                   {"treatment", s.treatment},
                   {"covariates", data.covariate_names},
                   {"cuped_covariate", cuped_name},
                   {"estimators", tags},
                   {"seed", s.predictor_seed},
                   {"predictor", predictor_json(s)},
                   {"options", options_json(s)},
                   {"n_units", frame.size()}};
  emit(s, render_reports(reports, header, format), out);
  return 0;
}

struct SimulationSetup {
  DgpConfig dgp;
  MonteCarloConfig mc;
  json config;
};

SimulationSetup simulation_setup(const Settings& s, const std::map<std::string, CLI::Option*>& opts,
                                 bool sweep) {
  SimulationSetup out;
  const MetricKind metric = simulated_metric(s);
  auto given = [&](const char* name) { return opts.at(name)->count() > 0; };
  out.dgp.seed = s.dgp_seed;
  out.dgp.outlier_fraction = sweep ? 0.0 : s.outliers;
  out.dgp.pool_size = s.fast && !given("pool-size") ? 20000 : s.pool_size;
  out.dgp.draw_size = s.fast && !given("draw-size") ? 2000 : s.draw_size;
  out.dgp.effect_scale = s.effect_scale;
  out.dgp.check();

  out.mc.metric = metric;
  if (s.mode == "aa") {
    out.mc.mode = SimMode::AA;
  } else if (s.mode == "ab") {
    out.mc.mode = SimMode::AB;
  } else {
    throw Error(ErrorCode::InvalidConfig, "--mode must be aa or ab");
  }
  if (s.proxy_mode == "pool") {
    out.mc.proxy_mode = ProxyMode::Pool;
  } else if (s.proxy_mode == "per-rep") {
    out.mc.proxy_mode = ProxyMode::PerReplication;
  } else {
    throw Error(ErrorCode::InvalidConfig, "--proxy-mode must be pool or per-rep");
  }
  out.mc.reps = s.fast && !given("reps") ? 200 : s.reps;
  out.mc.seed = s.seed;
  out.mc.estimators = estimators_of(s, metric, true);
  out.mc.predictor = predictor_of(s);
  out.mc.options = options_of(s);
  out.mc.threads = s.threads;
  out.mc.keep_estimates = s.dump_estimates;
  out.mc.check();

  out.config = {{"metric", s.metric},
                {"mode", s.mode},
                {"seed", s.seed},
                {"dgp",
                 {{"seed", out.dgp.seed},
                  {"d", out.dgp.d},
                  {"noise_sd_y", out.dgp.noise_sd_y},
                  {"noise_sd_z", out.dgp.noise_sd_z},
                  {"pool_size", out.dgp.pool_size},
                  {"draw_size", out.dgp.draw_size},
                  {"treatment_prob", out.dgp.treatment_prob},
                  {"effect_scale", out.dgp.effect_scale}}},
                {"reps", out.mc.reps},
                {"estimators", out.mc.estimators},
                {"proxy_mode", s.proxy_mode},
                {"predictor", predictor_json(s)},
                {"options", options_json(s)}};
  if (!sweep) out.config["outlier_fraction"] = s.outliers;
  return out;
}

int simulate_cmd(const Settings& s, const std::map<std::string, CLI::Option*>& opts,
                 std::ostream& out) {
  const OutputFormat format = parse_format(s.format);
  SimulationSetup setup = simulation_setup(s, opts, false);
  const Pool clean = generate_pool(setup.dgp);
  setup.config["dgp"]["u"] = clean.u;
  const std::size_t cov = most_correlated_covariate(clean);
  setup.config["cuped_covariate"] = cov;
  const PreparedPool prep =
      prepare_pool(inject_outliers(clean, setup.dgp.outlier_fraction, setup.dgp.seed), cov, setup.mc);
  const auto summary = run_monte_carlo(prep, setup.dgp, setup.mc);
  emit(s, render_summaries({summary}, {"simulate", setup.config}, format), out);
  return 0;
}

int sweep_cmd(const Settings& s, const std::map<std::string, CLI::Option*>& opts,
              std::ostream& out) {
  const OutputFormat format = parse_format(s.format);
  SimulationSetup setup = simulation_setup(s, opts, true);
  const auto fractions = parse_fractions(s.fractions);
  setup.config["fractions"] = fractions;
  setup.config["dgp"]["u"] = generate_pool(setup.dgp).u;
  const auto summaries = sweep_outlier_fraction(setup.dgp, fractions, setup.mc);
  emit(s, render_summaries(summaries, {"sweep", setup.config}, format), out);
  return 0;
}

std::string env_name(const std::string& long_name) {
  std::string e = kEnvPrefix;
  for (char c : long_name) e.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return e;
}

// Registers every flag on `cmd`, recording options by long name.
void add_flags(CLI::App& cmd, Settings& s, std::map<std::string, CLI::Option*>& opts,
               bool with_input, bool simulation) {
  auto add = [&](const char* name, auto& target, const char* help) {
    CLI::Option* o = cmd.add_option(std::string("--") + name, target, help)->envname(env_name(name));
    opts[name] = o;
    return o;
  };
  auto flag = [&](const char* name, bool& target, const char* help) {
    CLI::Option* o = cmd.add_flag(std::string("--") + name, target, help)->envname(env_name(name));
    opts[name] = o;
    return o;
  };
  if (with_input) {
    add("input", s.input, "CSV file with one row per randomized unit");
    add("y", s.y, "numerator / outcome column");
    add("z", s.z, "denominator column (ratio metrics)");
    add("treatment", s.treatment, "0/1 treatment column");
    add("covariates", s.covariates, "comma-separated covariate columns (default: all others)");
    add("cuped-covariate", s.cuped_covariate, "covariate used by CUPED (default: first)");
    add("fit-trace", s.fit_trace, "write STATE fit traces as JSON to this path");
  }
  add("metric", s.metric, "count or ratio")->required()->check(CLI::IsMember({"count", "ratio"}));
  add("estimators", s.estimators, "comma-separated estimator tags");
  add("output", s.output, "output path (default: stdout)");
  add("format", s.format, "json, table or csv")->check(CLI::IsMember({"json", "table", "csv"}));
  add("threads", s.threads, "worker threads (0 = hardware concurrency)");

  add("predictor", s.predictor, "proxy model: trees or ridge");
  add("folds", s.folds, "cross-fitting folds");
  add("predictor-seed", s.predictor_seed, "seed for folds and tree subsampling");
  add("train-on", s.train_on, "pooled or control");
  add("trees", s.n_trees, "boosting rounds");
  add("max-depth", s.max_depth, "tree depth");
  add("learning-rate", s.learning_rate, "boosting shrinkage");
  add("subsample", s.subsample, "row fraction per boosting round");
  add("min-leaf", s.min_leaf, "minimum rows per leaf");
  add("max-bins", s.max_bins, "histogram bins per feature");
  add("ridge-lambda", s.ridge_lambda, "ridge penalty");
  add("ridge-basis", s.ridge_basis, "full or linear");
  flag("standardize", s.standardize, "standardize covariates before the ridge basis");

  add("em-max-iter", s.em_max_iter, "EM iteration cap");
  add("em-tol", s.em_tol, "relative free-energy tolerance");
  add("em-v-init", s.em_v_init, "initial degrees of freedom");
  add("em-v-max", s.em_v_max, "upper bound for degrees of freedom");
  add("em-dof-update", s.em_dof_update, "profile or variational");
  add("winsor-percentile", s.winsor_percentile, "winsorization quantile");
  flag("winsor-two-sided", s.winsor_two_sided, "also clip the lower tail");
  add("huber-k", s.huber_k, "Huber threshold in MAD units");

  if (simulation) {
    add("seed", s.seed, "replication seed");
    add("dgp-seed", s.dgp_seed, "seed of the synthetic pool");
    add("reps", s.reps, "Monte Carlo replications");
    add("mode", s.mode, "aa or ab");
    add("pool-size", s.pool_size, "units in the synthetic pool");
    add("draw-size", s.draw_size, "units drawn per replication");
    add("effect-scale", s.effect_scale, "multiplier on the treatment effects");
    add("proxy-mode", s.proxy_mode, "pool (cross-fit once) or per-rep");
    flag("fast", s.fast, "pool 20k / draw 2k / 200 reps unless overridden");
    flag("dump-estimates", s.dump_estimates, "include per-replication estimates (JSON)");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust average treatment effect estimation for randomized experiments", "statekit"};
  app.set_config("--config", "", "TOML/INI file with flag values");
  app.require_subcommand(1);

  Settings s;
  std::map<std::string, CLI::Option*> analyze_opts, simulate_opts, sweep_opts;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "Estimate effects on a CSV file");
  add_flags(*analyze_cmd, s, analyze_opts, true, false);
  CLI::App* simulate_c = app.add_subcommand("simulate", "Monte Carlo study on synthetic data");
  add_flags(*simulate_c, s, simulate_opts, false, true);
  simulate_c->add_option("--outliers", s.outliers, "outlier fraction")->envname(env_name("outliers"));
  CLI::App* sweep_c = app.add_subcommand("sweep", "Monte Carlo study across outlier fractions");
  add_flags(*sweep_c, s, sweep_opts, false, true);
  sweep_c->add_option("--fractions", s.fractions, "comma-separated outlier fractions")
      ->envname(env_name("fractions"));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }
  if (s.threads == 0) s.threads = std::max(1u, std::thread::hardware_concurrency());

  try {
    if (analyze_cmd->parsed()) return analyze(s, out, err);
    if (simulate_c->parsed()) return simulate_cmd(s, simulate_opts, out);
    return sweep_cmd(s, sweep_opts, out);
  } catch (const Error& e) {
    json j{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}};
    if (const auto* a = dynamic_cast<const Attributed*>(&e)) j["error"]["estimator"] = a->estimator();
    if (const auto* p = dynamic_cast<const ParseError*>(&e)) {
      j["error"]["row"] = p->row();
      j["error"]["column"] = p->column();
    }
    if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
      json list = json::array();
      for (const auto& viol : v->violations()) {
        list.push_back({{"code", to_string(viol.code)},
                        {"unit", viol.unit_index == kFrameLevel ? json(nullptr) : json(viol.unit_index)},
                        {"detail", viol.detail}});
      }
      j["error"]["violations"] = list;
    }
    err << j.dump() << '\n';
    return 2;
  }
}

}  // namespace statekit
