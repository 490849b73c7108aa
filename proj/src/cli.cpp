#include "apportion/cli.hpp"

#include "apportion/error.hpp"
#include "apportion/estimators.hpp"
#include "apportion/io.hpp"
#include "apportion/predictors.hpp"
#include "apportion/simulation.hpp"
#include "apportion/variability.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <map>
#include <set>
#include <sstream>

namespace apportion {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

ordered_json number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json to_json(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

ordered_json to_json(const Matrix& m) {
  ordered_json a = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Common {
  std::string dict, labels, sample, method, out;
  std::optional<double> gamma;
  bool no_timestamp = false;
};

ordered_json provenance(const std::vector<std::pair<std::string, std::string>>& inputs,
                        std::optional<std::uint64_t> seed, bool no_timestamp) {
  ordered_json p;
  ordered_json in = ordered_json::object();
  for (const auto& [role, path] : inputs) {
    in[role] = {{"path", path}, {"sha256", io::sha256_file(path)}};
  }
  p["inputs"] = in;
  p["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
  p["library_version"] = kLibraryVersion;
  p["rng"] = kRandomStreamVersion;
  if (!no_timestamp) p["timestamp"] = utc_timestamp();
  return p;
}

void emit(const ordered_json& report, const std::string& path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << text;
}

ordered_json threshold_json(const ThresholdResult& t) {
  ordered_json j;
  j["value"] = number(t.value);
  j["infinite"] = std::isinf(t.value);
  j["diagnostic"] = t.diagnostic;
  return j;
}

ordered_json diagnostics(const io::LoadedDictionary& d, const ApportionmentBasis& basis) {
  ordered_json j;
  j["features"] = basis.features();
  j["profiles"] = basis.profiles();
  j["categories"] = basis.categories();
  j["dictionary_rank"] = numerical_rank(d.dictionary.values());
  j["design_rank"] = numerical_rank(d.design.weights());
  j["residual_rank"] = static_cast<Index>(basis.residual_svd().singular.size());
  j["gamma_threshold"] = threshold_json(gamma_threshold(basis));
  return j;
}

int run_estimate(const Common& c, bool se, std::ostream& out) {
  const io::LoadedDictionary d = io::load_dictionary(c.dict, c.labels);
  const Profile y = io::load_sample(c.sample, d.dictionary.feature_ids());
  if (!y.complete()) {
    throw ValidationError(c.sample + ": " + std::to_string(y.size() - y.observed_count()) +
                          " dictionary feature(s) are missing; use 'predict' for partial samples");
  }
  const ApportionmentBasis basis = decompose(d.dictionary, d.design);

  Estimate est;
  Vector fitted;
  if (c.method == "rts") {
    est = estimate_rts(basis, y);
    fitted = y.values - basis.dictionary_solver().residual(y.values);
  } else if (c.method == "atr") {
    est = estimate_atr(basis, y);
    fitted = basis.group_means() * est.theta;
  } else {
    est = estimate_fgls(basis, y, *c.gamma);
    fitted = basis.group_means() * est.theta;
  }

  ordered_json r;
  r["command"] = "estimate";
  r["method"] = std::string(method_name(est.method));
  r["categories"] = d.design.category_names();
  r["theta"] = to_json(est.theta);
  r["gamma"] = est.gamma ? number(*est.gamma) : ordered_json(nullptr);
  if (se) {
    const Matrix sse = standard_errors_rts(basis, y);
    r["standard_errors"] = to_json(Vector(sse.diagonal().cwiseSqrt()));
    r["sse"] = to_json(sse);
  }
  ordered_json diag = diagnostics(d, basis);
  diag["residual_norm"] = number((y.values - fitted).norm());
  r["diagnostics"] = diag;
  r["provenance"] = provenance({{"dictionary", c.dict}, {"labels", c.labels}, {"sample", c.sample}},
                               std::nullopt, c.no_timestamp);
  emit(r, c.out, out);
  return 0;
}

int run_predict(const Common& c, const std::string& mask_excitation, const std::string& mask_features,
                const std::string& completed, std::ostream& out) {
  const io::LoadedDictionary d = io::load_dictionary(c.dict, c.labels);
  const Profile y = io::load_sample(c.sample, d.dictionary.feature_ids());
  const auto& ids = d.dictionary.feature_ids();

  std::vector<bool> observed = y.observed;
  std::vector<Index> masked;
  if (!mask_excitation.empty()) {
    masked = io::excitation_mask(ids, io::parse_number_list(mask_excitation, "--mask-excitation"));
  } else if (!mask_features.empty()) {
    std::map<std::string, Index> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], static_cast<Index>(i));
    for (const auto& id : io::read_feature_list(mask_features)) {
      const auto it = index.find(id);
      if (it == index.end()) {
        throw ValidationError(mask_features + ": feature '" + id + "' is not a dictionary feature");
      }
      masked.push_back(it->second);
    }
  }
  for (Index i : masked) observed[static_cast<std::size_t>(i)] = false;

  const ApportionmentBasis basis = decompose(d.dictionary, d.design);
  const PartitionedProblem prob(basis, y.values, observed);
  Vector prediction;
  if (c.method == "rts") {
    prediction = predict_rts(prob);
  } else if (c.method == "atr") {
    prediction = predict_atr(prob);
  } else {
    prediction = predict_fgls(prob, *c.gamma);
  }

  ordered_json r;
  r["command"] = "predict";
  r["method"] = c.method == "rts" ? "RTS" : c.method == "atr" ? "ATR" : "FGLS";
  r["gamma"] = c.gamma ? number(*c.gamma) : ordered_json(nullptr);
  r["observed_features"] = static_cast<Index>(prob.observed_rows().size());
  ordered_json preds = ordered_json::array();
  double held_out_ss = 0.0;
  Index held_out = 0;
  for (std::size_t k = 0; k < prob.unobserved_rows().size(); ++k) {
    const Index i = prob.unobserved_rows()[k];
    ordered_json e;
    e["feature_id"] = ids[static_cast<std::size_t>(i)];
    e["value"] = number(prediction(static_cast<Index>(k)));
    if (y.observed[static_cast<std::size_t>(i)]) {
      e["held_out"] = number(y.values(i));
      held_out_ss += std::pow(y.values(i) - prediction(static_cast<Index>(k)), 2);
      ++held_out;
    }
    preds.push_back(e);
  }
  r["predictions"] = preds;
  ordered_json diag = diagnostics(d, basis);
  diag["held_out_features"] = held_out;
  diag["held_out_rmse"] =
      held_out > 0 ? number(std::sqrt(held_out_ss / static_cast<double>(held_out))) : ordered_json(nullptr);
  r["diagnostics"] = diag;
  std::vector<std::pair<std::string, std::string>> inputs{
      {"dictionary", c.dict}, {"labels", c.labels}, {"sample", c.sample}};
  if (!mask_features.empty()) inputs.emplace_back("mask_features", mask_features);
  r["provenance"] = provenance(inputs, std::nullopt, c.no_timestamp);

  if (!completed.empty()) {
    Profile full;
    full.values = complete_profile(prob, prediction);
    full.observed.assign(ids.size(), true);
    full.feature_ids = ids;
    io::write_profile(completed, full);
  }
  emit(r, c.out, out);
  return 0;
}

int run_threshold(const Common& c, std::ostream& out) {
  const io::LoadedDictionary d = io::load_dictionary(c.dict, c.labels);
  const ApportionmentBasis basis = decompose(d.dictionary, d.design);
  const ThresholdResult t = gamma_threshold(basis);
  ordered_json r;
  r["command"] = "threshold";
  r["categories"] = d.design.category_names();
  r["gamma_threshold"] = number(t.value);
  r["threshold"] = threshold_json(t);
  r["v1"] = to_json(t.v1);
  r["v2"] = to_json(t.v2);
  if (c.gamma) {
    const VarianceProfile v = variance_profiles(basis, *c.gamma);
    ordered_json vp;
    vp["gamma"] = number(v.gamma);
    vp["v_atr"] = to_json(v.v_atr);
    vp["v_rts"] = to_json(v.v_rts);
    // Nonnegative when RTS is at least as precise as ATR in the Loewner order.
    vp["min_eigenvalue_atr_minus_rts"] = number(min_eigenvalue(v.v_atr - v.v_rts));
    r["variance_profiles"] = vp;
  }
  r["diagnostics"] = diagnostics(d, basis);
  r["provenance"] = provenance({{"dictionary", c.dict}, {"labels", c.labels}}, std::nullopt,
                               c.no_timestamp);
  emit(r, c.out, out);
  return 0;
}

ordered_json alpha_summaries(const ExperimentResult& res) {
  ordered_json out = ordered_json::array();
  const auto& cfg = res.config;
  for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
    std::map<std::pair<Index, std::string>, std::vector<double>> by_key;  // (theta/cat, metric-method)
    for (const ReportRow& row : res.rows) {
      if (row.alpha != cfg.alphas[a]) continue;
      const Index key = cfg.mode == ExperimentMode::StandardErrors ? row.theta_id * 1000 + row.category
                                                                    : row.theta_id;
      by_key[{key, row.method + "/" + row.metric}].push_back(row.value);
    }
    auto value = [&](Index key, const std::string& name) { return by_key.at({key, name}).front(); };
    std::set<Index> keys;
    for (const auto& [k, v] : by_key) keys.insert(k.first);
    ordered_json s;
    s["alpha"] = cfg.alphas[a];
    s["dictionary_profiles"] = res.dictionary_sizes[a];
    s["cells"] = static_cast<Index>(keys.size());
    double count = 0.0, ratio_sum = 0.0, ratio_max = 0.0;
    for (Index k : keys) {
      switch (cfg.mode) {
        case ExperimentMode::Estimation: {
          const double rts = value(k, "RTS/rmse_theta");
          count += rts < value(k, "ATR/rmse_theta");
          const double ratio = rts / value(k, "ORACLE_GLS/rmse_theta");
          ratio_sum += ratio;
          ratio_max = std::max(ratio_max, ratio);
          break;
        }
        case ExperimentMode::Prediction:
          count += value(k, "RTS/rmse_prediction") <= value(k, "ATR/rmse_prediction");
          break;
        case ExperimentMode::StandardErrors: {
          const double se = value(k, "RTS/mean_se_rts");
          const double sd = value(k, "RTS/sd_rts");
          count += se <= sd;
          ratio_sum += se / sd;
          break;
        }
      }
    }
    const double n = static_cast<double>(keys.size());
    switch (cfg.mode) {
      case ExperimentMode::Estimation:
        s["fraction_rts_below_atr"] = count / n;
        s["mean_rts_over_gls"] = ratio_sum / n;
        s["max_rts_over_gls"] = ratio_max;
        break;
      case ExperimentMode::Prediction:
        s["fraction_rts_at_most_atr"] = count / n;
        break;
      case ExperimentMode::StandardErrors:
        s["fraction_se_at_most_sd"] = count / n;
        s["mean_se_over_sd"] = ratio_sum / n;
        break;
    }
    out.push_back(s);
  }
  return out;
}

int run_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<unsigned> threads, bool no_timestamp, std::ostream& out) {
  io::SimulationConfig cfg = io::read_simulation_config(config_path);
  if (threads) cfg.experiment.threads = *threads;

  std::vector<std::pair<std::string, std::string>> inputs{{"config", config_path}};
  std::optional<Dictionary> dict;
  std::optional<SourceDesign> design;
  if (cfg.dictionary_path) {
    const fs::path base = fs::path(config_path).parent_path();
    const fs::path dp = cfg.dictionary_path->is_absolute() ? *cfg.dictionary_path : base / *cfg.dictionary_path;
    const fs::path lp = cfg.labels_path->is_absolute() ? *cfg.labels_path : base / *cfg.labels_path;
    io::LoadedDictionary d = io::load_dictionary(dp, lp);
    dict.emplace(std::move(d.dictionary));
    design.emplace(std::move(d.design));
    inputs.emplace_back("dictionary", dp.string());
    inputs.emplace_back("labels", lp.string());
  } else {
    EemDictionary g = synthetic_eem_dictionary(cfg.generator);
    dict.emplace(std::move(g.dictionary));
    design.emplace(std::move(g.design));
  }
  if (!cfg.mask_excitation.empty()) {
    cfg.experiment.unobserved_features = io::excitation_mask(dict->feature_ids(), cfg.mask_excitation);
  }

  const ExperimentResult res = run_experiment(cfg.experiment, *dict, *design);

  fs::create_directories(out_dir);
  {
    std::ofstream csv(fs::path(out_dir) / "report.csv", std::ios::binary);
    if (!csv) throw ValidationError("cannot write report.csv in '" + out_dir + "'");
    io::write_report_csv(csv, res, design->category_names());
  }
  ordered_json s;
  s["command"] = "simulate";
  s["mode"] = experiment_mode_name(cfg.experiment.mode);
  s["features"] = dict->features();
  s["profiles"] = dict->profiles();
  s["categories"] = design->category_names();
  s["theta_count"] = cfg.experiment.theta_count;
  s["replicates"] = cfg.experiment.replicates;
  s["alphas"] = cfg.experiment.alphas;
  s["masked_features"] = static_cast<Index>(cfg.experiment.unobserved_features.size());
  ordered_json cal;
  cal["m"] = number(res.calibration.m);
  cal["d2"] = number(res.calibration.d2);
  cal["b2_bar"] = number(res.calibration.b2_bar);
  cal["b2"] = number(res.calibration.b2);
  s["calibration"] = cal;
  s["nu"] = number(res.nu);
  s["gamma"] = number(res.gamma);
  s["summary"] = alpha_summaries(res);
  s["provenance"] = provenance(inputs, cfg.experiment.seed, no_timestamp);
  emit(s, (fs::path(out_dir) / "summary.json").string(), out);
  out << "wrote " << res.rows.size() << " rows to " << (fs::path(out_dir) / "report.csv").string()
      << "\n";
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool sample, bool method) {
  sub->add_option("--dict", c.dict, "Dictionary CSV (wide or long-form EEM)")->required()->check(CLI::ExistingFile);
  sub->add_option("--labels", c.labels, "Source labels or weights CSV")->required()->check(CLI::ExistingFile);
  if (sample) sub->add_option("--sample", c.sample, "Sample CSV")->required()->check(CLI::ExistingFile);
  if (method) {
    sub->add_option("--method", c.method, "Estimator")
        ->required()
        ->check(CLI::IsMember({"atr", "rts", "gls"}));
  }
  sub->add_option("--gamma", c.gamma, "Isotropic variance for the feasible GLS covariance S + gamma I");
  sub->add_option("--out", c.out, "Report JSON path (default: stdout)");
  sub->add_flag("--no-timestamp", c.no_timestamp, "Omit the timestamp from the report");
}

std::optional<std::string> check_method_flags(const Common& c, bool se) {
  if (c.gamma && !(std::isfinite(*c.gamma) && *c.gamma > 0.0)) return "--gamma must be a positive finite number";
  if (c.method == "gls" && !c.gamma) return "--method gls requires --gamma G";
  if (c.method != "gls" && c.gamma) return "--gamma applies only to --method gls";
  if (se && c.method != "rts") return "--se is defined only for --method rts";
  return std::nullopt;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source apportionment of fluorescence profiles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kLibraryVersion);

  Common est, pred, thr;
  bool se = false;
  std::string mask_excitation, mask_features, completed;
  std::string config, out_dir;
  std::optional<unsigned> threads;
  bool sim_no_timestamp = false;

  auto* estimate = app.add_subcommand("estimate", "Estimate source proportions of one sample");
  add_common(estimate, est, true, true);
  estimate->add_flag("--se", se, "Report RTS standard errors");

  auto* predict = app.add_subcommand("predict", "Predict unobserved features of one sample");
  add_common(predict, pred, true, true);
  auto* mx = predict->add_option("--mask-excitation", mask_excitation,
                                 "Comma-separated excitation wavelengths to treat as unobserved");
  auto* mf = predict->add_option("--mask-features", mask_features, "File listing feature ids to treat as unobserved")
                 ->check(CLI::ExistingFile);
  mx->excludes(mf);
  predict->add_option("--completed", completed, "Write the completed profile CSV here");

  auto* threshold = app.add_subcommand("threshold", "Variance threshold between ATR and RTS");
  add_common(threshold, thr, false, false);

  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study");
  simulate->add_option("--config", config, "key = value config file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_dir, "Output directory")->required();
  simulate->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_flag("--no-timestamp", sim_no_timestamp, "Omit the timestamp from summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto usage_error = [&](CLI::App* sub, const std::string& msg) {
    err << "error: " << msg << "\n\n" << sub->help();
    return 2;
  };

  try {
    if (estimate->parsed()) {
      if (auto msg = check_method_flags(est, se)) return usage_error(estimate, *msg);
      return run_estimate(est, se, out);
    }
    if (predict->parsed()) {
      if (auto msg = check_method_flags(pred, false)) return usage_error(predict, *msg);
      return run_predict(pred, mask_excitation, mask_features, completed, out);
    }
    if (threshold->parsed()) {
      if (thr.gamma && !(std::isfinite(*thr.gamma) && *thr.gamma > 0.0)) {
        return usage_error(threshold, "--gamma must be a positive finite number");
      }
      return run_threshold(thr, out);
    }
    return run_simulate(config, out_dir, threads, sim_no_timestamp, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"apportion"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace apportion
