#include "apportion/simulation.hpp"

#include "apportion/error.hpp"
#include "apportion/estimators.hpp"
#include "apportion/predictors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

namespace apportion {

namespace {

enum StreamTag : std::uint64_t {
  kSubsampleTag = 1,
  kThetaTag = 2,
  kReplicateTag = 3,
  kProfileTag = 4,
  kDictionaryTag = 5,
};

double sample_sd(const double* v, Index n, Index stride) {
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (Index i = 0; i < n; ++i) mean += v[i * stride];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (Index i = 0; i < n; ++i) ss += (v[i * stride] - mean) * (v[i * stride] - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

CellSummary mean_summary(const Vector& v) {
  const Index n = v.size();
  CellSummary s;
  s.value = v.mean();
  s.mc_se = sample_sd(v.data(), n, 1) / std::sqrt(static_cast<double>(n));
  return s;
}

}  // namespace

ShrinkageCalibration ledoit_wolf_calibration(const Matrix& columns) {
  const Index p = columns.rows();
  const Index r = columns.cols();
  if (p == 0 || r == 0) throw ValidationError("shrinkage calibration needs at least one column");
  const double pd = static_cast<double>(p);
  const double rd = static_cast<double>(r);
  const Matrix gram = columns.transpose() * columns;

  ShrinkageCalibration c;
  const double trace_s = gram.trace() / rd;
  const double frob2_s = gram.squaredNorm() / (rd * rd);
  c.m = trace_s / pd;
  c.d2 = std::max(0.0, frob2_s - 2.0 * c.m * trace_s + c.m * c.m * pd) / pd;
  double sum = 0.0;
  for (Index j = 0; j < r; ++j) {
    const double g = gram(j, j);
    const double quad = gram.col(j).squaredNorm() / rd;  // e_j^T S_n e_j
    sum += std::max(0.0, g * g - 2.0 * quad + frob2_s);
  }
  c.b2_bar = sum / (rd * rd * pd);
  c.b2 = std::min(c.b2_bar, c.d2);
  if (!(c.d2 > 1e-12 * frob2_s / pd)) {
    throw NumericalError(
        "Ledoit-Wolf calibration is degenerate: the sample second-moment matrix is already "
        "isotropic (d^2 = 0), so nu* = 0; set nu_floor to force a small positive nu*");
  }
  c.nu = (c.d2 - c.b2) / c.d2;
  c.gamma = (c.b2 / c.d2) * c.m;
  return c;
}

Covariance SyntheticModel::covariance() const {
  const double r = static_cast<double>(residual_factor.cols());
  const double scale = r > 0 ? std::sqrt(nu / r) : 0.0;
  return Covariance::low_rank_plus_isotropic(scale * residual_factor, gamma);
}

SyntheticModel fit_population(const ApportionmentBasis& basis, std::optional<double> nu_floor) {
  const Index r = basis.profiles() - basis.categories();
  if (r < 2) {
    throw ValidationError("fit_population needs n - K >= 2 residual profiles (got " +
                          std::to_string(r) + ")");
  }
  SyntheticModel model;
  model.mean = basis.group_means();
  model.residual_factor = basis.residuals();
  try {
    model.calibration = ledoit_wolf_calibration(basis.residuals());
    model.nu = model.calibration.nu;
    model.gamma = model.calibration.gamma;
  } catch (const NumericalError&) {
    if (!nu_floor) throw;
    if (!(*nu_floor > 0.0)) throw ValidationError("nu_floor must be positive");
    const Matrix gram = basis.residuals().transpose() * basis.residuals();
    model.calibration.m = gram.trace() / (static_cast<double>(r) * static_cast<double>(basis.features()));
    model.nu = *nu_floor;
    model.gamma = model.calibration.m;
  }
  if (nu_floor && model.nu < *nu_floor) model.nu = *nu_floor;
  if (!(model.nu > 0.0) || !(model.gamma > 0.0)) {
    throw NumericalError("population calibration gave nu* = " + std::to_string(model.nu) +
                         ", gamma* = " + std::to_string(model.gamma) + "; both must be positive");
  }
  return model;
}

Vector sample_theta(Index k, RandomStream& rng) {
  if (k < 1) throw ValidationError("sample_theta: K must be at least 1");
  if (k == 1) return Vector::Ones(1);
  const double shape = 1.0 / static_cast<double>(k);
  Vector logs(k);
  for (Index i = 0; i < k; ++i) logs(i) = rng.log_gamma_variate(shape);
  const double top = logs.maxCoeff();
  Vector theta = (logs.array() - top).exp();
  theta /= theta.sum();
  return theta;
}

Vector sample_theta(Index k, std::uint64_t seed) {
  RandomStream rng(seed, {kThetaTag});
  return sample_theta(k, rng);
}

Vector sample_profile_values(const SyntheticModel& model, const Vector& theta, RandomStream& rng,
                             double noise_scale) {
  const Index p = model.mean.rows();
  const Index r = model.residual_factor.cols();
  if (theta.size() != model.mean.cols()) throw ValidationError("sample_profile: theta length mismatch");
  Vector z1(r), z2(p);
  for (Index i = 0; i < r; ++i) z1(i) = rng.normal();
  for (Index i = 0; i < p; ++i) z2(i) = rng.normal();
  const double low_rank = r > 0 ? std::sqrt(model.nu / static_cast<double>(r)) : 0.0;
  Vector noise = std::sqrt(model.gamma) * z2;
  if (r > 0) noise += low_rank * (model.residual_factor * z1);
  return model.mean * theta + (noise_scale * theta.norm()) * noise;
}

Vector sample_profile_values(const SyntheticModel& model, const Vector& theta, RandomStream& rng) {
  return sample_profile_values(model, theta, rng, 1.0);
}

Profile sample_profile(const SyntheticModel& model, const Vector& theta, std::uint64_t seed) {
  RandomStream rng(seed, {kProfileTag});
  return Profile::fully_observed(sample_profile_values(model, theta, rng));
}

Subsample subsample_dictionary(const Dictionary& x, const SourceDesign& a, double alpha,
                               std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  if (a.profiles() != x.profiles()) throw ValidationError("design and dictionary sizes differ");
  if (!a.is_indicator()) {
    throw ValidationError("subsampling by category needs an indicator design");
  }
  RandomStream rng(seed, {kSubsampleTag});
  std::vector<Index> keep;
  for (Index k = 0; k < a.categories(); ++k) {
    std::vector<Index> members;
    for (Index i = 0; i < a.profiles(); ++i)
      if (a.category_of(i) == k) members.push_back(i);
    const auto nk = static_cast<Index>(members.size());
    // The small offset keeps exact products like 0.95 * 20 from rounding up.
    const auto take = static_cast<Index>(std::ceil(alpha * static_cast<double>(nk) - 1e-9));
    if (take < 2) {
      throw ValidationError("category '" + a.category_names()[static_cast<std::size_t>(k)] +
                            "' would keep " + std::to_string(take) + " profile(s) at alpha " +
                            std::to_string(alpha) + "; at least 2 are needed");
    }
    for (Index i = 0; i < take; ++i) {
      std::uniform_int_distribution<Index> pick(i, nk - 1);
      std::swap(members[static_cast<std::size_t>(i)], members[static_cast<std::size_t>(pick(rng))]);
    }
    keep.insert(keep.end(), members.begin(), members.begin() + take);
  }
  std::sort(keep.begin(), keep.end());

  Matrix values(x.features(), static_cast<Index>(keep.size()));
  Matrix weights(static_cast<Index>(keep.size()), a.categories());
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    values.col(static_cast<Index>(j)) = x.values().col(keep[j]);
    weights.row(static_cast<Index>(j)) = a.weights().row(keep[j]);
    ids.push_back(x.profile_ids()[static_cast<std::size_t>(keep[j])]);
  }
  return Subsample{Dictionary(std::move(values), x.feature_ids(), std::move(ids)),
                   SourceDesign(std::move(weights), a.category_names()), std::move(keep)};
}

EemDictionary synthetic_eem_dictionary(const SyntheticEemConfig& c) {
  if (c.excitations < 1 || c.emissions < 1 || c.categories < 1 || c.per_category < 2 ||
      c.factors < 0) {
    throw ValidationError("synthetic dictionary: invalid grid or category sizes");
  }
  const Index p = c.excitations * c.emissions;
  const Index n = c.categories * c.per_category;
  RandomStream rng(c.seed, {kDictionaryTag});

  std::vector<double> ex(static_cast<std::size_t>(p)), em(static_cast<std::size_t>(p));
  std::vector<std::string> feature_ids;
  for (Index i = 0; i < c.excitations; ++i) {
    for (Index j = 0; j < c.emissions; ++j) {
      const auto f = static_cast<std::size_t>(i * c.emissions + j);
      ex[f] = c.excitation_start_nm + c.excitation_step_nm * static_cast<double>(i);
      em[f] = c.emission_start_nm + c.emission_step_nm * static_cast<double>(j);
    }
  }
  const double ex_lo = ex.front(), ex_hi = ex.back();
  const double em_lo = c.emission_start_nm;
  const double em_hi = c.emission_start_nm + c.emission_step_nm * static_cast<double>(c.emissions - 1);

  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  auto peak = [&]() {
    const double cx = uniform(ex_lo, ex_hi);
    const double cy = uniform(em_lo, em_hi);
    const double wx = uniform(10.0, 40.0);
    const double wy = uniform(30.0, 100.0);
    Vector v(p);
    for (Index f = 0; f < p; ++f) {
      const double dx = ex[static_cast<std::size_t>(f)] - cx;
      const double dy = em[static_cast<std::size_t>(f)] - cy;
      v(f) = std::exp(-dx * dx / (2.0 * wx * wx) - dy * dy / (2.0 * wy * wy));
    }
    return v;
  };

  Matrix means = Matrix::Zero(p, c.categories);
  for (Index k = 0; k < c.categories; ++k) {
    for (int q = 0; q < 3; ++q) {
      const double amp = uniform(0.5, 1.5);
      means.col(k) += amp * peak();
    }
  }
  Matrix variation(p, c.factors);
  for (Index j = 0; j < c.factors; ++j) variation.col(j) = peak() / static_cast<double>(j + 1);

  Matrix values(p, n);
  std::vector<std::string> profile_ids;
  std::vector<std::string> labels;
  std::vector<std::string> names;
  for (Index k = 0; k < c.categories; ++k) names.push_back("source" + std::to_string(k + 1));
  for (Index k = 0; k < c.categories; ++k) {
    for (Index i = 0; i < c.per_category; ++i) {
      Vector z(c.factors);
      for (Index j = 0; j < c.factors; ++j) z(j) = rng.normal();
      Vector col = means.col(k) + c.variation_scale * (variation * z);
      for (Index f = 0; f < p; ++f) col(f) += c.noise_sd * rng.normal();
      values.col(k * c.per_category + i) = col;
      profile_ids.push_back(names[static_cast<std::size_t>(k)] + "_" + std::to_string(i + 1));
      labels.push_back(names[static_cast<std::size_t>(k)]);
    }
  }
  for (Index f = 0; f < p; ++f) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g:%g", ex[static_cast<std::size_t>(f)], em[static_cast<std::size_t>(f)]);
    feature_ids.emplace_back(buf);
  }
  return EemDictionary{Dictionary(std::move(values), std::move(feature_ids), std::move(profile_ids)),
                       build_design(labels, names), std::move(ex), std::move(em)};
}

std::string experiment_mode_name(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::Estimation: return "estimation";
    case ExperimentMode::Prediction: return "prediction";
    case ExperimentMode::StandardErrors: return "stderr";
  }
  return "?";
}

ExperimentMode parse_experiment_mode(const std::string& name) {
  if (name == "estimation") return ExperimentMode::Estimation;
  if (name == "prediction") return ExperimentMode::Prediction;
  if (name == "stderr") return ExperimentMode::StandardErrors;
  throw ValidationError("unknown experiment mode '" + name +
                        "' (expected estimation, prediction or stderr)");
}

CellSummary rmse_summary(const std::vector<double>& squared_errors) {
  const auto n = static_cast<Index>(squared_errors.size());
  const Eigen::Map<const Vector> v(squared_errors.data(), n);
  const CellSummary mse = mean_summary(v);
  CellSummary s;
  s.value = std::sqrt(mse.value);
  s.mc_se = s.value > 0.0 ? mse.mc_se / (2.0 * s.value) : 0.0;
  return s;
}

namespace {

struct AlphaContext {
  double alpha = 1.0;
  ApportionmentBasis basis;
  Vector design_gram_diag;
  std::optional<PartitionPredictors> predictors;
  std::vector<Index> observed_rows;
  std::vector<Index> unobserved_rows;
};

void validate(const ExperimentConfig& c, const Dictionary& x) {
  if (c.theta_count < 1) throw ValidationError("theta_count must be at least 1");
  if (c.replicates < 1) throw ValidationError("replicates must be at least 1");
  if (c.mode == ExperimentMode::StandardErrors && c.replicates < 2) {
    throw ValidationError("stderr mode needs at least 2 replicates");
  }
  if (c.alphas.empty()) throw ValidationError("at least one alpha is required");
  for (double alpha : c.alphas)
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  if (c.threads < 1) throw ValidationError("threads must be at least 1");
  if (c.mode == ExperimentMode::Prediction) {
    if (c.unobserved_features.empty()) {
      throw ValidationError("prediction mode needs a feature mask (mask_excitation)");
    }
    for (Index i : c.unobserved_features)
      if (i < 0 || i >= x.features()) throw ValidationError("mask feature index out of range");
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const Dictionary& x,
                                const SourceDesign& a) {
  validate(config, x);
  const ApportionmentBasis full = decompose(x, a);
  const SyntheticModel population = fit_population(full, config.nu_floor);
  const Index k = a.categories();
  const Index p = x.features();

  ExperimentResult result;
  result.config = config;
  result.nu = population.nu;
  result.gamma = population.gamma;
  result.calibration = population.calibration;

  std::optional<OracleFit> oracle;
  if (config.mode == ExperimentMode::Estimation) {
    oracle.emplace(population.mean, population.covariance());
  }

  std::vector<AlphaContext> contexts;
  for (std::size_t ai = 0; ai < config.alphas.size(); ++ai) {
    const double alpha = config.alphas[ai];
    const std::uint64_t sub_seed = derive_stream({config.seed, kSubsampleTag, ai});
    Subsample sub = subsample_dictionary(x, a, alpha, sub_seed);
    AlphaContext ctx{alpha, decompose(sub.dictionary, sub.design), {}, std::nullopt, {}, {}};
    ctx.design_gram_diag = ctx.basis.design_gram_inverse().diagonal();
    if (config.mode == ExperimentMode::Prediction) {
      const std::vector<bool> mask = observed_mask(p, config.unobserved_features);
      const PartitionedProblem structure(ctx.basis, Vector::Zero(p), mask);
      ctx.predictors.emplace(structure);
      ctx.observed_rows = structure.observed_rows();
      ctx.unobserved_rows = structure.unobserved_rows();
    }
    result.dictionary_sizes.push_back(sub.dictionary.profiles());
    contexts.push_back(std::move(ctx));
  }

  std::vector<Vector> thetas;
  for (Index t = 0; t < config.theta_count; ++t) {
    RandomStream rng(config.seed, {kThetaTag, static_cast<std::uint64_t>(t)});
    thetas.push_back(sample_theta(k, rng));
  }

  const auto n_alpha = static_cast<Index>(contexts.size());
  const Index reps = config.replicates;
  result.cells.resize(static_cast<std::size_t>(n_alpha * config.theta_count));

  auto run_cell = [&](std::size_t index) {
    ExperimentCell& cell = result.cells[index];
    cell.alpha_index = static_cast<Index>(index) / config.theta_count;
    cell.theta_index = static_cast<Index>(index) % config.theta_count;
    cell.theta = thetas[static_cast<std::size_t>(cell.theta_index)];
    const AlphaContext& ctx = contexts[static_cast<std::size_t>(cell.alpha_index)];
    const Vector& theta = cell.theta;
    const double dof = static_cast<double>(p - ctx.basis.profiles());

    switch (config.mode) {
      case ExperimentMode::Estimation:
        cell.methods = {"ATR", "RTS", "ORACLE_OLS", "ORACLE_GLS"};
        break;
      case ExperimentMode::Prediction:
        cell.methods = {"ATR", "RTS"};
        break;
      case ExperimentMode::StandardErrors:
        cell.rts_estimates.resize(reps, k);
        cell.rts_standard_errors.resize(reps, k);
        break;
    }
    cell.squared_errors.assign(cell.methods.size(), std::vector<double>(static_cast<std::size_t>(reps)));

    for (Index r = 0; r < reps; ++r) {
      RandomStream rng(config.seed, {kReplicateTag, static_cast<std::uint64_t>(cell.alpha_index),
                                     static_cast<std::uint64_t>(cell.theta_index),
                                     static_cast<std::uint64_t>(r)});
      const Vector y = sample_profile_values(population, theta, rng, config.noise_scale);
      const auto ri = static_cast<std::size_t>(r);
      switch (config.mode) {
        case ExperimentMode::Estimation: {
          const Vector atr = ctx.basis.means_solver().solve(y);
          const Vector rts = ctx.basis.design().transpose() * ctx.basis.dictionary_solver().solve(y);
          cell.squared_errors[0][ri] = (atr - theta).squaredNorm();
          cell.squared_errors[1][ri] = (rts - theta).squaredNorm();
          cell.squared_errors[2][ri] = (oracle->ols(y) - theta).squaredNorm();
          cell.squared_errors[3][ri] = (oracle->gls(y) - theta).squaredNorm();
          break;
        }
        case ExperimentMode::Prediction: {
          const Vector y0 = select_rows(y, ctx.observed_rows);
          const Vector target = select_rows(y, ctx.unobserved_rows);
          cell.squared_errors[0][ri] = (ctx.predictors->atr(y0) - target).squaredNorm();
          cell.squared_errors[1][ri] = (ctx.predictors->rts(y0) - target).squaredNorm();
          break;
        }
        case ExperimentMode::StandardErrors: {
          const Vector rts = ctx.basis.design().transpose() * ctx.basis.dictionary_solver().solve(y);
          const double s2 = ctx.basis.dictionary_solver().residual(y).squaredNorm() / dof;
          cell.rts_estimates.row(r) = rts.transpose();
          cell.rts_standard_errors.row(r) = (s2 * ctx.design_gram_diag).cwiseSqrt().transpose();
          break;
        }
      }
    }
  };

  std::vector<std::exception_ptr> failures(result.cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= result.cells.size()) return;
      try {
        run_cell(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const unsigned n_threads =
      std::min<unsigned>(config.threads, static_cast<unsigned>(result.cells.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i]) continue;
    const std::string where = "experiment cell (alpha index " +
                              std::to_string(static_cast<Index>(i) / config.theta_count) +
                              ", theta " + std::to_string(static_cast<Index>(i) % config.theta_count) +
                              "): ";
    try {
      std::rethrow_exception(failures[i]);
    } catch (const NumericalError& e) {
      throw NumericalError(where + e.what());
    } catch (const std::exception& e) {
      throw ValidationError(where + e.what());
    }
  }

  for (const ExperimentCell& cell : result.cells) {
    const double alpha = contexts[static_cast<std::size_t>(cell.alpha_index)].alpha;
    auto row = [&](std::string method, Index category, std::string metric, CellSummary s) {
      result.rows.push_back(ReportRow{alpha, cell.theta_index, std::move(method), category,
                                      std::move(metric), s.value, s.mc_se, reps, config.seed});
    };
    if (config.mode == ExperimentMode::StandardErrors) {
      for (Index j = 0; j < k; ++j) {
        const double sd = sample_sd(cell.rts_estimates.col(j).data(), reps, 1);
        row("RTS", j, "sd_rts", {sd, sd / std::sqrt(2.0 * static_cast<double>(reps - 1))});
        row("RTS", j, "mean_se_rts", mean_summary(cell.rts_standard_errors.col(j)));
      }
    } else {
      const std::string metric =
          config.mode == ExperimentMode::Estimation ? "rmse_theta" : "rmse_prediction";
      for (std::size_t m = 0; m < cell.methods.size(); ++m) {
        row(cell.methods[m], -1, metric, rmse_summary(cell.squared_errors[m]));
      }
    }
  }
  return result;
}

}  // namespace apportion
