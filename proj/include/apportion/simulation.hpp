#pragma once

#include "apportion/covariance.hpp"
#include "apportion/model_core.hpp"
#include "apportion/random.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace apportion {

// Ledoit-Wolf shrinkage toward m I, computed from mean-zero sample columns
// through their Gram matrix (no p x p matrices). Sigma* = nu S_n + gamma I.
struct ShrinkageCalibration {
  double m = 0.0;       // trace(S_n) / p
  double d2 = 0.0;      // ||S_n - m I||_F^2 / p
  double b2_bar = 0.0;  // (1/r^2) sum_j ||e_j e_j^T - S_n||_F^2 / p
  double b2 = 0.0;      // min(b2_bar, d2)
  double nu = 0.0;      // (d2 - b2) / d2
  double gamma = 0.0;   // (b2 / d2) m
};

// Throws NumericalError when d2 = 0 (S_n is already a multiple of I).
ShrinkageCalibration ledoit_wolf_calibration(const Matrix& columns);

// Population model of the numerical study:
//   E[y] = mean theta, Var[y] = ||theta||^2 ((nu / r) E E^T + gamma I), r = n - K.
struct SyntheticModel {
  Matrix mean;
  Matrix residual_factor;  // E of the population dictionary, p x r
  double nu = 0.0;
  double gamma = 0.0;
  std::optional<Vector> theta;
  ShrinkageCalibration calibration;

  Covariance covariance() const;
};

// Calibrates nu, gamma from the dictionary residuals. When the calibration is
// degenerate (d2 = 0) and nu_floor is given, nu = nu_floor and gamma = m.
SyntheticModel fit_population(const ApportionmentBasis& basis,
                              std::optional<double> nu_floor = std::nullopt);

// Dirichlet(1_K / K) draw.
Vector sample_theta(Index k, RandomStream& rng);
Vector sample_theta(Index k, std::uint64_t seed);

// y = M theta + ||theta|| (sqrt(nu / r) E z1 + sqrt(gamma) z2), z1, z2 ~ N(0, I).
Vector sample_profile_values(const SyntheticModel& model, const Vector& theta, RandomStream& rng);
// Same draw with the noise term multiplied by noise_scale.
Vector sample_profile_values(const SyntheticModel& model, const Vector& theta, RandomStream& rng,
                             double noise_scale);
Profile sample_profile(const SyntheticModel& model, const Vector& theta, std::uint64_t seed);

struct Subsample {
  Dictionary dictionary;
  SourceDesign design;
  std::vector<Index> columns;  // retained dictionary columns, ascending
};

// Keeps ceil(alpha * n_k) profiles of each category, uniformly without
// replacement. Requires an indicator design; each category keeps >= 2.
Subsample subsample_dictionary(const Dictionary& x, const SourceDesign& a, double alpha,
                               std::uint64_t seed);

// Synthetic excitation-emission dictionary: smooth Gaussian fluorophore peaks
// on an excitation x emission grid. Category means are sums of three peaks;
// within-category variation is a shared family of peaks with 1/j amplitude
// decay plus white noise.
struct SyntheticEemConfig {
  Index excitations = 20;
  Index emissions = 15;
  double excitation_start_nm = 240.0;
  double excitation_step_nm = 5.0;
  double emission_start_nm = 300.0;
  double emission_step_nm = 20.0;
  Index categories = 5;
  Index per_category = 9;
  Index factors = 20;
  double variation_scale = 0.3;
  double noise_sd = 0.1;
  std::uint64_t seed = 1;
};

struct EemDictionary {
  Dictionary dictionary;
  SourceDesign design;
  std::vector<double> excitation;  // per feature
  std::vector<double> emission;    // per feature
};

EemDictionary synthetic_eem_dictionary(const SyntheticEemConfig& config);

enum class ExperimentMode { Estimation, Prediction, StandardErrors };

std::string experiment_mode_name(ExperimentMode mode);
ExperimentMode parse_experiment_mode(const std::string& name);

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::Estimation;
  Index theta_count = 50;
  std::vector<double> alphas{0.5, 1.0};
  Index replicates = 200;
  std::uint64_t seed = 1;
  std::vector<Index> unobserved_features;  // prediction mode
  std::optional<double> nu_floor;
  unsigned threads = 1;
  // Multiplies the sampled noise; 0 gives noise-free profiles y = M theta.
  double noise_scale = 1.0;
};

struct ReportRow {
  double alpha = 0.0;
  Index theta_id = 0;
  std::string method;
  Index category = -1;  // -1 when the metric is not per category
  std::string metric;
  double value = 0.0;
  double mc_se = 0.0;
  Index replicates = 0;
  std::uint64_t seed = 0;
};

// Raw Monte Carlo output of one (alpha, theta) cell.
struct ExperimentCell {
  Index alpha_index = 0;
  Index theta_index = 0;
  Vector theta;
  // Estimation: ATR, RTS, ORACLE_OLS, ORACLE_GLS. Prediction: ATR, RTS.
  std::vector<std::string> methods;
  std::vector<std::vector<double>> squared_errors;  // [method][replicate]
  // Standard-error mode: replicates x K.
  Matrix rts_estimates;
  Matrix rts_standard_errors;
};

struct ExperimentResult {
  ExperimentConfig config;
  double nu = 0.0;
  double gamma = 0.0;
  ShrinkageCalibration calibration;
  std::vector<Index> dictionary_sizes;  // per alpha
  std::vector<ExperimentCell> cells;    // alpha-major, then theta
  std::vector<ReportRow> rows;          // canonical order
};

// Runs the Monte Carlo study. The population model is fitted on the full
// dictionary; estimators see only the alpha-subsample. Output is identical for
// any thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, const Dictionary& x,
                                const SourceDesign& a);

struct CellSummary {
  double value = 0.0;
  double mc_se = 0.0;
};

CellSummary rmse_summary(const std::vector<double>& squared_errors);

}  // namespace apportion
