#pragma once

#include "apportion/covariance.hpp"
#include "apportion/model_core.hpp"

#include <vector>

namespace apportion {

// Row partition of a dictionary-aligned profile into observed rows (y0) and
// rows to predict (y'). Slices of X, M and E are taken with the full-dictionary
// null basis N, which does not depend on the feature partition.
class PartitionedProblem {
 public:
  // observed[i] marks feature i as available; at least one row must be unobserved.
  PartitionedProblem(const ApportionmentBasis& basis, const Vector& values,
                     const std::vector<bool>& observed);
  PartitionedProblem(const ApportionmentBasis& basis, const Profile& y);

  const std::vector<Index>& observed_rows() const { return observed_rows_; }
  const std::vector<Index>& unobserved_rows() const { return unobserved_rows_; }
  const Matrix& x_observed() const { return x0_; }
  const Matrix& x_unobserved() const { return xp_; }
  const Matrix& means_observed() const { return m0_; }
  const Matrix& means_unobserved() const { return mp_; }
  const Matrix& residuals_observed() const { return e0_; }
  const Matrix& residuals_unobserved() const { return ep_; }
  const Matrix& design() const { return a_; }
  const Vector& y_observed() const { return y0_; }

 private:
  std::vector<Index> observed_rows_;
  std::vector<Index> unobserved_rows_;
  Matrix x0_, xp_, m0_, mp_, e0_, ep_, a_;
  Vector y0_;
};

// Observed mask from a list of unobserved feature indices.
std::vector<bool> observed_mask(Index features, const std::vector<Index>& unobserved);

// X' (X0^T X0)^{-1} X0^T y0. Throws NumericalError when X0 loses rank.
Vector predict_rts(const PartitionedProblem& prob);

// M' (M0^T M0)^{-1} M0^T y0.
Vector predict_atr(const PartitionedProblem& prob);

// Feasible BLUP with Sigma0 = E0 E0^T + gamma I and cross block E0 E'^T.
Vector predict_fgls(const PartitionedProblem& prob, double gamma);

// M' theta + Sigma[u, o] Sigma0^{-1} (y0 - M0 theta), theta the GLS fit on the
// observed rows.
Vector predict_oracle_blup(const Matrix& mean, const Covariance& sigma,
                           const std::vector<Index>& observed_rows,
                           const std::vector<Index>& unobserved_rows, const Vector& y0);

// RTS and ATR predictors for a fixed partition, reusable across many
// observed vectors y0 of the same shape.
class PartitionPredictors {
 public:
  explicit PartitionPredictors(const PartitionedProblem& prob);
  Vector rts(const Vector& y0) const;
  Vector atr(const Vector& y0) const;

 private:
  Matrix xp_, mp_;
  LeastSquaresSolver x0_, m0_;
};

// Fills the unobserved entries of a profile with a prediction.
Vector complete_profile(const PartitionedProblem& prob, const Vector& prediction);

}  // namespace apportion
