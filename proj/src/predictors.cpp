#include "apportion/predictors.hpp"

#include "apportion/error.hpp"
#include "apportion/estimators.hpp"

#include <cmath>

namespace apportion {

PartitionedProblem::PartitionedProblem(const ApportionmentBasis& basis, const Vector& values,
                                       const std::vector<bool>& observed)
    : a_(basis.design()) {
  const Index p = basis.features();
  if (values.size() != p || static_cast<Index>(observed.size()) != p) {
    throw ValidationError("partition: profile length differs from the dictionary");
  }
  for (Index i = 0; i < p; ++i) {
    (observed[static_cast<std::size_t>(i)] ? observed_rows_ : unobserved_rows_).push_back(i);
  }
  if (unobserved_rows_.empty()) throw ValidationError("partition: nothing to predict");
  if (static_cast<Index>(observed_rows_.size()) < basis.categories()) {
    throw ValidationError("partition: fewer observed entries than categories");
  }
  x0_ = select_rows(basis.dictionary(), observed_rows_);
  xp_ = select_rows(basis.dictionary(), unobserved_rows_);
  m0_ = select_rows(basis.group_means(), observed_rows_);
  mp_ = select_rows(basis.group_means(), unobserved_rows_);
  e0_ = select_rows(basis.residuals(), observed_rows_);
  ep_ = select_rows(basis.residuals(), unobserved_rows_);
  y0_.resize(static_cast<Index>(observed_rows_.size()));
  for (Index i = 0; i < y0_.size(); ++i) y0_(i) = values(observed_rows_[static_cast<std::size_t>(i)]);
  if (!y0_.allFinite()) throw ValidationError("partition: observed entries are not finite");
}

PartitionedProblem::PartitionedProblem(const ApportionmentBasis& basis, const Profile& y)
    : PartitionedProblem(basis, y.values, y.observed) {}

std::vector<bool> observed_mask(Index features, const std::vector<Index>& unobserved) {
  std::vector<bool> mask(static_cast<std::size_t>(features), true);
  for (Index i : unobserved) {
    if (i < 0 || i >= features) throw ValidationError("mask index out of range");
    mask[static_cast<std::size_t>(i)] = false;
  }
  return mask;
}

Vector predict_rts(const PartitionedProblem& prob) {
  const LeastSquaresSolver solver(prob.x_observed(), "observed dictionary rows X0");
  return prob.x_unobserved() * solver.solve(prob.y_observed());
}

Vector predict_atr(const PartitionedProblem& prob) {
  const LeastSquaresSolver solver(prob.means_observed(), "observed group mean rows M0");
  return prob.means_unobserved() * solver.solve(prob.y_observed());
}

Vector predict_fgls(const PartitionedProblem& prob, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("predict_fgls: gamma must be positive and finite");
  }
  const ResidualSvd svd0 = thin_svd(prob.residuals_observed());
  const Covariance sigma0 = feasible_covariance(svd0, gamma);
  const LeastSquaresSolver solver(sigma0.whiten(prob.means_observed()),
                                  "whitened observed group means");
  const Vector theta = solver.solve(sigma0.whiten(prob.y_observed()));
  const Vector resid = prob.y_observed() - prob.means_observed() * theta;
  // E' E0^T (E0 E0^T + gamma I)^{-1} r = E' V diag(d / (d^2 + gamma)) U^T r
  const Vector d = svd0.singular;
  const Vector weight = d.array() / (d.array().square() + gamma);
  const Vector coords = weight.asDiagonal() * (svd0.left.transpose() * resid);
  return prob.means_unobserved() * theta + prob.residuals_unobserved() * (svd0.right * coords);
}

Vector predict_oracle_blup(const Matrix& mean, const Covariance& sigma,
                           const std::vector<Index>& observed_rows,
                           const std::vector<Index>& unobserved_rows, const Vector& y0) {
  if (sigma.dim() != mean.rows()) throw ValidationError("predict_oracle_blup: size mismatch");
  if (static_cast<Index>(observed_rows.size()) != y0.size()) {
    throw ValidationError("predict_oracle_blup: y0 length differs from the observed rows");
  }
  const Matrix m0 = select_rows(mean, observed_rows);
  const Matrix mp = select_rows(mean, unobserved_rows);
  const Covariance sigma0 = sigma.block(observed_rows);
  const LeastSquaresSolver solver(sigma0.whiten(m0), "whitened observed oracle means");
  const Vector theta = solver.solve(sigma0.whiten(y0));
  const Vector resid = y0 - m0 * theta;
  return mp * theta + sigma.cross_multiply(unobserved_rows, observed_rows, sigma0.solve(resid));
}

PartitionPredictors::PartitionPredictors(const PartitionedProblem& prob)
    : xp_(prob.x_unobserved()),
      mp_(prob.means_unobserved()),
      x0_(prob.x_observed(), "observed dictionary rows X0"),
      m0_(prob.means_observed(), "observed group mean rows M0") {}

Vector PartitionPredictors::rts(const Vector& y0) const { return xp_ * x0_.solve(y0); }

Vector PartitionPredictors::atr(const Vector& y0) const { return mp_ * m0_.solve(y0); }

Vector complete_profile(const PartitionedProblem& prob, const Vector& prediction) {
  const auto& obs = prob.observed_rows();
  const auto& un = prob.unobserved_rows();
  if (prediction.size() != static_cast<Index>(un.size())) {
    throw ValidationError("prediction length differs from the unobserved rows");
  }
  Vector out(static_cast<Index>(obs.size() + un.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) out(obs[i]) = prob.y_observed()(static_cast<Index>(i));
  for (std::size_t i = 0; i < un.size(); ++i) out(un[i]) = prediction(static_cast<Index>(i));
  return out;
}

}  // namespace apportion
