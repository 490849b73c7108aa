#include "apportion/estimators.hpp"

#include "apportion/error.hpp"

#include <cmath>

namespace apportion {

namespace {

const Vector& complete_values(const Profile& y, Index p, const char* who) {
  if (y.size() != p) {
    throw ValidationError(std::string(who) + ": profile has " + std::to_string(y.size()) +
                          " entries, expected " + std::to_string(p));
  }
  if (!y.complete()) {
    throw ValidationError(std::string(who) + ": profile has unobserved entries");
  }
  if (!y.values.allFinite()) throw ValidationError(std::string(who) + ": profile is not finite");
  return y.values;
}

Estimate make(Vector theta, Method m) {
  Estimate e;
  e.theta = std::move(theta);
  e.method = m;
  return e;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Atr: return "ATR";
    case Method::Rts: return "RTS";
    case Method::Fgls: return "FGLS";
    case Method::OracleOls: return "ORACLE_OLS";
    case Method::OracleGls: return "ORACLE_GLS";
  }
  return "?";
}

Estimate estimate_atr(const ApportionmentBasis& basis, const Profile& y) {
  const Vector& v = complete_values(y, basis.features(), "estimate_atr");
  return make(basis.means_solver().solve(v), Method::Atr);
}

Estimate estimate_rts(const ApportionmentBasis& basis, const Profile& y) {
  const Vector& v = complete_values(y, basis.features(), "estimate_rts");
  const Vector beta = basis.dictionary_solver().solve(v);
  return make(basis.design().transpose() * beta, Method::Rts);
}

Estimate estimate_rts(const Dictionary& x, const SourceDesign& a, const Profile& y) {
  if (a.profiles() != x.profiles()) throw ValidationError("design and dictionary sizes differ");
  const Vector& v = complete_values(y, x.features(), "estimate_rts");
  const LeastSquaresSolver solver(x.values(), "dictionary");
  return make(a.weights().transpose() * solver.solve(v), Method::Rts);
}

Covariance feasible_covariance(const ResidualSvd& residual_svd, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
  return Covariance::from_eigen(residual_svd.left, residual_svd.singular.array().square(), gamma);
}

Estimate estimate_fgls(const ApportionmentBasis& basis, const Profile& y, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("estimate_fgls: gamma must be positive and finite");
  }
  const Vector& v = complete_values(y, basis.features(), "estimate_fgls");
  const Covariance sigma = feasible_covariance(basis.residual_svd(), gamma);
  const LeastSquaresSolver solver(sigma.whiten(basis.group_means()), "whitened group means");
  Estimate e = make(solver.solve(sigma.whiten(v)), Method::Fgls);
  e.gamma = gamma;
  return e;
}

OracleFit::OracleFit(Matrix mean, Covariance sigma)
    : mean_(std::move(mean)), sigma_(std::move(sigma)) {
  if (sigma_.dim() != mean_.rows()) throw ValidationError("oracle: covariance size mismatch");
  ols_ = LeastSquaresSolver(mean_, "oracle mean matrix");
  gls_ = LeastSquaresSolver(sigma_.whiten(mean_), "whitened oracle mean matrix");
}

Vector OracleFit::ols(const Vector& y) const { return ols_.solve(y); }

Vector OracleFit::gls(const Vector& y) const { return gls_.solve(sigma_.whiten(y)); }

Estimate estimate_oracle(const Matrix& mean, const Covariance& sigma, const Profile& y,
                         OracleMode mode) {
  const Vector& v = complete_values(y, mean.rows(), "estimate_oracle");
  if (mode == OracleMode::Ols) {
    const LeastSquaresSolver solver(mean, "oracle mean matrix");
    return make(solver.solve(v), Method::OracleOls);
  }
  if (sigma.dim() != mean.rows()) throw ValidationError("estimate_oracle: covariance size mismatch");
  const LeastSquaresSolver solver(sigma.whiten(mean), "whitened oracle mean matrix");
  return make(solver.solve(sigma.whiten(v)), Method::OracleGls);
}

RtsCrosscheck rts_crosschecks(const ApportionmentBasis& basis, const Profile& y) {
  const Vector& v = complete_values(y, basis.features(), "rts_crosschecks");
  const Index k = basis.categories();
  const Matrix& means = basis.group_means();
  const Matrix& e = basis.residuals();

  Matrix z(basis.features(), k + e.cols());
  z << means, e;
  const LeastSquaresSolver expanded(z, "expanded design [M E]");

  RtsCrosscheck out;
  out.theta_expanded = expanded.solve(v).topRows(k);
  if (e.cols() == 0) {
    out.theta_projection = basis.means_solver().solve(v);
    return out;
  }
  const LeastSquaresSolver residual_space(e, "residual matrix");
  const Matrix means_perp = residual_space.residual(means);
  const Vector y_perp = residual_space.residual(v);
  const LeastSquaresSolver projected(means_perp, "projected group means");
  out.theta_projection = projected.solve(y_perp);
  return out;
}

}  // namespace apportion
