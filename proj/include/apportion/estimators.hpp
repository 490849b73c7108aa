#pragma once

#include "apportion/covariance.hpp"
#include "apportion/model_core.hpp"

#include <optional>
#include <string_view>

namespace apportion {

enum class Method { Atr, Rts, Fgls, OracleOls, OracleGls };

std::string_view method_name(Method m);

struct Estimate {
  Vector theta;
  Method method = Method::Rts;
  std::optional<double> gamma;  // present iff method == Fgls
  std::optional<Matrix> sse;    // squared standard errors, RTS only
};

// Average-then-regress: least squares of y on the group means.
Estimate estimate_atr(const ApportionmentBasis& basis, const Profile& y);

// Regress-then-sum: A^T times the least-squares coefficients of y on X.
Estimate estimate_rts(const ApportionmentBasis& basis, const Profile& y);
Estimate estimate_rts(const Dictionary& x, const SourceDesign& a, const Profile& y);

// Feasible GLS with Sigma_gamma = S + gamma I, applied in the eigenbasis of
// S through its thin SVD. Requires gamma > 0; the limits gamma -> 0 and
// gamma -> infinity are estimate_rts and estimate_atr.
Estimate estimate_fgls(const ApportionmentBasis& basis, const Profile& y, double gamma);

// Sigma_gamma = S + gamma I as a low-rank-plus-isotropic covariance.
Covariance feasible_covariance(const ResidualSvd& residual_svd, double gamma);

enum class OracleMode { Ols, Gls };

// Oracle OLS and GLS fits against a known mean matrix and covariance, with the
// factorizations kept for repeated use.
class OracleFit {
 public:
  OracleFit(Matrix mean, Covariance sigma);
  Vector ols(const Vector& y) const;
  Vector gls(const Vector& y) const;

 private:
  Matrix mean_;
  Covariance sigma_;
  LeastSquaresSolver ols_;
  LeastSquaresSolver gls_;
};

// OLS or GLS against a known mean matrix and covariance.
Estimate estimate_oracle(const Matrix& mean, const Covariance& sigma, const Profile& y,
                         OracleMode mode);

struct RtsCrosscheck {
  Vector theta_expanded;    // first K coefficients of y on Z = [M E]
  Vector theta_projection;  // (M^T (I - P_E) M)^{-1} M^T (I - P_E) y
};

// Two alternative routes to the RTS estimate.
RtsCrosscheck rts_crosschecks(const ApportionmentBasis& basis, const Profile& y);

}  // namespace apportion
