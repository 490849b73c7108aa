#pragma once

#include "apportion/covariance.hpp"
#include "apportion/model_core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace apportion {

// Idealized-model variances of the ATR and RTS estimates, per unit ||theta||^2
// with Sigma_gamma = S + gamma I.
struct VarianceProfile {
  Matrix v_atr;
  Matrix v_rts;
  double gamma = 0.0;
};

VarianceProfile variance_profiles(const ApportionmentBasis& basis, double gamma);

struct ThresholdResult {
  // sup{gamma : Var[RTS] <= Var[ATR] in the Loewner order}; may be +infinity.
  double value = 0.0;
  Matrix v1;  // A^T (X^T X)^{-1} A - (M^T M)^{-1}
  Matrix v2;  // (M^T M)^{-1} M^T S M (M^T M)^{-1}
  std::string diagnostic;
};

// Smallest generalized eigenvalue of the pencil (V2, V1). Handles singular V1
// by working on the range of V2; see the README for the degenerate cases.
ThresholdResult gamma_threshold(const ApportionmentBasis& basis);

// (y^T (I - P_X) y) / (p - n) * A^T (X^T X)^{-1} A
Matrix standard_errors_rts(const ApportionmentBasis& basis, const Profile& y);

struct SubspaceBases {
  Matrix u1;  // left singular vectors of E, p x (n - K)
  Matrix u2;  // left singular vectors of X (X^T X)^{-1} A, p x K
  Matrix u3;  // orthonormal complement of col(X), p x (p - n)
};

SubspaceBases subspace_bases(const ApportionmentBasis& basis);

struct BiasBounds {
  double lower = 0.0;
  double upper = 0.0;
  // v_k - E[v_hat_k] per unit ||theta||^2; needs theta.
  std::optional<double> exact_expected_bias;
};

struct BiasEnvelope {
  std::vector<BiasBounds> categories;
};

// Bounds on the expected bias of the RTS squared standard errors under a
// general model E[y] = M theta, Var[y] = ||theta||^2 Sigma. The exact value is
// filled in when theta is supplied.
BiasEnvelope bias_envelope(const ApportionmentBasis& basis, const Matrix& mean,
                           const Covariance& sigma, const std::optional<Vector>& theta = {});

// Minimum eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);

}  // namespace apportion
