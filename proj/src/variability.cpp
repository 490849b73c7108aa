#include "apportion/variability.hpp"

#include "apportion/error.hpp"

#include <cmath>
#include <limits>

namespace apportion {

namespace {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix atr_gram_inverse(const ApportionmentBasis& basis) {
  const Index k = basis.categories();
  return basis.means_solver().gram_inverse_sandwich(Matrix::Identity(k, k));
}

Matrix atr_scatter(const ApportionmentBasis& basis) {
  // (M^T M)^{-1} M^T E, so that V2 = H H^T.
  const Matrix h = basis.means_solver().solve(basis.residuals());
  return symmetrize(h * h.transpose());
}

}  // namespace

double min_eigenvalue(const Matrix& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(sym), Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

VarianceProfile variance_profiles(const ApportionmentBasis& basis, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("variance_profiles: gamma must be positive and finite");
  }
  VarianceProfile out;
  out.gamma = gamma;
  out.v_atr = atr_scatter(basis) + gamma * atr_gram_inverse(basis);
  out.v_rts = gamma * basis.design_gram_inverse();
  return out;
}

ThresholdResult gamma_threshold(const ApportionmentBasis& basis) {
  ThresholdResult out;
  const Matrix g_rts = basis.design_gram_inverse();
  out.v1 = symmetrize(g_rts - atr_gram_inverse(basis));
  out.v2 = atr_scatter(basis);
  const Index k = basis.categories();

  if (basis.profiles() == k) {
    out.value = 0.0;
    out.diagnostic = "no residual profiles (K = n): V2 = 0, threshold 0 by convention";
    return out;
  }

  const double scale = std::max(g_rts.norm(), out.v2.norm());
  const double tol = 1e3 * std::numeric_limits<double>::epsilon() * static_cast<double>(k) *
                     std::max(scale, std::numeric_limits<double>::min());

  Eigen::SelfAdjointEigenSolver<Matrix> eig1(out.v1);
  const Vector& l1 = eig1.eigenvalues();
  if (l1(k - 1) <= tol) {
    out.value = std::numeric_limits<double>::infinity();
    out.diagnostic = "V1 vanishes: RTS variance never exceeds ATR variance";
    return out;
  }
  if (l1(0) > tol) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> pencil(out.v2, out.v1,
                                                            Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (pencil.info() == Eigen::Success) {
      out.value = std::max(0.0, pencil.eigenvalues()(0));
      out.diagnostic = "V1 positive definite";
      return out;
    }
  }

  // V1 singular: gamma V1 <= V2 fails for every gamma > 0 as soon as some
  // direction in null(V2) carries V1 mass; otherwise restrict to range(V2).
  Eigen::SelfAdjointEigenSolver<Matrix> eig2(out.v2);
  const Vector& l2 = eig2.eigenvalues();
  const Matrix& q2 = eig2.eigenvectors();
  Index null_dim = 0;
  while (null_dim < k && l2(null_dim) <= tol) ++null_dim;
  if (null_dim > 0) {
    const Matrix qn = q2.leftCols(null_dim);
    const Matrix v1_null = symmetrize(qn.transpose() * out.v1 * qn);
    Eigen::SelfAdjointEigenSolver<Matrix> e(v1_null, Eigen::EigenvaluesOnly);
    if (e.eigenvalues()(null_dim - 1) > tol) {
      out.value = 0.0;
      out.diagnostic = "V1 singular; V2 vanishes on a direction where V1 does not";
      return out;
    }
  }
  const Index r = k - null_dim;
  const Matrix qr = q2.rightCols(r);
  const Vector inv_sqrt = l2.tail(r).array().rsqrt();
  const Matrix c = inv_sqrt.asDiagonal() * (qr.transpose() * out.v1 * qr) * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> ec(symmetrize(c), Eigen::EigenvaluesOnly);
  const double top = ec.eigenvalues()(r - 1);
  out.value = top > tol ? 1.0 / top : std::numeric_limits<double>::infinity();
  out.diagnostic = "V1 singular; threshold computed on range(V2)";
  return out;
}

Matrix standard_errors_rts(const ApportionmentBasis& basis, const Profile& y) {
  const Index p = basis.features();
  const Index n = basis.profiles();
  if (p <= n) throw ValidationError("standard errors need p > n");
  if (y.size() != p || !y.complete()) {
    throw ValidationError("standard_errors_rts: need a fully observed profile of length p");
  }
  const double rss = basis.dictionary_solver().residual(y.values).squaredNorm();
  return (rss / static_cast<double>(p - n)) * basis.design_gram_inverse();
}

SubspaceBases subspace_bases(const ApportionmentBasis& basis) {
  SubspaceBases out;
  out.u1 = basis.residual_svd().left;
  const Matrix dual = basis.dictionary_solver().dual_apply(basis.design());
  out.u2 = thin_svd(dual).left;
  out.u3 = basis.dictionary_solver().complement_basis();
  return out;
}

BiasEnvelope bias_envelope(const ApportionmentBasis& basis, const Matrix& mean,
                           const Covariance& sigma, const std::optional<Vector>& theta) {
  const Index p = basis.features();
  const Index n = basis.profiles();
  const Index k = basis.categories();
  if (mean.rows() != p || mean.cols() != k || sigma.dim() != p) {
    throw ValidationError("bias_envelope: mean or covariance dimensions do not match the dictionary");
  }
  if (theta && theta->size() != k) throw ValidationError("bias_envelope: theta length mismatch");
  if (p <= n) throw ValidationError("bias_envelope: need p > n");

  const LeastSquaresSolver& xs = basis.dictionary_solver();
  // Columns w_k = X (X^T X)^{-1} a_k lie in span(U2), with ||w_k||^2 = a_k^T (X^T X)^{-1} a_k.
  const Matrix w = xs.dual_apply(basis.design());
  const Matrix u2 = thin_svd(w).left;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma.quadratic_form(u2), Eigen::EigenvaluesOnly);
  const double lam_min = eig.eigenvalues()(0);
  const double lam_max = eig.eigenvalues()(eig.eigenvalues().size() - 1);

  // trace(U3^T Sigma U3) = trace(Sigma) - trace(Q1^T Sigma Q1) with Q1 spanning col(X).
  const double dof = static_cast<double>(p - n);
  const double sigma_u3_mean = (sigma.trace() - sigma.projected_trace(xs.range_basis())) / dof;
  const Matrix mean_perp = xs.residual(mean);
  const double mean_u3_mean = mean_perp.squaredNorm() / dof;

  const Vector w_norm2 = w.colwise().squaredNorm();
  const Vector v_exact = sigma.quadratic_form(w).diagonal();

  std::optional<double> mean_term;
  if (theta) {
    const double t2 = theta->squaredNorm();
    if (!(t2 > 0.0)) throw ValidationError("bias_envelope: theta must be nonzero");
    mean_term = (mean_perp * *theta).squaredNorm() / (dof * t2);
  }

  BiasEnvelope out;
  out.categories.resize(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) {
    BiasBounds& b = out.categories[static_cast<std::size_t>(j)];
    b.upper = w_norm2(j) * (lam_max - sigma_u3_mean);
    b.lower = w_norm2(j) * (lam_min - sigma_u3_mean - mean_u3_mean);
    if (mean_term) b.exact_expected_bias = v_exact(j) - w_norm2(j) * (sigma_u3_mean + *mean_term);
  }
  return out;
}

}  // namespace apportion
