#pragma once

#include "apportion/linalg.hpp"

#include <optional>
#include <span>

namespace apportion {

// A symmetric positive semidefinite p x p covariance, held either densely or
// as U diag(lambda) U^T + iso * I with U orthonormal (p x r, r small).
// The low-rank form never materializes a p x p matrix.
class Covariance {
 public:
  // Dense symmetric matrix. Throws ValidationError when not square/symmetric.
  static Covariance dense(Matrix sigma);
  // factor * factor^T + iso * I.
  static Covariance low_rank_plus_isotropic(const Matrix& factor, double iso);
  // basis * diag(eigenvalues) * basis^T + iso * I; basis must be orthonormal.
  static Covariance from_eigen(Matrix basis, Vector eigenvalues, double iso);

  Index dim() const { return dim_; }
  bool is_low_rank() const { return !dense_.has_value(); }
  double isotropic() const { return iso_; }
  const Matrix& basis() const { return basis_; }
  const Vector& eigenvalues() const { return eigenvalues_; }

  Matrix multiply(const Matrix& b) const;
  // Sigma^{-1} b. Throws NumericalError when Sigma is singular.
  Matrix solve(const Matrix& b) const;
  // Applies a whitening map W with W^T W proportional to Sigma^{-1}. The
  // proportionality constant is positive and unspecified, which is all GLS
  // needs. Throws NumericalError when Sigma is singular.
  Matrix whiten(const Matrix& b) const;
  double trace() const;
  // b^T Sigma b
  Matrix quadratic_form(const Matrix& b) const;
  // trace(q^T Sigma q)
  double projected_trace(const Matrix& q) const;
  Matrix to_dense() const;
  Covariance scaled(double c) const;

  // Sigma restricted to the given rows and columns.
  Covariance block(std::span<const Index> rows) const;
  // Sigma[rows_out, rows_in] * b
  Matrix cross_multiply(std::span<const Index> rows_out, std::span<const Index> rows_in,
                        const Matrix& b) const;

 private:
  Covariance() = default;
  void require_nonsingular() const;

  Index dim_ = 0;
  // Dense form.
  std::optional<Matrix> dense_;
  std::optional<Eigen::LLT<Matrix>> chol_;
  // Low-rank form.
  Matrix basis_;
  Vector eigenvalues_;
  double iso_ = 0.0;
};

Matrix select_rows(const Matrix& m, std::span<const Index> rows);

}  // namespace apportion
