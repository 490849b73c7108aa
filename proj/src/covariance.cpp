#include "apportion/covariance.hpp"

#include "apportion/error.hpp"

#include <cmath>

namespace apportion {

Matrix select_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (Index i = 0; i < out.rows(); ++i) out.row(i) = m.row(rows[static_cast<std::size_t>(i)]);
  return out;
}

Covariance Covariance::dense(Matrix sigma) {
  if (sigma.rows() != sigma.cols()) throw ValidationError("covariance matrix must be square");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ValidationError("covariance matrix must be symmetric");
  }
  Covariance c;
  c.dim_ = sigma.rows();
  c.chol_.emplace(sigma);
  c.dense_ = std::move(sigma);
  return c;
}

Covariance Covariance::low_rank_plus_isotropic(const Matrix& factor, double iso) {
  if (iso < 0.0) throw ValidationError("isotropic variance must be nonnegative");
  Covariance c;
  c.dim_ = factor.rows();
  c.iso_ = iso;
  if (factor.cols() == 0) {
    c.basis_ = Matrix(factor.rows(), 0);
    c.eigenvalues_ = Vector(0);
    return c;
  }
  Eigen::BDCSVD<Matrix> svd(factor, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  const Index keep = (s.array() > rank_tolerance(s, factor.rows(), factor.cols())).count();
  c.basis_ = svd.matrixU().leftCols(keep);
  c.eigenvalues_ = s.head(keep).array().square();
  return c;
}

Covariance Covariance::from_eigen(Matrix basis, Vector eigenvalues, double iso) {
  if (basis.cols() != eigenvalues.size()) {
    throw ValidationError("eigenbasis and eigenvalue counts differ");
  }
  if (iso < 0.0 || (eigenvalues.size() > 0 && eigenvalues.minCoeff() < 0.0)) {
    throw ValidationError("covariance eigenvalues must be nonnegative");
  }
  Covariance c;
  c.dim_ = basis.rows();
  c.basis_ = std::move(basis);
  c.eigenvalues_ = std::move(eigenvalues);
  c.iso_ = iso;
  return c;
}

void Covariance::require_nonsingular() const {
  if (dense_) {
    if (chol_->info() != Eigen::Success) {
      throw NumericalError("covariance is not positive definite");
    }
    return;
  }
  if (iso_ <= 0.0 && basis_.cols() < dim_) {
    throw NumericalError("covariance is singular (zero isotropic part and rank " +
                         std::to_string(basis_.cols()) + " < " + std::to_string(dim_) + ")");
  }
}

Matrix Covariance::multiply(const Matrix& b) const {
  if (dense_) return *dense_ * b;
  return basis_ * (eigenvalues_.asDiagonal() * (basis_.transpose() * b)) + iso_ * b;
}

Matrix Covariance::solve(const Matrix& b) const {
  require_nonsingular();
  if (dense_) return chol_->solve(b);
  const Matrix coords = basis_.transpose() * b;
  const Vector shrink = eigenvalues_.array() / (eigenvalues_.array() + iso_);
  return (b - basis_ * (shrink.asDiagonal() * coords)) / iso_;
}

Matrix Covariance::whiten(const Matrix& b) const {
  require_nonsingular();
  if (dense_) return chol_->matrixL().solve(b);
  // sqrt(iso) * Sigma^{-1/2} = I - U diag(1 - sqrt(iso / (lambda + iso))) U^T.
  // 1 - sqrt(r) is evaluated as (1 - r) / (1 + sqrt(r)) to avoid cancellation.
  const Vector ratio = iso_ / (eigenvalues_.array() + iso_);
  const Vector one_minus = (eigenvalues_.array() / (eigenvalues_.array() + iso_)) /
                           (1.0 + ratio.array().sqrt());
  return b - basis_ * (one_minus.asDiagonal() * (basis_.transpose() * b));
}

double Covariance::trace() const {
  if (dense_) return dense_->trace();
  return eigenvalues_.sum() + iso_ * static_cast<double>(dim_);
}

Matrix Covariance::quadratic_form(const Matrix& b) const {
  Matrix out;
  if (dense_) {
    out = b.transpose() * (*dense_ * b);
  } else {
    const Matrix coords = basis_.transpose() * b;
    out = coords.transpose() * eigenvalues_.asDiagonal() * coords + iso_ * (b.transpose() * b);
  }
  return 0.5 * (out + out.transpose());
}

double Covariance::projected_trace(const Matrix& q) const {
  if (dense_) return (q.array() * (*dense_ * q).array()).sum();
  const Matrix coords = basis_.transpose() * q;
  return (coords.array().square().colwise() * eigenvalues_.array()).sum() +
         iso_ * q.squaredNorm();
}

Matrix Covariance::to_dense() const {
  if (dense_) return *dense_;
  return basis_ * eigenvalues_.asDiagonal() * basis_.transpose() +
         iso_ * Matrix::Identity(dim_, dim_);
}

Covariance Covariance::scaled(double c) const {
  if (c <= 0.0) throw ValidationError("covariance scale must be positive");
  if (dense_) return dense(c * *dense_);
  return from_eigen(basis_, c * eigenvalues_, c * iso_);
}

Covariance Covariance::block(std::span<const Index> rows) const {
  if (dense_) {
    Matrix sub(static_cast<Index>(rows.size()), static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows.size(); ++j)
        sub(static_cast<Index>(i), static_cast<Index>(j)) = (*dense_)(rows[i], rows[j]);
    return dense(std::move(sub));
  }
  const Matrix factor = select_rows(basis_, rows) * eigenvalues_.cwiseSqrt().asDiagonal();
  return low_rank_plus_isotropic(factor, iso_);
}

Matrix Covariance::cross_multiply(std::span<const Index> rows_out, std::span<const Index> rows_in,
                                  const Matrix& b) const {
  if (dense_) {
    Matrix sub(static_cast<Index>(rows_out.size()), static_cast<Index>(rows_in.size()));
    for (std::size_t i = 0; i < rows_out.size(); ++i)
      for (std::size_t j = 0; j < rows_in.size(); ++j)
        sub(static_cast<Index>(i), static_cast<Index>(j)) = (*dense_)(rows_out[i], rows_in[j]);
    return sub * b;
  }
  // The isotropic part contributes only on shared rows.
  Matrix out = select_rows(basis_, rows_out) *
               (eigenvalues_.asDiagonal() * (select_rows(basis_, rows_in).transpose() * b));
  if (iso_ != 0.0) {
    for (std::size_t i = 0; i < rows_out.size(); ++i)
      for (std::size_t j = 0; j < rows_in.size(); ++j)
        if (rows_out[i] == rows_in[j]) out.row(static_cast<Index>(i)) += iso_ * b.row(static_cast<Index>(j));
  }
  return out;
}

}  // namespace apportion
