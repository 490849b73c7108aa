#include "apportion/linalg.hpp"

#include "apportion/error.hpp"

#include <cmath>
#include <limits>

namespace apportion {

double rank_tolerance(const Vector& singular_values, Index rows, Index cols) {
  const double sigma_max = singular_values.size() > 0 ? singular_values.maxCoeff() : 0.0;
  return std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(rows, cols)) *
         sigma_max;
}

Index numerical_rank(const Matrix& m) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  const double tol = rank_tolerance(s, m.rows(), m.cols());
  if (s.size() == 0 || s(0) == 0.0) return 0;
  return (s.array() > tol).count();
}

void canonicalize_column_signs(Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    const double biggest = m.col(j).cwiseAbs().maxCoeff();
    if (biggest == 0.0) continue;
    const double cutoff = biggest * (1.0 - 64.0 * std::numeric_limits<double>::epsilon());
    for (Index i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, j)) >= cutoff) {
        if (m(i, j) < 0.0) m.col(j) = -m.col(j);
        break;
      }
    }
  }
}

Matrix null_space_basis(const Matrix& a) {
  const Index n = a.rows();
  const Index k = a.cols();
  if (k > n) throw ValidationError("null_space_basis: more columns than rows");
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  Matrix basis = q.rightCols(n - k);
  canonicalize_column_signs(basis);
  return basis;
}

LeastSquaresSolver::LeastSquaresSolver(const Matrix& design, const std::string& name)
    : qr_(design), rows_(design.rows()), cols_(design.cols()) {
  if (cols_ > rows_) {
    throw NumericalError(name + " has more columns (" + std::to_string(cols_) + ") than rows (" +
                         std::to_string(rows_) + ")");
  }
  const Index rank = numerical_rank(design);
  if (rank < cols_) {
    throw NumericalError(name + " is rank deficient (rank " + std::to_string(rank) + " < " +
                         std::to_string(cols_) + " columns)");
  }
}

Matrix LeastSquaresSolver::solve(const Matrix& rhs) const { return qr_.solve(rhs); }

Matrix LeastSquaresSolver::residual(const Matrix& rhs) const {
  Matrix qtb = qr_.householderQ().adjoint() * rhs;
  qtb.topRows(cols_).setZero();
  return qr_.householderQ() * qtb;
}

Matrix LeastSquaresSolver::r_inverse_transpose_apply(const Matrix& b) const {
  Matrix pb = qr_.colsPermutation().transpose() * b;
  qr_.matrixR()
      .topLeftCorner(cols_, cols_)
      .template triangularView<Eigen::Upper>()
      .transpose()
      .solveInPlace(pb);
  return pb;
}

Matrix LeastSquaresSolver::gram_inverse_apply(const Matrix& b) const {
  Matrix g = r_inverse_transpose_apply(b);
  qr_.matrixR().topLeftCorner(cols_, cols_).template triangularView<Eigen::Upper>().solveInPlace(g);
  return qr_.colsPermutation() * g;
}

Matrix LeastSquaresSolver::gram_inverse_sandwich(const Matrix& b) const {
  const Matrix g = r_inverse_transpose_apply(b);
  Matrix out = g.transpose() * g;
  return 0.5 * (out + out.transpose());
}

Matrix LeastSquaresSolver::dual_apply(const Matrix& b) const {
  Matrix padded = Matrix::Zero(rows_, b.cols());
  padded.topRows(cols_) = r_inverse_transpose_apply(b);
  return qr_.householderQ() * padded;
}

Matrix LeastSquaresSolver::range_basis() const {
  return qr_.householderQ() * Matrix::Identity(rows_, cols_);
}

Matrix LeastSquaresSolver::complement_basis() const {
  Matrix e = Matrix::Zero(rows_, rows_ - cols_);
  e.bottomRows(rows_ - cols_).setIdentity();
  return qr_.householderQ() * e;
}

}  // namespace apportion
