#pragma once

#include <Eigen/Dense>

#include <string>

namespace apportion {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Singular values below this are treated as zero: eps * max(rows, cols) * sigma_max.
double rank_tolerance(const Vector& singular_values, Index rows, Index cols);

// Numerical rank of a matrix under rank_tolerance.
Index numerical_rank(const Matrix& m);

// Flips each column so that its largest-magnitude entry is positive. Ties go to
// the lowest row index.
void canonicalize_column_signs(Matrix& m);

// Orthonormal basis for the null space of a^T, where a is n x k with full
// column rank. Taken from the trailing columns of a full Householder Q.
Matrix null_space_basis(const Matrix& a);

// Least-squares solver for a tall full-column-rank design, backed by a
// column-pivoted Householder QR. Construction throws NumericalError when the
// design is rank deficient at rank_tolerance.
class LeastSquaresSolver {
 public:
  LeastSquaresSolver() = default;
  LeastSquaresSolver(const Matrix& design, const std::string& name);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  // Coefficients of the least-squares fit of each column of rhs.
  Matrix solve(const Matrix& rhs) const;
  // rhs minus its projection onto the column space of the design.
  Matrix residual(const Matrix& rhs) const;
  // (D^T D)^{-1} b
  Matrix gram_inverse_apply(const Matrix& b) const;
  // b^T (D^T D)^{-1} b, accumulated as (R^{-T} P^T b)^T (R^{-T} P^T b).
  Matrix gram_inverse_sandwich(const Matrix& b) const;
  // D (D^T D)^{-1} b
  Matrix dual_apply(const Matrix& b) const;
  // Orthonormal basis of col(D), rows x cols.
  Matrix range_basis() const;
  // Orthonormal basis of the orthogonal complement of col(D), rows x (rows - cols).
  Matrix complement_basis() const;

 private:
  Matrix r_inverse_transpose_apply(const Matrix& b) const;

  Eigen::ColPivHouseholderQR<Matrix> qr_;
  Index rows_ = 0;
  Index cols_ = 0;
};

}  // namespace apportion
