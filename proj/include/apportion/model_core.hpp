#pragma once

#include "apportion/linalg.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace apportion {

// p x n matrix of reference profiles, one column per dictionary sample.
// Invariants checked at construction: n < p, full column rank, unique ids.
class Dictionary {
 public:
  Dictionary(Matrix values, std::vector<std::string> feature_ids,
             std::vector<std::string> profile_ids);
  // Generates ids "f1".."fp" and "x1".."xn".
  explicit Dictionary(Matrix values);

  const Matrix& values() const { return values_; }
  const std::vector<std::string>& feature_ids() const { return feature_ids_; }
  const std::vector<std::string>& profile_ids() const { return profile_ids_; }
  Index features() const { return values_.rows(); }
  Index profiles() const { return values_.cols(); }

 private:
  Matrix values_;
  std::vector<std::string> feature_ids_;
  std::vector<std::string> profile_ids_;
};

// n x K matrix of known source proportions of each dictionary profile.
class SourceDesign {
 public:
  SourceDesign(Matrix weights, std::vector<std::string> category_names);

  const Matrix& weights() const { return weights_; }
  const std::vector<std::string>& category_names() const { return category_names_; }
  Index categories() const { return weights_.cols(); }
  Index profiles() const { return weights_.rows(); }
  // Category of profile i when its row is an indicator row.
  std::optional<Index> category_of(Index i) const;
  bool is_indicator() const;

 private:
  Matrix weights_;
  std::vector<std::string> category_names_;
};

using WeightRow = std::vector<double>;

// Indicator design from per-profile labels.
SourceDesign build_design(const std::vector<std::string>& labels,
                          const std::vector<std::string>& category_names);
// Design from explicit mixing rows, passed through verbatim after validation.
SourceDesign build_design(const std::vector<WeightRow>& rows,
                          const std::vector<std::string>& category_names);

// A length-p observation with an explicit observed mask.
struct Profile {
  Vector values;
  std::vector<bool> observed;
  std::vector<std::string> feature_ids;

  static Profile fully_observed(Vector values);
  Index size() const { return values.size(); }
  bool complete() const;
  Index observed_count() const;
};

struct ResidualSvd {
  Matrix left;        // p x r, orthonormal
  Vector singular;    // r, descending, strictly above rank tolerance
  Matrix right;       // (n - K) x r
};

// Derived quantities shared by every estimator:
//   group means M = X A (A^T A)^{-1},
//   null basis N of A^T (A^T N = 0, N^T N = I),
//   residual profiles E = X N, with S = E E^T.
class ApportionmentBasis {
 public:
  const Matrix& dictionary() const { return x_; }
  const Matrix& design() const { return a_; }
  const Matrix& group_means() const { return group_means_; }
  const Matrix& null_basis() const { return null_basis_; }
  const Matrix& residuals() const { return residuals_; }
  const ResidualSvd& residual_svd() const { return residual_svd_; }
  const LeastSquaresSolver& dictionary_solver() const { return x_solver_; }
  const LeastSquaresSolver& means_solver() const { return means_solver_; }

  Index features() const { return x_.rows(); }
  Index profiles() const { return x_.cols(); }
  Index categories() const { return a_.cols(); }

  // S v without forming S.
  Matrix residual_scatter_apply(const Matrix& v) const;
  // A^T (X^T X)^{-1} A
  Matrix design_gram_inverse() const;

 private:
  friend ApportionmentBasis decompose(const Dictionary& x, const SourceDesign& a);
  ApportionmentBasis() = default;

  Matrix x_;
  Matrix a_;
  Matrix group_means_;
  Matrix null_basis_;
  Matrix residuals_;
  ResidualSvd residual_svd_;
  LeastSquaresSolver x_solver_;
  LeastSquaresSolver means_solver_;
};

ApportionmentBasis decompose(const Dictionary& x, const SourceDesign& a);

// Thin SVD truncated at rank_tolerance.
ResidualSvd thin_svd(const Matrix& m);

}  // namespace apportion
