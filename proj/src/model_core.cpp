#include "apportion/model_core.hpp"

#include "apportion/error.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace apportion {

namespace {

void require_unique(const std::vector<std::string>& ids, const std::string& what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw ValidationError("duplicate " + what + " '" + id + "'");
  }
}

std::vector<std::string> numbered(const std::string& prefix, Index count) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

}  // namespace

Dictionary::Dictionary(Matrix values, std::vector<std::string> feature_ids,
                       std::vector<std::string> profile_ids)
    : values_(std::move(values)),
      feature_ids_(std::move(feature_ids)),
      profile_ids_(std::move(profile_ids)) {
  const Index p = values_.rows();
  const Index n = values_.cols();
  if (static_cast<Index>(feature_ids_.size()) != p) {
    throw ValidationError("dictionary has " + std::to_string(p) + " rows but " +
                          std::to_string(feature_ids_.size()) + " feature ids");
  }
  if (static_cast<Index>(profile_ids_.size()) != n) {
    throw ValidationError("dictionary has " + std::to_string(n) + " columns but " +
                          std::to_string(profile_ids_.size()) + " profile ids");
  }
  if (n == 0) throw ValidationError("dictionary has no profiles");
  if (n >= p) {
    throw ValidationError("dictionary needs fewer profiles than features (n = " +
                          std::to_string(n) + ", p = " + std::to_string(p) + ")");
  }
  if (!values_.allFinite()) throw ValidationError("dictionary contains non-finite values");
  require_unique(feature_ids_, "feature id");
  require_unique(profile_ids_, "profile id");
  const Index rank = numerical_rank(values_);
  if (rank < n) {
    throw NumericalError("dictionary is rank deficient (rank " + std::to_string(rank) + " < " +
                         std::to_string(n) + " profiles)");
  }
}

Dictionary::Dictionary(Matrix values)
    : Dictionary(values, numbered("f", values.rows()), numbered("x", values.cols())) {}

SourceDesign::SourceDesign(Matrix weights, std::vector<std::string> category_names)
    : weights_(std::move(weights)), category_names_(std::move(category_names)) {
  const Index n = weights_.rows();
  const Index k = weights_.cols();
  if (static_cast<Index>(category_names_.size()) != k) {
    throw ValidationError("design has " + std::to_string(k) + " columns but " +
                          std::to_string(category_names_.size()) + " category names");
  }
  if (k == 0) throw ValidationError("design has no categories");
  if (k > n) {
    throw ValidationError("more categories (" + std::to_string(k) + ") than profiles (" +
                          std::to_string(n) + ")");
  }
  require_unique(category_names_, "category");
  for (Index i = 0; i < n; ++i) {
    if (!weights_.row(i).allFinite() || weights_.row(i).minCoeff() < 0.0) {
      throw ValidationError("design row " + std::to_string(i + 1) + " has a negative or non-finite weight");
    }
    const double sum = weights_.row(i).sum();
    if (std::abs(sum - 1.0) > 1e-12) {
      throw ValidationError("design row " + std::to_string(i + 1) + " sums to " +
                            std::to_string(sum) + ", not 1");
    }
  }
  for (Index j = 0; j < k; ++j) {
    if (weights_.col(j).sum() <= 0.0) {
      throw ValidationError("category '" + category_names_[static_cast<std::size_t>(j)] +
                            "' receives zero total weight");
    }
  }
  if (numerical_rank(weights_) < k) throw ValidationError("design is rank deficient");
}

std::optional<Index> SourceDesign::category_of(Index i) const {
  std::optional<Index> found;
  for (Index j = 0; j < categories(); ++j) {
    const double w = weights_(i, j);
    if (w == 1.0) {
      found = j;
    } else if (w != 0.0) {
      return std::nullopt;
    }
  }
  return found;
}

bool SourceDesign::is_indicator() const {
  for (Index i = 0; i < profiles(); ++i)
    if (!category_of(i)) return false;
  return true;
}

SourceDesign build_design(const std::vector<std::string>& labels,
                          const std::vector<std::string>& category_names) {
  std::unordered_map<std::string, Index> column;
  for (std::size_t j = 0; j < category_names.size(); ++j) {
    column.emplace(category_names[j], static_cast<Index>(j));
  }
  Matrix weights = Matrix::Zero(static_cast<Index>(labels.size()),
                                static_cast<Index>(category_names.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = column.find(labels[i]);
    if (it == column.end()) {
      throw ValidationError("unknown category label '" + labels[i] + "' on profile " +
                            std::to_string(i + 1));
    }
    weights(static_cast<Index>(i), it->second) = 1.0;
  }
  return SourceDesign(std::move(weights), category_names);
}

SourceDesign build_design(const std::vector<WeightRow>& rows,
                          const std::vector<std::string>& category_names) {
  const auto k = static_cast<Index>(category_names.size());
  Matrix weights(static_cast<Index>(rows.size()), k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i].size()) != k) {
      throw ValidationError("design row " + std::to_string(i + 1) + " has " +
                            std::to_string(rows[i].size()) + " weights, expected " +
                            std::to_string(k));
    }
    for (Index j = 0; j < k; ++j) weights(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return SourceDesign(std::move(weights), category_names);
}

Profile Profile::fully_observed(Vector values) {
  Profile y;
  y.observed.assign(static_cast<std::size_t>(values.size()), true);
  y.values = std::move(values);
  return y;
}

bool Profile::complete() const {
  for (bool b : observed)
    if (!b) return false;
  return true;
}

Index Profile::observed_count() const {
  Index c = 0;
  for (bool b : observed) c += b ? 1 : 0;
  return c;
}

ResidualSvd thin_svd(const Matrix& m) {
  ResidualSvd out;
  if (m.cols() == 0) {
    out.left = Matrix(m.rows(), 0);
    out.singular = Vector(0);
    out.right = Matrix(0, 0);
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const Index keep = (s.array() > rank_tolerance(s, m.rows(), m.cols())).count();
  out.left = svd.matrixU().leftCols(keep);
  out.singular = s.head(keep);
  out.right = svd.matrixV().leftCols(keep);
  return out;
}

Matrix ApportionmentBasis::residual_scatter_apply(const Matrix& v) const {
  return residuals_ * (residuals_.transpose() * v);
}

Matrix ApportionmentBasis::design_gram_inverse() const {
  return x_solver_.gram_inverse_sandwich(a_);
}

ApportionmentBasis decompose(const Dictionary& x, const SourceDesign& a) {
  if (a.profiles() != x.profiles()) {
    throw ValidationError("design has " + std::to_string(a.profiles()) +
                          " rows but the dictionary has " + std::to_string(x.profiles()) +
                          " profiles");
  }
  ApportionmentBasis b;
  b.x_ = x.values();
  b.a_ = a.weights();
  b.x_solver_ = LeastSquaresSolver(b.x_, "dictionary");
  // M^T = (A^T A)^{-1} A^T X^T is the least-squares fit of X^T on A.
  const LeastSquaresSolver design_solver(b.a_, "design");
  b.group_means_ = design_solver.solve(b.x_.transpose()).transpose();
  b.null_basis_ = null_space_basis(b.a_);
  b.residuals_ = b.x_ * b.null_basis_;
  b.residual_svd_ = thin_svd(b.residuals_);
  b.means_solver_ = LeastSquaresSolver(b.group_means_, "group mean matrix");
  return b;
}

}  // namespace apportion
