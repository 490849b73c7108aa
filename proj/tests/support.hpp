#pragma once

// Shared helpers for the test binaries: random instances and brute-force
// oracles built from explicit inverses and projectors.

#include "apportion/model_core.hpp"

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

namespace testing {

using apportion::Dictionary;
using apportion::Index;
using apportion::Matrix;
using apportion::SourceDesign;
using apportion::Vector;

inline Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> z;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  return m;
}

inline Vector gaussian(std::mt19937_64& rng, Index n) { return gaussian(rng, n, 1).col(0); }

inline std::vector<std::string> category_names(Index k) {
  std::vector<std::string> names;
  for (Index i = 0; i < k; ++i) names.push_back("c" + std::to_string(i + 1));
  return names;
}

struct Instance {
  Dictionary x;
  SourceDesign a;
};

// Indicator design with every category present; the first K profiles cover
// the categories once, the rest are assigned at random.
inline Instance random_instance(std::mt19937_64& rng, Index p, Index n, Index k) {
  std::uniform_int_distribution<Index> pick(0, k - 1);
  auto names = category_names(k);
  std::vector<std::string> labels;
  for (Index i = 0; i < n; ++i) labels.push_back(names[static_cast<std::size_t>(i < k ? i : pick(rng))]);
  return Instance{Dictionary(gaussian(rng, p, n)), apportion::build_design(labels, names)};
}

// Mixed design: each row drawn uniformly on the simplex.
inline Instance random_mixed_instance(std::mt19937_64& rng, Index p, Index n, Index k) {
  std::exponential_distribution<double> e;
  std::vector<apportion::WeightRow> rows;
  for (Index i = 0; i < n; ++i) {
    apportion::WeightRow w(static_cast<std::size_t>(k));
    double s = 0.0;
    for (auto& v : w) s += (v = e(rng));
    for (auto& v : w) v /= s;
    rows.push_back(w);
  }
  return Instance{Dictionary(gaussian(rng, p, n)), apportion::build_design(rows, category_names(k))};
}

// Random sizes drawn within the given caps, respecting K <= n < p.
inline void random_sizes(std::mt19937_64& rng, Index max_p, Index max_n, Index max_k, Index& p,
                         Index& n, Index& k) {
  k = std::uniform_int_distribution<Index>(1, max_k)(rng);
  n = std::uniform_int_distribution<Index>(k + 1, max_n)(rng);
  p = std::uniform_int_distribution<Index>(n + 2, max_p)(rng);
}

inline Matrix inv(const Matrix& m) { return m.inverse(); }

inline Matrix hat(const Matrix& d) { return d * inv(d.transpose() * d) * d.transpose(); }

inline Matrix oracle_means(const Matrix& x, const Matrix& a) {
  return x * a * inv(a.transpose() * a);
}

// S = X (I - P_A) X^T, independent of the choice of null basis.
inline Matrix oracle_scatter(const Matrix& x, const Matrix& a) {
  const Matrix pa = hat(a);
  return x * (Matrix::Identity(a.rows(), a.rows()) - pa) * x.transpose();
}

inline Vector oracle_rts(const Matrix& x, const Matrix& a, const Vector& y) {
  return a.transpose() * inv(x.transpose() * x) * x.transpose() * y;
}

inline Vector oracle_atr(const Matrix& x, const Matrix& a, const Vector& y) {
  const Matrix m = oracle_means(x, a);
  return inv(m.transpose() * m) * m.transpose() * y;
}

inline Vector oracle_gls(const Matrix& mean, const Matrix& sigma, const Vector& y) {
  const Matrix si = inv(sigma);
  return inv(mean.transpose() * si * mean) * mean.transpose() * si * y;
}

inline Vector oracle_fgls(const Matrix& x, const Matrix& a, const Vector& y, double gamma) {
  const Index p = x.rows();
  return oracle_gls(oracle_means(x, a), oracle_scatter(x, a) + gamma * Matrix::Identity(p, p), y);
}

inline Matrix rows_of(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

inline Matrix block_of(const Matrix& m, const std::vector<Index>& r, const std::vector<Index>& c) {
  Matrix out(static_cast<Index>(r.size()), static_cast<Index>(c.size()));
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = m(r[i], c[j]);
  return out;
}

// Dense BLUP: M' theta + Sigma[u,o] Sigma0^{-1} (y0 - M0 theta), theta the GLS fit on the observed rows.
inline Vector oracle_blup(const Matrix& mean, const Matrix& sigma, const std::vector<Index>& obs,
                          const std::vector<Index>& unobs, const Vector& y0) {
  const Matrix m0 = rows_of(mean, obs);
  const Matrix s0 = block_of(sigma, obs, obs);
  const Vector theta = oracle_gls(m0, s0, y0);
  return rows_of(mean, unobs) * theta + block_of(sigma, unobs, obs) * inv(s0) * (y0 - m0 * theta);
}

inline double min_eig(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double rel_err(const Matrix& got, const Matrix& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

// FIXTURE: X = [e1, e2 + e3, e3] in R^4, labels (s1, s1, s2).
inline Instance fixture() {
  Matrix x = Matrix::Zero(4, 3);
  x(0, 0) = 1;
  x(1, 1) = 1;
  x(2, 1) = 1;
  x(2, 2) = 1;
  return Instance{Dictionary(x, {"f1", "f2", "f3", "f4"}, {"x1", "x2", "x3"}),
                  apportion::build_design(std::vector<std::string>{"s1", "s1", "s2"}, {"s1", "s2"})};
}

inline Vector unit(Index n, Index i) { return Vector::Unit(n, i); }

}  // namespace testing
