#include "apportion/error.hpp"
#include "apportion/model_core.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace apportion;
using namespace testing;

TEST_CASE("fixture decomposition") {
  const Instance f = fixture();
  const ApportionmentBasis b = decompose(f.x, f.a);

  Matrix means(4, 2);
  means << 0.5, 0,
           0.5, 0,
           0.5, 1,
           0,   0;
  CHECK((b.group_means() - means).norm() <= 1e-12);

  Matrix gram_inv(2, 2);
  gram_inv << 2, -1, -1, 1.5;
  const Matrix mtm = b.group_means().transpose() * b.group_means();
  CHECK((mtm.inverse() - gram_inv).norm() <= 1e-12);

  const double r = 1.0 / std::sqrt(2.0);
  Vector n(3);
  n << r, -r, 0;
  CHECK((b.null_basis().col(0) - n).norm() <= 1e-12);
  Vector e(4);
  e << r, -r, -r, 0;
  CHECK((b.residuals().col(0) - e).norm() <= 1e-12);

  Matrix dgi(2, 2);
  dgi << 2, -1, -1, 2;
  CHECK((b.design_gram_inverse() - dgi).norm() <= 1e-12);
}

TEST_CASE("decomposition identities on random instances") {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 40; ++t) {
    Index p, n, k;
    random_sizes(rng, 40, 15, 5, p, n, k);
    const Instance in = t % 2 ? random_instance(rng, p, n, k) : random_mixed_instance(rng, p, n, k);
    const ApportionmentBasis b = decompose(in.x, in.a);
    const Matrix& x = in.x.values();
    const Matrix& a = in.a.weights();

    CHECK(b.null_basis().cols() == n - k);
    CHECK((a.transpose() * b.null_basis()).norm() <= 1e-10);
    CHECK((b.null_basis().transpose() * b.null_basis() - Matrix::Identity(n - k, n - k)).norm() <= 1e-10);
    CHECK(rel_err(b.group_means(), oracle_means(x, a)) <= 1e-10);
    CHECK(rel_err(b.residuals() * b.residuals().transpose(), oracle_scatter(x, a)) <= 1e-10);
    const Matrix v = gaussian(rng, p, 2);
    CHECK(rel_err(b.residual_scatter_apply(v), oracle_scatter(x, a) * v) <= 1e-10);
    CHECK(rel_err(b.design_gram_inverse(), a.transpose() * inv(x.transpose() * x) * a) <= 1e-10);

    const ResidualSvd& s = b.residual_svd();
    CHECK(rel_err(s.left * s.singular.asDiagonal() * s.right.transpose(), b.residuals()) <= 1e-10);
    for (Index i = 1; i < s.singular.size(); ++i) CHECK(s.singular(i) <= s.singular(i - 1));
  }
}

TEST_CASE("K = n leaves no residual directions") {
  std::mt19937_64 rng(7);
  const Instance in = random_instance(rng, 10, 3, 3);
  const ApportionmentBasis b = decompose(in.x, in.a);
  CHECK(b.null_basis().cols() == 0);
  CHECK(b.residuals().cols() == 0);
  CHECK(b.residual_svd().singular.size() == 0);
}

TEST_CASE("dictionary validation") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS((void)Dictionary(gaussian(rng, 3, 3)), ValidationError);
  CHECK_THROWS_AS((void)Dictionary(gaussian(rng, 3, 0)), ValidationError);
  Matrix bad = gaussian(rng, 5, 2);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS((void)Dictionary(bad), ValidationError);
  Matrix collinear = gaussian(rng, 6, 3);
  collinear.col(2) = collinear.col(0);
  CHECK_THROWS_AS((void)Dictionary(collinear), NumericalError);
  CHECK_THROWS_AS((void)Dictionary(gaussian(rng, 4, 2), {"a", "b", "c", "a"}, {"x", "y"}), ValidationError);
  CHECK_THROWS_AS((void)Dictionary(gaussian(rng, 4, 2), {"a", "b", "c", "d"}, {"x", "x"}), ValidationError);
  CHECK_THROWS_AS((void)Dictionary(gaussian(rng, 4, 2), {"a", "b", "c"}, {"x", "y"}), ValidationError);
}

TEST_CASE("design validation") {
  using Rows = std::vector<WeightRow>;
  CHECK_NOTHROW(build_design(Rows{{0.25, 0.75}, {1, 0}, {0, 1}}, {"a", "b"}));
  CHECK_THROWS_AS(build_design(Rows{{0.5, 0.4}, {1, 0}, {0, 1}}, {"a", "b"}), ValidationError);
  CHECK_THROWS_AS(build_design(Rows{{1.5, -0.5}, {1, 0}, {0, 1}}, {"a", "b"}), ValidationError);
  // More categories than profiles.
  CHECK_THROWS_AS(build_design(Rows{{0.5, 0.5, 0}, {0, 0.5, 0.5}}, {"a", "b", "c"}), ValidationError);
  // A category no profile draws from.
  CHECK_THROWS_AS(build_design(Rows{{1, 0, 0}, {0, 1, 0}, {1, 0, 0}}, {"a", "b", "c"}), ValidationError);
  // Rank deficient: identical mixing rows.
  CHECK_THROWS_AS(build_design(Rows{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}, {"a", "b"}), ValidationError);
  CHECK_THROWS_AS(build_design(std::vector<std::string>{"a", "b", "zz"}, {"a", "b"}), ValidationError);
  CHECK_THROWS_AS(build_design(std::vector<std::string>{"a", "a"}, {"a", "a"}), ValidationError);

  const SourceDesign d = build_design(std::vector<std::string>{"b", "a", "b"}, {"a", "b"});
  CHECK(d.is_indicator());
  CHECK(d.category_of(0) == 1);
  CHECK(d.category_of(1) == 0);
  const SourceDesign m = build_design(Rows{{0.25, 0.75}, {1, 0}, {0, 1}}, {"a", "b"});
  CHECK_FALSE(m.is_indicator());
  CHECK_FALSE(m.category_of(0).has_value());
  CHECK(m.category_of(1) == 0);
}

TEST_CASE("profile bookkeeping") {
  Profile y = Profile::fully_observed(Vector::Ones(4));
  CHECK(y.complete());
  CHECK(y.observed_count() == 4);
  y.observed[2] = false;
  CHECK_FALSE(y.complete());
  CHECK(y.observed_count() == 3);
}
