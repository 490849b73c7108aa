#include "apportion/error.hpp"
#include "apportion/predictors.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace apportion;
using namespace testing;

namespace {

std::vector<bool> random_mask(std::mt19937_64& rng, Index p, Index unobserved) {
  std::vector<Index> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<bool> mask(static_cast<std::size_t>(p), true);
  for (Index i = 0; i < unobserved; ++i) mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = false;
  return mask;
}

}  // namespace

TEST_CASE("predictors agree with dense oracles") {
  std::mt19937_64 rng(301);
  for (int t = 0; t < 25; ++t) {
    Index p, n, k;
    random_sizes(rng, 50, 15, 4, p, n, k);
    p = std::max<Index>(p, n + 6);
    const Instance in = t % 2 ? random_instance(rng, p, n, k) : random_mixed_instance(rng, p, n, k);
    const ApportionmentBasis b = decompose(in.x, in.a);
    const Matrix& x = in.x.values();
    const Matrix& a = in.a.weights();
    const Vector y = gaussian(rng, p);
    const auto mask = random_mask(rng, p, std::uniform_int_distribution<Index>(1, p - n - 1)(rng));
    const PartitionedProblem prob(b, y, mask);
    const auto& o = prob.observed_rows();
    const auto& u = prob.unobserved_rows();
    const Vector y0 = rows_of(y, o);
    CHECK(rel_err(prob.y_observed(), y0) == 0.0);

    const Matrix x0 = rows_of(x, o), xp = rows_of(x, u);
    const Vector rts = xp * inv(x0.transpose() * x0) * x0.transpose() * y0;
    const Matrix m = oracle_means(x, a);
    const Matrix m0 = rows_of(m, o), mp = rows_of(m, u);
    const Vector atr = mp * inv(m0.transpose() * m0) * m0.transpose() * y0;
    CHECK(rel_err(predict_rts(prob), rts) <= 1e-8);
    CHECK(rel_err(predict_atr(prob), atr) <= 1e-8);

    const PartitionPredictors reuse(prob);
    CHECK(rel_err(reuse.rts(y0), predict_rts(prob)) <= 1e-12);
    CHECK(rel_err(reuse.atr(y0), predict_atr(prob)) <= 1e-12);

    for (double gamma : {0.05, 1.0, 20.0}) {
      const Matrix sigma = oracle_scatter(x, a) + gamma * Matrix::Identity(p, p);
      CHECK(rel_err(predict_fgls(prob, gamma), oracle_blup(m, sigma, o, u, y0)) <= 1e-7);
    }

    const Vector completed = complete_profile(prob, predict_rts(prob));
    for (std::size_t i = 0; i < o.size(); ++i) CHECK(completed(o[i]) == y(o[i]));
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(completed(u[i]) == predict_rts(prob)(static_cast<Index>(i)));
  }
}

TEST_CASE("feasible predictor limits") {
  std::mt19937_64 rng(302);
  for (int t = 0; t < 10; ++t) {
    const Instance in = random_instance(rng, 40, 10, 3);
    const ApportionmentBasis b = decompose(in.x, in.a);
    const PartitionedProblem prob(b, gaussian(rng, 40), random_mask(rng, 40, 12));
    const Vector rts = predict_rts(prob);
    const Vector atr = predict_atr(prob);
    CHECK((predict_fgls(prob, 1e-9) - rts).norm() <= 1e-5 * (1 + rts.norm()));
    CHECK((predict_fgls(prob, 1e9) - atr).norm() <= 1e-5 * (1 + atr.norm()));
  }
}

TEST_CASE("oracle BLUP matches the dense formula for both covariance forms") {
  std::mt19937_64 rng(303);
  const Matrix mean = gaussian(rng, 20, 3);
  const Matrix f = gaussian(rng, 20, 5);
  const Matrix dense = f * f.transpose() + 0.4 * Matrix::Identity(20, 20);
  std::vector<Index> o, u;
  for (Index i = 0; i < 20; ++i) (i % 4 == 1 ? u : o).push_back(i);
  const Vector y0 = gaussian(rng, static_cast<Index>(o.size()));
  const Vector want = oracle_blup(mean, dense, o, u, y0);
  CHECK(rel_err(predict_oracle_blup(mean, Covariance::dense(dense), o, u, y0), want) <= 1e-9);
  CHECK(rel_err(predict_oracle_blup(mean, Covariance::low_rank_plus_isotropic(f, 0.4), o, u, y0), want) <= 1e-9);
}

TEST_CASE("prediction is exact for profiles in the dictionary span") {
  std::mt19937_64 rng(304);
  const Instance in = random_instance(rng, 30, 8, 2);
  const ApportionmentBasis b = decompose(in.x, in.a);
  const Vector y = in.x.values() * gaussian(rng, 8);
  const PartitionedProblem prob(b, y, random_mask(rng, 30, 10));
  CHECK(rel_err(predict_rts(prob), rows_of(y, prob.unobserved_rows())) <= 1e-9);
}

TEST_CASE("partition validation") {
  const Instance f = fixture();
  const ApportionmentBasis b = decompose(f.x, f.a);
  CHECK_THROWS_AS((void)PartitionedProblem(b, Vector::Zero(4), std::vector<bool>(4, true)), ValidationError);
  CHECK_THROWS_AS((void)PartitionedProblem(b, Vector::Zero(4), {true, false, false, false}), ValidationError);
  CHECK_THROWS_AS((void)PartitionedProblem(b, Vector::Zero(4), {true, true, false}), ValidationError);
  // X0 with 2 rows cannot support 3 dictionary columns.
  const PartitionedProblem thin(b, unit(4, 0), {true, true, false, false});
  CHECK_THROWS_AS(predict_rts(thin), NumericalError);
  CHECK(observed_mask(4, {1, 3}) == std::vector<bool>{true, false, true, false});
}
