#include <gtest/gtest.h>

#include <cmath>

#include "gcmc/decoder.hpp"
#include "gcmc/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace gcmc {
namespace {

using testing::random_dense;

TEST(DecoderWeights, SingleBasisScalesByCoefficient) {
  DecoderParams p;
  p.basis = {DenseMatrix::from_rows({{1, 2}, {3, 4}})};
  p.coefficients = DenseMatrix::from_rows({{2}, {-1}, {0}});
  const auto q = decoder_weights(p);
  ASSERT_EQ(q.size(), 3u);
  EXPECT_EQ(q[0], DenseMatrix::from_rows({{2, 4}, {6, 8}}));
  EXPECT_EQ(q[1], DenseMatrix::from_rows({{-1, -2}, {-3, -4}}));
  EXPECT_EQ(q[2], DenseMatrix(2, 2));
}

TEST(DecoderWeights, IdentityCoefficientsRecoverTheBasis) {
  Rng rng(1);
  DecoderParams p;
  for (int s = 0; s < 3; ++s) p.basis.push_back(random_dense(4, 4, rng));
  p.coefficients = DenseMatrix::identity(3);
  const auto q = decoder_weights(p);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(q[s], p.basis[s]);
}

TEST(RatingLogits, HandComputedBilinearForm) {
  const DenseMatrix u = DenseMatrix::from_rows({{1, 2}});
  const DenseMatrix v = DenseMatrix::from_rows({{3, 4}, {0, 1}});
  const std::vector<DenseMatrix> q{DenseMatrix::identity(2), DenseMatrix::from_rows({{0, 1}, {1, 0}})};
  const std::vector<NodePair> pairs{{0, 0}, {0, 1}};
  const DenseMatrix logits = rating_logits(u, v, pairs, q);
  // [1 2] I [3 4]^T = 11, [1 2] swap [3 4]^T = 1*4 + 2*3 = 10.
  EXPECT_EQ(logits, DenseMatrix::from_rows({{11, 10}, {2, 1}}));
}

TEST(RatingLogits, FactoredFormAgreesWithExplicitWeights) {
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    const std::size_t e = 1 + rng.below(5), levels = 1 + rng.below(5);
    const std::size_t nb = 1 + rng.below(levels);
    const DecoderParams p = init_decoder_params(e, levels, nb, rng);
    const DenseMatrix u = random_dense(4, e, rng), v = random_dense(5, e, rng);
    std::vector<NodePair> pairs;
    for (int n = 0; n < 8; ++n) pairs.push_back({rng.below(4), rng.below(5)});
    const auto q = decoder_weights(p);
    EXPECT_LE(max_abs_diff(basis_logits(u, v, pairs, p).logits, rating_logits(u, v, pairs, q)), 1e-12);
  }
}

TEST(RatingLogits, WorkScalesWithRequestedPairsOnly) {
  Rng rng(3);
  const std::size_t e = 4, levels = 5;
  const DecoderParams p = init_decoder_params(e, levels, 2, rng);
  const auto q = decoder_weights(p);
  const DenseMatrix u = random_dense(200, e, rng), v = random_dense(300, e, rng);
  std::vector<NodePair> pairs;
  for (int n = 0; n < 10; ++n) pairs.push_back({rng.below(200), rng.below(300)});
  OpCounter ten;
  rating_logits(u, v, pairs, q, &ten);
  EXPECT_EQ(ten.multiply_adds, 10u * levels * (e * e + e));
  pairs.insert(pairs.end(), pairs.begin(), pairs.end());
  OpCounter twenty;
  rating_logits(u, v, pairs, q, &twenty);
  EXPECT_EQ(twenty.multiply_adds, 2 * ten.multiply_adds);
  // A dense N_u x N_v pass would cost at least one multiply per cell and level.
  EXPECT_LT(twenty.multiply_adds, 200u * 300u * levels);
}

TEST(RatingLogits, RejectsOutOfRangePairs) {
  const DenseMatrix u(2, 3), v(2, 3);
  const std::vector<DenseMatrix> q{DenseMatrix(3, 3)};
  const std::vector<NodePair> bad{{2, 0}};
  EXPECT_THROW(rating_logits(u, v, bad, q), ContractViolation);
}

TEST(InitDecoder, BasisCountMustBeWithinLevels) {
  Rng rng(4);
  EXPECT_THROW(init_decoder_params(3, 5, 0, rng), ConfigError);
  EXPECT_THROW(init_decoder_params(3, 5, 6, rng), ConfigError);
  const DecoderParams p = init_decoder_params(3, 5, 2, rng);
  EXPECT_EQ(p.num_basis(), 2u);
  EXPECT_EQ(p.num_levels(), 5u);
  EXPECT_EQ(p.basis[0].rows(), 3u);
}

TEST(Predict, UniformLogitsGiveTheMeanLevel) {
  const std::vector<double> levels{1, 2, 3, 4, 5};
  const auto out = predict(DenseMatrix(1, 5), levels);
  for (double p : out[0].probabilities) EXPECT_DOUBLE_EQ(p, 0.2);
  EXPECT_NEAR(out[0].expected_rating, 3.0, 1e-12);
}

TEST(Predict, DominantLogitPicksItsLevel) {
  const std::vector<double> levels{1, 2, 3, 4, 5};
  const auto out = predict(DenseMatrix::from_rows({{0, 0, 0, 1000, 0}}), levels);
  EXPECT_NEAR(out[0].expected_rating, 4.0, 1e-12);
  EXPECT_NEAR(out[0].probabilities[3], 1.0, 1e-12);
}

TEST(Predict, TwoLevelHandExample) {
  const std::vector<double> levels{1, 5};
  const auto out = predict(DenseMatrix::from_rows({{0, std::log(3.0)}}), levels);
  EXPECT_NEAR(out[0].probabilities[0], 0.25, 1e-15);
  EXPECT_NEAR(out[0].expected_rating, 0.25 * 1 + 0.75 * 5, 1e-12);
}

TEST(Predict, SimplexAndRangeOnRandomLogits) {
  Rng rng(5);
  const std::vector<double> levels{0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4, 4.5, 5};
  for (int k = 0; k < 200; ++k) {
    const DenseMatrix logits = random_dense(3, levels.size(), rng, -500.0, 500.0);
    for (const auto& p : predict(logits, levels)) {
      double sum = 0.0;
      for (double x : p.probabilities) {
        EXPECT_GE(x, 0.0);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      EXPECT_GE(p.expected_rating, levels.front() - 1e-12);
      EXPECT_LE(p.expected_rating, levels.back() + 1e-12);
    }
  }
}

TEST(Predict, SimplexOnModelPredictions) {
  const auto summary = testing::run_decoder_simplex(2000, 1e-9);
  EXPECT_EQ(summary.edges, 2000u);
  EXPECT_EQ(summary.violations, 0u) << "worst sum error " << summary.worst_sum_error;
}

TEST(Predict, ShiftInvariantPerRow) {
  Rng rng(6);
  const std::vector<double> levels{1, 2, 3, 4, 5};
  for (int k = 0; k < 100; ++k) {
    DenseMatrix logits = random_dense(2, 5, rng, -10.0, 10.0);
    DenseMatrix shifted = logits;
    const double c = rng.uniform(-100.0, 100.0);
    for (double& v : shifted.row(1)) v += c;
    const auto a = predict(logits, levels), b = predict(shifted, levels);
    for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(a[1].probabilities[r], b[1].probabilities[r], 1e-12);
    EXPECT_NEAR(a[1].expected_rating, b[1].expected_rating, 1e-12);
    EXPECT_EQ(a[0].probabilities, b[0].probabilities);
  }
}

TEST(Predict, LevelCountMismatchIsRejected) {
  const std::vector<double> levels{1, 2};
  EXPECT_THROW(expected_ratings(DenseMatrix(1, 3), levels), ContractViolation);
}

}  // namespace
}  // namespace gcmc
