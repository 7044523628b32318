#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gust/matrix.hpp"
#include "test_util.hpp"

namespace gust {
namespace {

using testing::naive_matmul;
using testing::random_matrix;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix m{{1.5, -2.0}, {0.25, 7.0}};
  EXPECT_EQ(matmul(Matrix::identity(2), m), m);
}

TEST(Matmul, SmallHandComputedProduct) {
  const Matrix out = matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{1}, {1}});
  EXPECT_EQ(out, (Matrix{{3}, {7}}));
}

TEST(Matmul, MatchesTripleLoopOnRandomFiveByFour) {
  std::mt19937_64 rng(11);
  const Matrix a = random_matrix(5, 4, rng);
  const Matrix b = random_matrix(4, 3, rng);
  EXPECT_LE(testing::max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, PropertyAgreesWithTripleLoopUpToFiftySquare) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> dim(1, 50);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t r = dim(rng), k = dim(rng), c = dim(rng);
    const Matrix a = random_matrix(r, k, rng);
    const Matrix b = random_matrix(k, c, rng);
    const Matrix got = matmul(a, b);
    const Matrix want = naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) {
      const double scale = std::max(1.0, std::abs(want.values()[i]));
      ASSERT_LE(std::abs(got.values()[i] - want.values()[i]) / scale, 1e-12);
    }
  }
}

TEST(Matmul, TransposedVariantsMatchExplicitTranspose) {
  std::mt19937_64 rng(13);
  const Matrix a = random_matrix(6, 4, rng);
  const Matrix b = random_matrix(6, 3, rng);
  const Matrix c = random_matrix(5, 4, rng);
  Matrix at(4, 6), ct(4, 5);
  for (std::size_t i = 0; i < 6; ++i) for (std::size_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
  for (std::size_t i = 0; i < 5; ++i) for (std::size_t j = 0; j < 4; ++j) ct(j, i) = c(i, j);
  EXPECT_LE(testing::max_abs_diff(matmul_tn(a, b), naive_matmul(at, b)), 1e-12);
  EXPECT_LE(testing::max_abs_diff(matmul_nt(a, c), naive_matmul(a, ct)), 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos);
    EXPECT_NE(msg.find("by (2x3)"), std::string::npos);
  }
}

TEST(Matrix, RejectsWrongValueCount) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Softmax, SymmetricRowIsUniform) {
  const Matrix p = softmax_rows(Matrix{{0, 0}});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
}

TEST(Softmax, LogThreeGivesThreeQuarters) {
  const Matrix p = softmax_rows(Matrix{{std::log(3.0), 0.0}});
  EXPECT_NEAR(p(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.25, 1e-15);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const Matrix p = softmax_rows(Matrix{{1000, 0}});
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.0, 1e-15);
}

TEST(Softmax, PropertyRowsAreDistributions) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix m = random_matrix(1 + trial % 9, 1 + trial % 7, rng, -50.0, 50.0);
    const Matrix p = softmax_rows(m);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (double v : p.row(i)) {
        ASSERT_GE(v, 0.0);
        s += v;
      }
      ASSERT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(CrossEntropy, PerfectOneHotIsZero) {
  const Matrix t{{1, 0}, {0, 1}};
  EXPECT_LE(cross_entropy_rows(t, t, IndexSet{0, 1}).value, 1e-9);
}

TEST(CrossEntropy, UniformAgainstOneHotIsLogTwo) {
  EXPECT_NEAR(cross_entropy_rows(Matrix{{0.5, 0.5}}, Matrix{{0, 1}}, IndexSet{0}).value,
              std::log(2.0), 1e-11);
}

TEST(CrossEntropy, MatchesScalarLoopOnRandomInstance) {
  std::mt19937_64 rng(15);
  const Matrix p = testing::random_stochastic(6, 3, rng);
  const Matrix t = testing::random_stochastic(6, 3, rng);
  const IndexSet mask{0, 2, 3, 5};
  EXPECT_NEAR(cross_entropy_rows(p, t, mask).value, testing::naive_cross_entropy(p, t, mask), 1e-12);
}

TEST(CrossEntropy, EmptyMaskReturnsZeroWithFlag) {
  const CrossEntropy ce = cross_entropy_rows(Matrix{{0.5, 0.5}}, Matrix{{1, 0}}, IndexSet{});
  EXPECT_EQ(ce.value, 0.0);
  EXPECT_TRUE(ce.empty_mask);
}

TEST(CrossEntropy, ConfidentWrongPredictionStaysFinite) {
  const CrossEntropy ce = cross_entropy_rows(Matrix{{1.0, 0.0}}, Matrix{{0, 1}}, IndexSet{0});
  EXPECT_TRUE(std::isfinite(ce.value));
  EXPECT_NEAR(ce.value, -std::log(1e-12), 1e-9);
}

TEST(Argmax, TiesGoToLowestIndex) {
  const std::vector<double> row{0.25, 0.5, 0.5, 0.25};
  EXPECT_EQ(argmax_row(row), 1u);
}

}  // namespace
}  // namespace gust
