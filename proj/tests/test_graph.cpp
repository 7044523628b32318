#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gust/gradcheck.hpp"
#include "gust/graph.hpp"
#include "test_util.hpp"

namespace gust {
namespace {

/// Largest |eigenvalue| of a dense symmetric matrix by power iteration.
double spectral_radius(const Matrix& m) {
  std::vector<double> v(m.rows(), 1.0), w(m.rows());
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    double norm = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      w[i] = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) w[i] += m(i, j) * v[j];
      norm += w[i] * w[i];
    }
    norm = std::sqrt(norm);
    double vnorm = 0.0;
    for (double x : v) vnorm += x * x;
    lambda = norm / std::sqrt(vnorm);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / norm;
  }
  return lambda;
}

TEST(NormalizedAdjacency, SingleNodeIsOne) {
  const SparseAdjacency a = build_normalized_adjacency(1, {});
  EXPECT_EQ(a.to_dense(), (Matrix{{1.0}}));
}

TEST(NormalizedAdjacency, TwoNodesAllHalves) {
  const std::vector<Edge> edges{{0, 1}};
  EXPECT_EQ(build_normalized_adjacency(2, edges).to_dense(), Matrix(2, 2, 0.5));
}

TEST(NormalizedAdjacency, IsolatedNodeKeepsUnitSelfLoop) {
  const std::vector<Edge> edges{{0, 1}};
  const Matrix d = build_normalized_adjacency(3, edges).to_dense();
  EXPECT_EQ(d(2, 2), 1.0);
  EXPECT_EQ(d(2, 0), 0.0);
}

TEST(NormalizedAdjacency, RandomGraphSymmetricWithBoundedSpectrum) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto edges = testing::random_edges(10, 0.35, rng);
    const SparseAdjacency a = build_normalized_adjacency(10, edges);
    const Matrix d = a.to_dense();
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) ASSERT_EQ(d(i, j), d(j, i));  // bitwise
    for (std::size_t i = 0; i < 10; ++i) {
      ASSERT_TRUE(std::is_sorted(a.col_indices.begin() + a.row_offsets[i],
                                 a.col_indices.begin() + a.row_offsets[i + 1]));
    }
    for (double v : a.values) ASSERT_GE(v, 0.0);
    EXPECT_LE(spectral_radius(d), 1.0 + 1e-9);
  }
}

TEST(CanonicalizeEdges, DeduplicatesAndOrients) {
  const std::vector<Edge> raw{{2, 0}, {0, 2}, {1, 2}, {0, 2}};
  const auto e = canonicalize_edges(raw, 3);
  EXPECT_EQ(e, (std::vector<Edge>{{0, 2}, {1, 2}}));
}

TEST(CanonicalizeEdges, RejectsSelfLoopAndOutOfRange) {
  const std::vector<Edge> loop{{1, 1}};
  const std::vector<Edge> far{{0, 5}};
  EXPECT_THROW(canonicalize_edges(loop, 3), std::invalid_argument);
  EXPECT_THROW(canonicalize_edges(far, 3), std::invalid_argument);
}

TEST(Spmm, IdentityAdjacencyIsNoOp) {
  std::mt19937_64 rng(32);
  const Matrix m = testing::random_matrix(4, 3, rng);
  EXPECT_EQ(spmm(SparseAdjacency::identity(4), m), m);
}

TEST(Spmm, TwoNodeAdjacencyPreservesOnes) {
  const std::vector<Edge> edges{{0, 1}};
  EXPECT_EQ(spmm(build_normalized_adjacency(2, edges), Matrix{{1}, {1}}), (Matrix{{1}, {1}}));
}

TEST(Spmm, MatchesDensifiedProduct) {
  std::mt19937_64 rng(33);
  const auto edges = testing::random_edges(15, 0.3, rng);
  const SparseAdjacency a = build_normalized_adjacency(15, edges);
  const Matrix m = testing::random_matrix(15, 4, rng);
  EXPECT_LE(testing::max_abs_diff(spmm(a, m), testing::naive_matmul(a.to_dense(), m)), 1e-12);
  EXPECT_LE(testing::max_abs_diff(spmm_transposed(a, m), testing::naive_matmul(a.to_dense(), m)), 1e-12);
}

TEST(Spmm, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(spmm(SparseAdjacency::identity(3), Matrix(4, 2)), DimensionError);
}

TEST(Spmm, GradientFlowsToDenseOperand) {
  std::mt19937_64 rng(34);
  const auto edges = testing::random_edges(8, 0.4, rng);
  const SparseAdjacency a = build_normalized_adjacency(8, edges);
  Parameter m("m", testing::random_matrix(8, 3, rng));
  const Matrix weights = testing::random_matrix(8, 3, rng);
  std::vector<Parameter*> ps{&m};
  auto build = [&](Tape& t) {
    Var out = spmm(t, a, t.parameter(m));
    return sum(t, mul(t, out, t.constant(weights)));
  };
  zero_grads(ps);
  {
    Tape t;
    t.backward(build(t));
  }
  EXPECT_LE(finite_diff_check([&] { Tape t; return t.scalar(build(t)); }, ps, 1e-5).max_relative_error, 1e-6);
}

TEST(Smoothness, IdenticalRowsGiveZero) {
  const std::vector<Edge> edges{{0, 1}, {1, 2}};
  EXPECT_EQ(smoothness_penalty(Matrix(3, 2, 0.3), edges), 0.0);
}

TEST(Smoothness, OppositeOneHotsGiveTwo) {
  const std::vector<Edge> edges{{0, 1}};
  EXPECT_EQ(smoothness_penalty(Matrix{{1, 0}, {0, 1}}, edges), 2.0);
}

TEST(Smoothness, MatchesEdgeLoopOnRandomGraph) {
  std::mt19937_64 rng(35);
  const auto edges = testing::random_edges(8, 0.4, rng);
  const Matrix q = testing::random_matrix(8, 3, rng);
  EXPECT_NEAR(smoothness_penalty(q, edges), testing::edge_loop_penalty(q, edges), 1e-12);
}

TEST(Smoothness, InvariantToEdgeOrderAndOrientation) {
  std::mt19937_64 rng(36);
  auto edges = testing::random_edges(12, 0.3, rng);
  const Matrix q = testing::random_matrix(12, 4, rng);
  const double base = smoothness_penalty(q, edges);
  std::shuffle(edges.begin(), edges.end(), rng);
  for (auto& e : edges) std::swap(e.u, e.v);
  EXPECT_NEAR(smoothness_penalty(q, edges), base, 1e-12);
}

TEST(Smoothness, ZeroExactlyForComponentwiseConstantRows) {
  // Components {0,1,2} and {3,4}.
  const std::vector<Edge> edges{{0, 1}, {1, 2}, {3, 4}};
  Matrix q(5, 2);
  for (std::size_t i = 0; i < 3; ++i) q(i, 0) = 0.8, q(i, 1) = 0.2;
  for (std::size_t i = 3; i < 5; ++i) q(i, 0) = 0.1, q(i, 1) = 0.9;
  EXPECT_EQ(smoothness_penalty(q, edges), 0.0);
  q(4, 1) = 0.85;
  EXPECT_GT(smoothness_penalty(q, edges), 0.0);
}

TEST(Smoothness, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(37);
  const auto edges = testing::random_edges(9, 0.4, rng);
  Parameter q("q", testing::random_matrix(9, 3, rng));
  std::vector<Parameter*> ps{&q};
  zero_grads(ps);
  {
    Tape t;
    t.backward(smoothness_penalty(t, t.parameter(q), edges));
  }
  auto loss = [&] { return smoothness_penalty(q.value, edges); };
  EXPECT_LE(finite_diff_check(loss, ps, 1e-5).max_relative_error, 1e-6);
}

TEST(GraphValidate, RejectsOverlappingMasksAndUnlabeledTrainNodes) {
  Graph g;
  g.n = 3;
  g.num_classes = 2;
  g.features = Matrix(3, 1);
  g.labels = {0, std::nullopt, 1};
  g.train_mask = {0};
  g.test_mask = {0, 2};
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g.test_mask = {2};
  EXPECT_NO_THROW(g.validate());
  g.train_mask = {0, 1};
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(GraphValidate, UnlabeledIsComplementOfTrain) {
  Graph g;
  g.n = 5;
  g.train_mask = {1, 3};
  EXPECT_EQ(g.unlabeled(), (IndexSet{0, 2, 4}));
}

}  // namespace
}  // namespace gust
