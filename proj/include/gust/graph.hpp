#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gust/autodiff.hpp"
#include "gust/errors.hpp"
#include "gust/matrix.hpp"

namespace gust {

/// Undirected edge. Canonical form has u < v.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Rejects self-loops and out-of-range endpoints, orients every edge as
/// u < v, then sorts and deduplicates.
inline std::vector<Edge> canonicalize_edges(std::span<const Edge> edges, std::size_t n) {
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.u >= n || e.v >= n) {
      throw std::invalid_argument("edge (" + std::to_string(e.u) + ", " +
                                  std::to_string(e.v) + ") out of range for " +
                                  std::to_string(n) + " nodes");
    }
    if (e.u == e.v) {
      throw std::invalid_argument("self-loop on node " + std::to_string(e.u));
    }
    out.push_back(e.u < e.v ? e : Edge{e.v, e.u});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct Graph {
  std::size_t n = 0;
  std::size_t num_classes = 0;
  /// Canonical (u < v), sorted, unique.
  std::vector<Edge> edges;
  /// n x d.
  Matrix features;
  std::vector<std::optional<std::size_t>> labels;
  IndexSet train_mask;
  IndexSet val_mask;
  IndexSet test_mask;

  std::size_t feature_dim() const { return features.cols(); }

  /// Nodes outside the train mask; these receive pseudo-labels.
  IndexSet unlabeled() const {
    IndexSet out;
    std::size_t t = 0;
    for (std::size_t i = 0; i < n; ++i) {
      while (t < train_mask.size() && train_mask[t] < i) ++t;
      if (t < train_mask.size() && train_mask[t] == i) continue;
      out.push_back(i);
    }
    return out;
  }

  void validate() const {
    if (features.rows() != n) {
      throw std::invalid_argument("graph: features have " + std::to_string(features.rows()) +
                                  " rows for " + std::to_string(n) + " nodes");
    }
    if (labels.size() != n) throw std::invalid_argument("graph: label vector length != n");
    for (const Edge& e : edges) {
      if (e.u >= e.v || e.v >= n) throw std::invalid_argument("graph: non-canonical edge");
    }
    if (!std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
      throw std::invalid_argument("graph: edges not sorted and unique");
    }
    for (const auto& l : labels) {
      if (l && *l >= num_classes) throw std::invalid_argument("graph: label out of range");
    }
    std::vector<char> seen(n, 0);
    auto check = [&](const IndexSet& mask, const char* name) {
      if (!std::is_sorted(mask.begin(), mask.end())) {
        throw std::invalid_argument(std::string("graph: ") + name + " mask not sorted");
      }
      for (std::size_t i : mask) {
        if (i >= n) throw std::invalid_argument(std::string("graph: ") + name + " index out of range");
        if (seen[i]) throw std::invalid_argument(std::string("graph: masks overlap at node ") + std::to_string(i));
        seen[i] = 1;
      }
    };
    check(train_mask, "train");
    check(val_mask, "val");
    check(test_mask, "test");
    for (std::size_t i : train_mask) {
      if (!labels[i]) throw std::invalid_argument("graph: train node " + std::to_string(i) + " has no label");
    }
  }
};

/// Symmetric matrix in CSR form.
struct SparseAdjacency {
  std::size_t n = 0;
  std::vector<std::size_t> row_offsets;
  std::vector<std::size_t> col_indices;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }

  static SparseAdjacency identity(std::size_t n) {
    SparseAdjacency a;
    a.n = n;
    a.row_offsets.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) a.row_offsets[i] = i;
    a.col_indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.col_indices[i] = i;
    a.values.assign(n, 1.0);
    return a;
  }

  Matrix to_dense() const {
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p) {
        d(i, col_indices[p]) = values[p];
      }
    }
    return d;
  }
};

/// D^{-1/2} (A + I) D^{-1/2}, with D the degree matrix of A + I.
inline SparseAdjacency build_normalized_adjacency(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) neighbors[i].push_back(i);
  for (const Edge& e : edges) {
    neighbors[e.u].push_back(e.v);
    neighbors[e.v].push_back(e.u);
  }
  std::vector<double> degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& nb = neighbors[i];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    degree[i] = static_cast<double>(nb.size());
  }

  SparseAdjacency a;
  a.n = n;
  a.row_offsets.reserve(n + 1);
  a.row_offsets.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : neighbors[i]) {
      a.col_indices.push_back(j);
      // Product is commutative, so a(i,j) and a(j,i) are bitwise equal.
      a.values.push_back(1.0 / std::sqrt(degree[i] * degree[j]));
    }
    a.row_offsets.push_back(a.col_indices.size());
  }
  return a;
}

inline SparseAdjacency build_normalized_adjacency(const Graph& g) {
  return build_normalized_adjacency(g.n, g.edges);
}

inline Matrix spmm(const SparseAdjacency& adj, const Matrix& m) {
  if (adj.n != m.rows()) {
    throw DimensionError("spmm: adjacency is " + Matrix::shape_string(adj.n, adj.n) +
                         ", dense operand is " + m.shape());
  }
  Matrix out(adj.n, m.cols());
  for (std::size_t i = 0; i < adj.n; ++i) {
    auto o = out.row(i);
    for (std::size_t p = adj.row_offsets[i]; p < adj.row_offsets[i + 1]; ++p) {
      const double w = adj.values[p];
      auto src = m.row(adj.col_indices[p]);
      for (std::size_t k = 0; k < o.size(); ++k) o[k] += w * src[k];
    }
  }
  return out;
}

/// adj^T * m.
inline Matrix spmm_transposed(const SparseAdjacency& adj, const Matrix& m) {
  if (adj.n != m.rows()) {
    throw DimensionError("spmm_transposed: adjacency is " +
                         Matrix::shape_string(adj.n, adj.n) + ", dense operand is " + m.shape());
  }
  Matrix out(adj.n, m.cols());
  for (std::size_t i = 0; i < adj.n; ++i) {
    auto src = m.row(i);
    for (std::size_t p = adj.row_offsets[i]; p < adj.row_offsets[i + 1]; ++p) {
      const double w = adj.values[p];
      auto o = out.row(adj.col_indices[p]);
      for (std::size_t k = 0; k < o.size(); ++k) o[k] += w * src[k];
    }
  }
  return out;
}

/// Differentiable in `m`. The adjacency must outlive the tape.
inline Var spmm(Tape& t, const SparseAdjacency& adj, Var m) {
  return t.record(spmm(adj, t.value(m)), {m}, [&adj, m](Tape& tp, const Matrix& g) {
    tp.accumulate(m, spmm_transposed(adj, g));
  });
}

/// Sum over undirected edges of ||q_i - q_j||^2, each edge counted once.
inline double smoothness_penalty(const Matrix& q, std::span<const Edge> edges) {
  double total = 0.0;
  for (const Edge& e : edges) {
    auto a = q.row(e.u);
    auto b = q.row(e.v);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      total += d * d;
    }
  }
  return total;
}

/// Differentiable smoothness_penalty. `grad_scale` multiplies the backward
/// contribution only; anything other than 1 is a fault injection for testing
/// the gradient gate.
inline Var smoothness_penalty(Tape& t, Var q, std::vector<Edge> edges, double grad_scale = 1.0) {
  const double value = smoothness_penalty(t.value(q), edges);
  return t.record(Matrix(1, 1, value), {q},
                  [q, edges = std::move(edges), grad_scale](Tape& tp, const Matrix& g) {
                    const Matrix& qv = tp.value(q);
                    Matrix gq(qv.rows(), qv.cols());
                    const double w = 2.0 * g(0, 0) * grad_scale;
                    for (const Edge& e : edges) {
                      auto a = qv.row(e.u);
                      auto b = qv.row(e.v);
                      auto ga = gq.row(e.u);
                      auto gb = gq.row(e.v);
                      for (std::size_t k = 0; k < a.size(); ++k) {
                        const double d = w * (a[k] - b[k]);
                        ga[k] += d;
                        gb[k] -= d;
                      }
                    }
                    tp.accumulate(q, gq);
                  });
}

}  // namespace gust
