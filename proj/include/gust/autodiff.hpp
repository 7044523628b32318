#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gust/errors.hpp"
#include "gust/matrix.hpp"

namespace gust {

/// A trainable matrix and its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

inline void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

/// Records a forward computation and replays it in reverse to produce
/// parameter gradients. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Var parameter(Parameter& p) {
    Node node;
    node.value = p.value;
    node.param = &p;
    node.requires_grad = true;
    return push(std::move(node));
  }

  Var constant(Matrix m) {
    Node node;
    node.value = std::move(m);
    return push(std::move(node));
  }

  /// Appends an op node. `backward` receives d(loss)/d(output) and must call
  /// accumulate() on each input that needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    for (Var in : inputs) node.requires_grad = node.requires_grad || requires_grad(in);
    if (node.requires_grad) node.backward = std::move(backward);
    return push(std::move(node));
  }

  const Matrix& value(Var v) const { return at(v).value; }
  double scalar(Var v) const {
    const Matrix& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) {
      throw DimensionError("Tape::scalar: node has shape " + m.shape());
    }
    return m(0, 0);
  }
  bool requires_grad(Var v) const { return at(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Matrix& g) {
    Node& node = at(v);
    if (!node.requires_grad) return;
    if (!node.grad) {
      node.grad = g;
    } else {
      *node.grad += g;
    }
  }

  /// Propagates d(loss)/d(node) back to every parameter leaf, adding into
  /// Parameter::grad. May be called once per recorded forward pass.
  void backward(Var loss) {
    if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
      throw StateError("backward: no forward pass recorded for this loss");
    }
    if (consumed_) throw StateError("backward: tape already replayed");
    const Matrix& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw DimensionError("backward: loss must be 1x1, got " + lv.shape());
    }
    consumed_ = true;
    nodes_[loss.id].grad = Matrix(1, 1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.grad || !node.requires_grad) continue;
      if (node.param != nullptr) {
        node.param->grad += *node.grad;
      } else if (node.backward) {
        // Copy: the callback may append to other nodes' grads.
        const Matrix g = *node.grad;
        node.backward(*this, g);
      }
    }
  }

 private:
  struct Node {
    Matrix value;
    std::optional<Matrix> grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node) {
    if (consumed_) throw StateError("Tape: cannot record after backward");
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  Node& at(Var v) {
    if (!v.valid() || v.id >= nodes_.size()) throw StateError("Tape: unknown node");
    return nodes_[v.id];
  }
  const Node& at(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw StateError("Tape: unknown node");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Differentiable ops. Each mirrors a plain Matrix function.

inline Var matmul(Tape& t, Var a, Var b) {
  return t.record(matmul(t.value(a), t.value(b)), {a, b},
                  [a, b](Tape& tp, const Matrix& g) {
                    if (tp.requires_grad(a)) tp.accumulate(a, matmul_nt(g, tp.value(b)));
                    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(tp.value(a), g));
                  });
}

inline Var add(Tape& t, Var a, Var b) {
  Matrix out = t.value(a);
  out += t.value(b);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

inline Var scale(Tape& t, Var a, double factor) {
  Matrix out = t.value(a);
  for (double& v : out.values()) v *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    for (double& v : ga.values()) v *= factor;
    tp.accumulate(a, ga);
  });
}

/// Elementwise product.
inline Var mul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  Matrix::require_same_shape(av, bv, "mul");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = av.values()[i] * bv.values()[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    const Matrix& y = tp.value(b);
    if (tp.requires_grad(a)) {
      Matrix ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < ga.size(); ++i) ga.values()[i] = g.values()[i] * y.values()[i];
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(b)) {
      Matrix gb(g.rows(), g.cols());
      for (std::size_t i = 0; i < gb.size(); ++i) gb.values()[i] = g.values()[i] * x.values()[i];
      tp.accumulate(b, gb);
    }
  });
}

inline Var relu(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& in = tp.value(a);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga.values()[i] = in.values()[i] > 0.0 ? g.values()[i] : 0.0;
    }
    tp.accumulate(a, ga);
  });
}

/// Elementwise clamp; gradient is zero where the input lies outside [lo, hi].
inline Var clamp(Tape& t, Var a, double lo, double hi) {
  Matrix out = t.value(a);
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return t.record(std::move(out), {a}, [a, lo, hi](Tape& tp, const Matrix& g) {
    const Matrix& in = tp.value(a);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double x = in.values()[i];
      ga.values()[i] = (x >= lo && x <= hi) ? g.values()[i] : 0.0;
    }
    tp.accumulate(a, ga);
  });
}

inline Var exp(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (double& v : out.values()) v = std::exp(v);
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& in = tp.value(a);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga.values()[i] = g.values()[i] * std::exp(in.values()[i]);
    }
    tp.accumulate(a, ga);
  });
}

/// Sum of all entries as a 1x1 node.
inline Var sum(Tape& t, Var a) {
  double total = 0.0;
  for (double v : t.value(a).values()) total += v;
  return t.record(Matrix(1, 1, total), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& in = tp.value(a);
    tp.accumulate(a, Matrix(in.rows(), in.cols(), g(0, 0)));
  });
}

inline Var softmax_rows(Tape& t, Var a) {
  Matrix out = softmax_rows(t.value(a));
  Var self{t.size()};
  return t.record(std::move(out), {a}, [a, self](Tape& tp, const Matrix& g) {
    const Matrix& p = tp.value(self);
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      auto pr = p.row(i);
      auto gr = g.row(i);
      double dot = 0.0;
      for (std::size_t k = 0; k < pr.size(); ++k) dot += pr[k] * gr[k];
      auto out_r = ga.row(i);
      for (std::size_t k = 0; k < pr.size(); ++k) out_r[k] = pr[k] * (gr[k] - dot);
    }
    tp.accumulate(a, ga);
  });
}

/// Differentiable cross_entropy_rows; the target is treated as a constant.
inline Var cross_entropy_rows(Tape& t, Var pred, const Matrix& target, IndexSet mask) {
  const CrossEntropy ce = cross_entropy_rows(t.value(pred), target, mask);
  return t.record(Matrix(1, 1, ce.value), {pred},
                  [pred, target, mask = std::move(mask)](Tape& tp, const Matrix& g) {
                    if (mask.empty()) return;
                    const Matrix& p = tp.value(pred);
                    Matrix gp(p.rows(), p.cols());
                    const double w = g(0, 0) / static_cast<double>(mask.size());
                    for (std::size_t i : mask) {
                      auto pr = p.row(i);
                      auto tr = target.row(i);
                      auto out = gp.row(i);
                      for (std::size_t k = 0; k < pr.size(); ++k) {
                        out[k] -= w * tr[k] / (pr[k] + kLogEpsilon);
                      }
                    }
                    tp.accumulate(pred, gp);
                  });
}

}  // namespace gust
