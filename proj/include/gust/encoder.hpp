#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "gust/autodiff.hpp"
#include "gust/graph.hpp"
#include "gust/matrix.hpp"

namespace gust {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

using Rng = std::mt19937_64;

struct EncoderShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 16;
  std::size_t latent_dim = 16;
  std::size_t num_classes = 0;
};

/// Weights of the variational graph encoder and its classifier head.
struct EncoderParams {
  Parameter hidden;      // d x h
  Parameter mu;          // h x d_z
  Parameter log_var;     // h x d_z
  Parameter classifier;  // d_z x K

  static EncoderParams zeros(const EncoderShape& s) {
    return {Parameter("W_hidden", Matrix(s.input_dim, s.hidden_dim)),
            Parameter("W_mu", Matrix(s.hidden_dim, s.latent_dim)),
            Parameter("W_sigma", Matrix(s.hidden_dim, s.latent_dim)),
            Parameter("W_cls", Matrix(s.latent_dim, s.num_classes))};
  }

  /// Glorot-uniform initialization, drawn in member order.
  static EncoderParams glorot(const EncoderShape& s, Rng& rng) {
    EncoderParams p = zeros(s);
    for (Parameter* param : p.list()) {
      Matrix& w = param->value;
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : w.values()) v = dist(rng);
    }
    return p;
  }

  EncoderShape shape() const {
    return {hidden.value.rows(), hidden.value.cols(), mu.value.cols(), classifier.value.cols()};
  }

  std::array<Parameter*, 4> list() { return {&hidden, &mu, &log_var, &classifier}; }
  std::array<const Parameter*, 4> list() const { return {&hidden, &mu, &log_var, &classifier}; }
};

/// Per-node diagonal Gaussian over the latent embedding.
struct LatentDistribution {
  Matrix mu;
  Matrix log_var;
};

struct LatentSample {
  Matrix z;
  /// Standard-normal draws; z = mu + exp(log_var / 2) * noise.
  Matrix noise;
};

struct EncoderVars {
  Var mu;
  Var log_var;
};

/// H = ReLU(A X W_hidden); mu = A H W_mu; log_var = clamp(A H W_sigma).
/// `propagated_features` is the constant A X, computed once per graph.
inline EncoderVars encode(Tape& t, const SparseAdjacency& adj, Var propagated_features,
                          EncoderParams& params) {
  const std::size_t n = t.value(propagated_features).rows();
  if (adj.n != n) {
    throw DimensionError("encode: adjacency has " + std::to_string(adj.n) +
                         " nodes, features have " + std::to_string(n) + " rows");
  }
  Var w_hidden = t.parameter(params.hidden);
  Var w_mu = t.parameter(params.mu);
  Var w_sigma = t.parameter(params.log_var);

  Var h = relu(t, matmul(t, propagated_features, w_hidden));
  Var ah = spmm(t, adj, h);
  Var mu = matmul(t, ah, w_mu);
  Var log_var = clamp(t, matmul(t, ah, w_sigma), kLogVarMin, kLogVarMax);
  return {mu, log_var};
}

inline LatentDistribution encode(const SparseAdjacency& adj, const Matrix& features,
                                 const EncoderParams& params) {
  // The tape only reads parameters; the copy keeps the signature const.
  EncoderParams local = params;
  Tape t;
  Var ax = t.constant(spmm(adj, features));
  EncoderVars out = encode(t, adj, ax, local);
  return {t.value(out.mu), t.value(out.log_var)};
}

inline Matrix standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

inline LatentSample sample_latent(const LatentDistribution& dist, Rng& rng) {
  Matrix::require_same_shape(dist.mu, dist.log_var, "sample_latent");
  LatentSample s{dist.mu, standard_normal(dist.mu.rows(), dist.mu.cols(), rng)};
  auto z = s.z.values();
  auto lv = dist.log_var.values();
  auto eps = s.noise.values();
  for (std::size_t k = 0; k < z.size(); ++k) z[k] += std::exp(0.5 * lv[k]) * eps[k];
  return s;
}

/// z = mu + exp(log_var / 2) * noise, with gradient flowing to mu and log_var.
inline Var reparameterize(Tape& t, Var mu, Var log_var, const Matrix& noise) {
  Var sigma = exp(t, scale(t, log_var, 0.5));
  return add(t, mu, mul(t, sigma, t.constant(noise)));
}

/// Per-node mean of exp(log_var) across latent dimensions.
inline std::vector<double> mean_uncertainty(const LatentDistribution& dist) {
  const Matrix& lv = dist.log_var;
  std::vector<double> out(lv.rows(), 0.0);
  if (lv.cols() == 0) return out;
  for (std::size_t i = 0; i < lv.rows(); ++i) {
    double acc = 0.0;
    for (double v : lv.row(i)) acc += std::exp(v);
    out[i] = acc / static_cast<double>(lv.cols());
  }
  return out;
}

/// softmax(z W_cls).
inline Var predict(Tape& t, Var z, EncoderParams& params) {
  return softmax_rows(t, matmul(t, z, t.parameter(params.classifier)));
}

inline Matrix predict(const Matrix& z, const EncoderParams& params) {
  return softmax_rows(matmul(z, params.classifier.value));
}

}  // namespace gust
