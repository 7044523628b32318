#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gust/adam.hpp"
#include "gust/autodiff.hpp"
#include "gust/encoder.hpp"
#include "gust/errors.hpp"
#include "gust/graph.hpp"
#include "gust/matrix.hpp"

namespace gust {

enum class Method { gust, gcn_supervised, self_training };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::gust: return "gust";
    case Method::gcn_supervised: return "gcn_supervised";
    case Method::self_training: return "self_training";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  if (s == "gust") return Method::gust;
  if (s == "gcn_supervised") return Method::gcn_supervised;
  if (s == "self_training") return Method::self_training;
  throw std::invalid_argument("unknown method '" + std::string(s) +
                              "' (expected gust, gcn_supervised or self_training)");
}

struct Ablations {
  /// z = mu, and mean variance reported as 0 (so alpha = 1/2).
  bool deterministic_encoder = false;
  /// One EM iteration carrying the full gradient-step budget.
  bool single_step = false;
  /// lambda forced to 0.
  bool no_graph_reg = false;

  friend bool operator==(const Ablations&, const Ablations&) = default;
};

/// Default grid for gamma and lambda tuning.
inline constexpr std::array<double, 5> kHyperGrid = {0.1, 0.5, 1.0, 2.0, 5.0};

struct TrainConfig {
  double gamma = 1.0;
  double lambda = 5.0;
  int T = 10;
  int m_epochs = 50;
  double lr = 0.001;
  std::size_t latent_dim = 16;
  std::size_t hidden_dim = 16;
  std::uint64_t seed = 0;
  Method method = Method::gust;
  Ablations ablations;
  /// self_training only: minimum max-probability for a hard pseudo-label.
  double confidence_threshold = 0.9;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
    if (T < 1) throw std::invalid_argument("T must be >= 1");
    if (m_epochs < 0) throw std::invalid_argument("m_epochs must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (latent_dim == 0 || hidden_dim == 0) throw std::invalid_argument("dimensions must be > 0");
  }

  /// Resolves ablation flags and method semantics into concrete settings.
  TrainConfig effective() const {
    TrainConfig c = *this;
    if (c.method != Method::gust) {
      c.ablations = {};
      c.ablations.deterministic_encoder = true;
      c.lambda = 0.0;
    }
    if (c.ablations.single_step) {
      c.m_epochs *= c.T;
      c.T = 1;
    }
    if (c.ablations.no_graph_reg) c.lambda = 0.0;
    return c;
  }
};

/// E-step output: soft targets for every node.
struct PseudoLabelTable {
  Matrix y_hat;
  /// Mixing weight used for each node; 1 for labeled nodes.
  std::vector<double> alpha;
  /// Nodes whose row enters the pseudo-label loss term.
  IndexSet targets;
};

struct LossBreakdown {
  double total = 0.0;
  double labeled = 0.0;
  double pseudo = 0.0;
  /// Edge-normalized smoothness penalty, before the lambda weight.
  double omega = 0.0;
  /// lambda * omega; exactly 0 when lambda is 0.
  double smoothness_term = 0.0;
};

struct EmRecord {
  int iteration = 0;
  LossBreakdown losses;
  std::optional<double> mean_alpha;
  std::optional<double> val_acc;
  std::optional<double> test_acc;
};

struct EmHistory {
  std::vector<EmRecord> records;
  /// Iteration with the highest validation accuracy (reporting only).
  std::optional<int> best_val_iteration;
};

struct TrainResult {
  EncoderParams params;
  EmHistory history;
  std::vector<std::string> warnings;
};

inline Matrix one_hot_labels(const Graph& g) {
  Matrix out(g.n, g.num_classes);
  for (std::size_t i = 0; i < g.n; ++i) {
    if (g.labels[i]) out(i, *g.labels[i]) = 1.0;
  }
  return out;
}

/// alpha_i = 1 / (1 + exp(gamma * sigma_bar_i)), evaluated without overflow.
inline std::vector<double> compute_alpha(std::span<const double> sigma_bar, double gamma) {
  std::vector<double> alpha(sigma_bar.size());
  for (std::size_t i = 0; i < sigma_bar.size(); ++i) {
    const double x = gamma * sigma_bar[i];
    if (x > 0.0) {
      const double e = std::exp(-x);
      alpha[i] = e / (1.0 + e);
    } else {
      alpha[i] = 1.0 / (1.0 + std::exp(x));
    }
  }
  return alpha;
}

/// Unlabeled rows: alpha * p + (1 - alpha) * uniform. Train rows: one-hot.
inline PseudoLabelTable e_step(const Matrix& p, std::span<const double> alpha,
                               std::span<const std::optional<std::size_t>> labels,
                               const IndexSet& train_mask) {
  if (alpha.size() != p.rows() || labels.size() != p.rows()) {
    throw DimensionError("e_step: " + std::to_string(p.rows()) + " prediction rows, " +
                         std::to_string(alpha.size()) + " alphas, " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = p.cols();
  const double uniform = 1.0 / static_cast<double>(k);
  PseudoLabelTable table{Matrix(p.rows(), k), std::vector<double>(alpha.begin(), alpha.end()), {}};
  std::vector<char> is_train(p.rows(), 0);
  for (std::size_t i : train_mask) is_train.at(i) = 1;

  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto out = table.y_hat.row(i);
    if (is_train[i]) {
      if (!labels[i]) throw std::invalid_argument("e_step: train node without label");
      out[*labels[i]] = 1.0;
      table.alpha[i] = 1.0;
      continue;
    }
    const double a = alpha[i];
    auto in = p.row(i);
    for (std::size_t c = 0; c < k; ++c) out[c] = a * in[c] + (1.0 - a) * uniform;
    table.targets.push_back(i);
  }
  return table;
}

/// Self-training baseline E-step: hard argmax labels for unlabeled nodes whose
/// top probability reaches `threshold`; other unlabeled nodes are left out.
inline PseudoLabelTable hard_pseudo_labels(const Matrix& p,
                                           std::span<const std::optional<std::size_t>> labels,
                                           const IndexSet& train_mask, double threshold) {
  PseudoLabelTable table{Matrix(p.rows(), p.cols()), std::vector<double>(p.rows(), 1.0), {}};
  std::vector<char> is_train(p.rows(), 0);
  for (std::size_t i : train_mask) is_train.at(i) = 1;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    if (is_train[i]) {
      table.y_hat(i, *labels[i]) = 1.0;
      continue;
    }
    const std::size_t best = argmax_row(p.row(i));
    if (p(i, best) >= threshold) {
      table.y_hat(i, best) = 1.0;
      table.targets.push_back(i);
    }
  }
  return table;
}

struct LossVars {
  Var total;
  LossBreakdown values;
};

/// CE(p, one-hot; train) + CE(p, y_hat; targets) + lambda * Omega(p) / |E|.
/// y_hat is a constant. `omega_grad_scale` is a fault-injection hook.
inline LossVars m_step_loss(Tape& t, Var p, const PseudoLabelTable& pseudo,
                            const Matrix& one_hot, const IndexSet& train_mask,
                            const std::vector<Edge>& edges, double lambda,
                            double omega_grad_scale = 1.0) {
  LossVars out;
  Var labeled = cross_entropy_rows(t, p, one_hot, train_mask);
  Var pseudo_term = cross_entropy_rows(t, p, pseudo.y_hat, pseudo.targets);
  out.values.labeled = t.scalar(labeled);
  out.values.pseudo = t.scalar(pseudo_term);
  out.total = add(t, labeled, pseudo_term);

  const double edge_norm = edges.empty() ? 1.0 : static_cast<double>(edges.size());
  out.values.omega = smoothness_penalty(t.value(p), edges) / edge_norm;
  if (lambda != 0.0) {
    Var omega = smoothness_penalty(t, p, edges, omega_grad_scale);
    Var weighted = scale(t, omega, lambda / edge_norm);
    out.values.smoothness_term = t.scalar(weighted);
    out.total = add(t, out.total, weighted);
  }
  out.values.total = t.scalar(out.total);
  return out;
}

inline LossBreakdown m_step_loss(const Matrix& p, const PseudoLabelTable& pseudo,
                                 const Matrix& one_hot, const IndexSet& train_mask,
                                 const std::vector<Edge>& edges, double lambda) {
  Tape t;
  return m_step_loss(t, t.constant(p), pseudo, one_hot, train_mask, edges, lambda).values;
}

/// Per-graph constants shared by every forward pass.
class GraphContext {
 public:
  explicit GraphContext(const Graph& g)
      : graph_(&g),
        adj_(build_normalized_adjacency(g)),
        propagated_(spmm(adj_, g.features)),
        one_hot_(one_hot_labels(g)) {}

  const Graph& graph() const { return *graph_; }
  const SparseAdjacency& adjacency() const { return adj_; }
  const Matrix& propagated_features() const { return propagated_; }
  const Matrix& one_hot() const { return one_hot_; }

 private:
  const Graph* graph_;
  SparseAdjacency adj_;
  Matrix propagated_;
  Matrix one_hot_;
};

struct ForwardVars {
  Var mu;
  Var log_var;
  Var z;
  Var probs;
};

/// encode -> sample (with the given noise, or z = mu when noise is null) -> predict.
inline ForwardVars forward(Tape& t, const GraphContext& ctx, EncoderParams& params,
                           const Matrix* noise) {
  Var ax = t.constant(ctx.propagated_features());
  EncoderVars enc = encode(t, ctx.adjacency(), ax, params);
  Var z = noise != nullptr ? reparameterize(t, enc.mu, enc.log_var, *noise) : enc.mu;
  return {enc.mu, enc.log_var, z, predict(t, z, params)};
}

/// Argmax of predict(mu) against labels; ties go to the lowest class.
inline double evaluate(const EncoderParams& params, const GraphContext& ctx, const IndexSet& mask) {
  if (mask.empty()) throw std::invalid_argument("evaluate: empty mask");
  const Graph& g = ctx.graph();
  const LatentDistribution dist = encode(ctx.adjacency(), g.features, params);
  const Matrix p = predict(dist.mu, params);
  std::size_t correct = 0;
  for (std::size_t i : mask) {
    if (!g.labels.at(i)) throw std::invalid_argument("evaluate: node " + std::to_string(i) + " has no label");
    if (argmax_row(p.row(i)) == *g.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

inline double evaluate(const EncoderParams& params, const Graph& g, const IndexSet& mask) {
  return evaluate(params, GraphContext(g), mask);
}

namespace detail {

inline std::string numeric_diagnostics(const PseudoLabelTable& pseudo, const Matrix& log_var) {
  std::ostringstream os;
  double amin = std::numeric_limits<double>::infinity(), amax = -amin, asum = 0.0;
  for (std::size_t i : pseudo.targets) {
    amin = std::min(amin, pseudo.alpha[i]);
    amax = std::max(amax, pseudo.alpha[i]);
    asum += pseudo.alpha[i];
  }
  double lmin = std::numeric_limits<double>::infinity(), lmax = -lmin;
  for (double v : log_var.values()) {
    lmin = std::min(lmin, v);
    lmax = std::max(lmax, v);
  }
  os << "alpha[min=" << amin << " mean="
     << (pseudo.targets.empty() ? 0.0 : asum / static_cast<double>(pseudo.targets.size()))
     << " max=" << amax << "] log_var[min=" << lmin << " max=" << lmax << "]";
  return os.str();
}

}  // namespace detail

struct MStepOptions {
  int epochs = 50;
  double lambda = 0.0;
  bool deterministic = false;
  double omega_grad_scale = 1.0;
};

/// Runs `epochs` rounds of forward -> m_step_loss -> backward -> Adam.
/// Returns the loss breakdown of the last epoch (zeros when epochs is 0).
inline LossBreakdown m_step(EncoderParams& params, AdamState& adam, const GraphContext& ctx,
                            const PseudoLabelTable& pseudo, const MStepOptions& opts, Rng& rng) {
  LossBreakdown last;
  auto plist = params.list();
  const Graph& g = ctx.graph();
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    zero_grads(plist);
    Tape t;
    std::optional<Matrix> noise;
    if (!opts.deterministic) noise = standard_normal(g.n, params.mu.value.cols(), rng);
    ForwardVars fw = forward(t, ctx, params, noise ? &*noise : nullptr);
    LossVars loss = m_step_loss(t, fw.probs, pseudo, ctx.one_hot(), g.train_mask, g.edges,
                                opts.lambda, opts.omega_grad_scale);
    if (!std::isfinite(loss.values.total)) {
      throw NumericError("m_step: non-finite loss at epoch " + std::to_string(epoch) + "; " +
                         detail::numeric_diagnostics(pseudo, t.value(fw.log_var)));
    }
    t.backward(loss.total);
    adam_step(plist, adam);
    last = loss.values;
  }
  return last;
}

namespace detail {

inline std::optional<double> try_evaluate(const EncoderParams& params, const GraphContext& ctx,
                                          const IndexSet& mask) {
  if (mask.empty()) return std::nullopt;
  return evaluate(params, ctx, mask);
}

}  // namespace detail

/// Full training run for any method. Deterministic given config.seed.
inline TrainResult train(const Graph& g, const TrainConfig& requested) {
  requested.validate();
  g.validate();
  const TrainConfig cfg = requested.effective();
  const GraphContext ctx(g);

  TrainResult result;
  Rng rng(cfg.seed);
  EncoderShape shape{g.feature_dim(), cfg.hidden_dim, cfg.latent_dim, g.num_classes};
  result.params = EncoderParams::glorot(shape, rng);

  std::vector<std::size_t> per_class(g.num_classes, 0);
  for (std::size_t i : g.train_mask) ++per_class[*g.labels[i]];
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] == 0) {
      result.warnings.push_back("class " + std::to_string(c) + " has no labeled training node");
    }
  }

  const bool deterministic = cfg.ablations.deterministic_encoder;
  AdamState adam(result.params.list(), AdamOptions{cfg.lr});
  MStepOptions mopts{cfg.m_epochs, cfg.lambda, deterministic, 1.0};
  double best_val = -1.0;

  for (int t = 1; t <= cfg.T; ++t) {
    PseudoLabelTable pseudo;
    std::optional<double> mean_alpha;

    if (cfg.method == Method::gcn_supervised) {
      // Labeled loss only: an E-step that assigns no pseudo targets.
      pseudo.y_hat = Matrix(g.n, g.num_classes);
      pseudo.alpha.assign(g.n, 1.0);
    } else {
      const LatentDistribution dist = encode(ctx.adjacency(), g.features, result.params);
      Matrix p;
      std::vector<double> sigma_bar;
      if (deterministic) {
        p = predict(dist.mu, result.params);
        sigma_bar.assign(g.n, 0.0);
      } else {
        p = predict(sample_latent(dist, rng).z, result.params);
        sigma_bar = mean_uncertainty(dist);
      }
      if (cfg.method == Method::self_training) {
        pseudo = hard_pseudo_labels(p, g.labels, g.train_mask, cfg.confidence_threshold);
        mean_alpha = 1.0;
      } else {
        pseudo = e_step(p, compute_alpha(sigma_bar, cfg.gamma), g.labels, g.train_mask);
        if (!pseudo.targets.empty()) {
          double acc = 0.0;
          for (std::size_t i : pseudo.targets) acc += pseudo.alpha[i];
          mean_alpha = acc / static_cast<double>(pseudo.targets.size());
        }
      }
    }

    EmRecord rec;
    rec.iteration = t;
    rec.losses = m_step(result.params, adam, ctx, pseudo, mopts, rng);
    rec.mean_alpha = mean_alpha;
    rec.val_acc = detail::try_evaluate(result.params, ctx, g.val_mask);
    rec.test_acc = detail::try_evaluate(result.params, ctx, g.test_mask);
    if (rec.val_acc && *rec.val_acc > best_val) {
      best_val = *rec.val_acc;
      result.history.best_val_iteration = t;
    }
    result.history.records.push_back(rec);
  }
  return result;
}

/// Algorithm entry point: train() with the GUST method.
inline TrainResult run_gust(const Graph& g, TrainConfig config) {
  config.method = Method::gust;
  return train(g, config);
}

struct GridSearchResult {
  double gamma = 0.0;
  double lambda = 0.0;
  double mean_val_acc = 0.0;
};

/// Picks (gamma, lambda) maximizing mean final validation accuracy over
/// `seeds`; `graph_for_seed` supplies the graph for each seed. Ties keep the
/// earliest grid point.
inline GridSearchResult grid_search(const std::function<Graph(std::uint64_t)>& graph_for_seed,
                                    const TrainConfig& base, std::span<const std::uint64_t> seeds,
                                    std::span<const double> gammas = kHyperGrid,
                                    std::span<const double> lambdas = kHyperGrid) {
  if (seeds.empty()) throw std::invalid_argument("grid_search: no seeds");
  std::vector<Graph> graphs;
  for (std::uint64_t seed : seeds) {
    graphs.push_back(graph_for_seed(seed));
    if (graphs.back().val_mask.empty()) throw std::invalid_argument("grid_search: empty validation mask");
  }
  GridSearchResult best{base.gamma, base.lambda, -1.0};
  for (double gamma : gammas) {
    for (double lambda : lambdas) {
      double total = 0.0;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        TrainConfig c = base;
        c.gamma = gamma;
        c.lambda = lambda;
        c.seed = seeds[s];
        total += train(graphs[s], c).history.records.back().val_acc.value_or(0.0);
      }
      const double mean = total / static_cast<double>(seeds.size());
      if (mean > best.mean_val_acc) best = {gamma, lambda, mean};
    }
  }
  return best;
}

}  // namespace gust
