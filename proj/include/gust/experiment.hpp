#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gust/checkpoint.hpp"
#include "gust/config_io.hpp"
#include "gust/dataset.hpp"
#include "gust/gradcheck.hpp"
#include "gust/metrics.hpp"
#include "gust/trainer.hpp"

namespace gust {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitRuntime = 2,
  kExitGradcheckFail = 3,
};

/// A dataset directory, or an SBM preset regenerated per seed.
struct DataSource {
  std::optional<std::filesystem::path> dataset_dir;
  std::string sbm_preset = "easy";

  std::string label() const {
    return dataset_dir ? dataset_dir->filename().string() : "sbm-" + sbm_preset;
  }
};

struct RunSpec {
  DataSource data;
  TrainConfig config;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path out = "runs";
  /// Select gamma and lambda on validation accuracy before training.
  bool tune = false;

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("run spec: at least one seed is required");
    config.validate();
  }
};

/// File datasets keep their split fixed across seeds (only initialization and
/// sampling vary); SBM graphs are regenerated from each seed.
class DataProvider {
 public:
  explicit DataProvider(DataSource src) : src_(std::move(src)) {
    if (src_.dataset_dir) {
      file_ = load_dataset(*src_.dataset_dir);
    } else {
      sbm_ = sbm_preset(src_.sbm_preset);
    }
  }

  DatasetBundle bundle(std::uint64_t seed) const {
    if (file_) return *file_;
    DatasetBundle b = generate_sbm(sbm_, seed);
    b.name = src_.label();
    return b;
  }

  std::string label() const { return file_ ? file_->name : src_.label(); }

 private:
  DataSource src_;
  std::optional<DatasetBundle> file_;
  SbmParams sbm_;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

/// Mean and sample standard deviation (0 for a single value).
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  r.count = xs.size();
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

inline std::string ablation_tag(const TrainConfig& c) {
  std::string tag(to_string(c.method));
  if (c.ablations.deterministic_encoder) tag += "-deterministic_encoder";
  if (c.ablations.single_step) tag += "-single_step";
  if (c.ablations.no_graph_reg) tag += "-no_graph_reg";
  return tag;
}

struct RunOutcome {
  std::string run_id;
  std::uint64_t seed = 0;
  TrainConfig config;
  TrainResult result;

  double test_acc() const { return result.history.records.back().test_acc.value_or(0.0); }
};

/// Trains one configuration on one seed and appends its metrics.
inline RunOutcome execute_run(const Graph& g, const std::string& dataset, TrainConfig config,
                              std::uint64_t seed, const std::string& run_id,
                              const std::filesystem::path& metrics_path, std::ostream& err) {
  config.seed = seed;
  RunOutcome o{run_id, seed, config, train(g, config)};
  for (const auto& w : o.result.warnings) err << "warning: " << run_id << ": " << w << '\n';
  write_metrics(o.result.history, RunMetadata{run_id, seed, dataset, config}, metrics_path);
  return o;
}

namespace detail {

inline std::filesystem::path fresh_file(const std::filesystem::path& dir, const char* name) {
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::filesystem::remove(path);
  return path;
}

inline std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace detail

/// Applies validation-grid tuning when requested; returns the config to use.
inline TrainConfig resolve_config(const RunSpec& spec, const DataProvider& data, std::ostream& out) {
  TrainConfig c = spec.config;
  if (!spec.tune || c.method != Method::gust) return c;
  const GridSearchResult best =
      grid_search([&](std::uint64_t s) { return data.bundle(s).graph; }, c, spec.seeds);
  out << "tuned: gamma=" << best.gamma << " lambda=" << best.lambda
      << " (mean val acc " << detail::percent(best.mean_val_acc) << "%)\n";
  c.gamma = best.gamma;
  c.lambda = best.lambda;
  return c;
}

/// One run per seed. Writes metrics.jsonl, summary.json and one checkpoint per
/// seed under spec.out; prints mean +/- std test accuracy.
inline MeanStd cmd_train(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  spec.validate();
  const DataProvider data(spec.data);
  const TrainConfig config = resolve_config(spec, data, out);
  const auto metrics = detail::fresh_file(spec.out, "metrics.jsonl");

  std::vector<double> accs;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (std::uint64_t seed : spec.seeds) {
    const DatasetBundle b = data.bundle(seed);
    const std::string run_id = ablation_tag(config) + "-seed" + std::to_string(seed);
    RunOutcome o = execute_run(b.graph, data.label(), config, seed, run_id, metrics, err);
    save_checkpoint(o.result.params, o.config, spec.out / "checkpoints" / run_id);
    accs.push_back(o.test_acc());
    runs.push_back({{"run_id", run_id}, {"seed", seed}, {"test_acc", o.test_acc()}});
  }
  const MeanStd s = mean_std(accs);
  nlohmann::ordered_json summary;
  summary["dataset"] = data.label();
  summary["method"] = std::string(to_string(config.method));
  summary["config"] = to_json(config);
  summary["runs"] = runs;
  summary["test_acc_mean"] = s.mean;
  summary["test_acc_std"] = s.std;
  detail::write_json(spec.out / "summary.json", summary);
  out << to_string(config.method) << " on " << data.label() << ": test accuracy "
      << detail::percent(s.mean) << " +/- " << detail::percent(s.std) << " % over " << s.count
      << " seed(s)\n";
  return s;
}

struct SweepRow {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  Method method = Method::gust;
  std::optional<double> test_acc;
};

/// For each fraction x seed x method, trains on a per-class subsample of the
/// train mask and writes sweep.csv (`fraction,seed,method,test_acc`). Rows for
/// fractions that would leave a class without labels carry `nan`.
inline std::vector<SweepRow> cmd_sweep(const RunSpec& spec, const std::vector<double>& fractions,
                                       const std::vector<Method>& methods, std::ostream& out,
                                       std::ostream& err) {
  spec.validate();
  if (fractions.empty()) throw std::invalid_argument("sweep: no fractions given");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("sweep: fractions must lie in (0, 1]");
  }
  if (methods.empty()) throw std::invalid_argument("sweep: no methods given");
  const DataProvider data(spec.data);
  const auto metrics = detail::fresh_file(spec.out, "metrics.jsonl");

  std::vector<SweepRow> rows;
  std::ofstream csv(detail::fresh_file(spec.out, "sweep.csv"));
  csv << "fraction,seed,method,test_acc\n";
  for (double f : fractions) {
    for (std::uint64_t seed : spec.seeds) {
      DatasetBundle b = data.bundle(seed);
      const auto mask = subsample_train_mask(b.graph, f, seed);
      if (mask) b.graph.train_mask = *mask;
      for (Method m : methods) {
        SweepRow row{f, seed, m, std::nullopt};
        if (!mask) {
          err << "warning: fraction " << f << " leaves a class without labels (seed " << seed
              << "); skipped\n";
        } else {
          TrainConfig c = spec.config;
          c.method = m;
          std::ostringstream id;
          id << ablation_tag(c) << "-f" << f << "-seed" << seed;
          row.test_acc = execute_run(b.graph, data.label(), c, seed, id.str(), metrics, err).test_acc();
        }
        csv << f << ',' << seed << ',' << to_string(m) << ',';
        if (row.test_acc) {
          csv << std::setprecision(17) << *row.test_acc << std::setprecision(6);
        } else {
          csv << "nan";
        }
        csv << '\n';
        rows.push_back(row);
      }
    }
  }
  if (!csv) throw std::runtime_error((spec.out / "sweep.csv").string() + ": write failed");

  for (Method m : methods) {
    for (double f : fractions) {
      std::vector<double> accs;
      for (const auto& r : rows) {
        if (r.method == m && r.fraction == f && r.test_acc) accs.push_back(*r.test_acc);
      }
      const MeanStd s = mean_std(accs);
      out << to_string(m) << " fraction " << f << ": " << detail::percent(s.mean) << " +/- "
          << detail::percent(s.std) << " % (" << s.count << " run(s))\n";
    }
  }
  return rows;
}

struct AblationEntry {
  std::string variant;
  MeanStd accuracy;
  /// Full GUST minus this variant, per seed.
  MeanStd delta;
};

/// Full GUST against each single-flag ablation over the seed list. Writes
/// metrics.jsonl and ablation.json.
inline std::vector<AblationEntry> cmd_ablate(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  spec.validate();
  const DataProvider data(spec.data);
  const auto metrics = detail::fresh_file(spec.out, "metrics.jsonl");

  TrainConfig full = spec.config;
  full.method = Method::gust;
  full.ablations = {};
  std::vector<TrainConfig> variants{full};
  for (int k = 0; k < 3; ++k) {
    TrainConfig c = full;
    if (k == 0) c.ablations.deterministic_encoder = true;
    if (k == 1) c.ablations.single_step = true;
    if (k == 2) c.ablations.no_graph_reg = true;
    variants.push_back(c);
  }

  std::vector<std::vector<double>> accs(variants.size());
  for (std::uint64_t seed : spec.seeds) {
    const DatasetBundle b = data.bundle(seed);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const std::string run_id = ablation_tag(variants[v]) + "-seed" + std::to_string(seed);
      accs[v].push_back(execute_run(b.graph, data.label(), variants[v], seed, run_id, metrics, err).test_acc());
    }
  }

  std::vector<AblationEntry> report;
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<double> deltas;
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) deltas.push_back(accs[0][s] - accs[v][s]);
    AblationEntry e{v == 0 ? "full" : ablation_tag(variants[v]).substr(5), mean_std(accs[v]), mean_std(deltas)};
    j.push_back({{"variant", e.variant},
                 {"test_acc_mean", e.accuracy.mean},
                 {"test_acc_std", e.accuracy.std},
                 {"delta_mean", e.delta.mean},
                 {"delta_std", e.delta.std}});
    out << std::left << std::setw(22) << e.variant << " acc " << detail::percent(e.accuracy.mean)
        << " +/- " << detail::percent(e.accuracy.std) << " %";
    if (v > 0) {
      out << "   full - variant = " << std::showpos << detail::percent(e.delta.mean) << std::noshowpos
          << " +/- " << detail::percent(e.delta.std) << " points";
    }
    out << '\n';
    report.push_back(e);
  }
  detail::write_json(spec.out / "ablation.json", j);
  return report;
}

struct GradcheckOptions {
  double lambda = 0.5;
  double gamma = 1.0;
  double h = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  /// Fault injection: multiplies the smoothness backward pass.
  double omega_grad_scale = 1.0;
};

struct GradcheckResult {
  GradCheckReport report;
  bool passed = false;
  double seconds = 0.0;
};

/// Central-difference check of every parameter gradient of the total M-step
/// loss on a 12-node, 3-class SBM graph, with the sampling path active and its
/// noise held fixed.
inline GradcheckResult cmd_gradcheck(const GradcheckOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const DatasetBundle b = generate_sbm(sbm_preset("tiny"), opts.seed);
  const Graph& g = b.graph;
  const GraphContext ctx(g);

  TrainConfig cfg;
  cfg.gamma = opts.gamma;
  cfg.lambda = opts.lambda;
  Rng rng(opts.seed);
  EncoderParams params = EncoderParams::glorot({g.feature_dim(), cfg.hidden_dim, cfg.latent_dim, g.num_classes}, rng);

  const LatentDistribution dist = encode(ctx.adjacency(), g.features, params);
  const Matrix p = predict(sample_latent(dist, rng).z, params);
  const PseudoLabelTable pseudo = e_step(p, compute_alpha(mean_uncertainty(dist), cfg.gamma), g.labels, g.train_mask);
  const Matrix noise = standard_normal(g.n, cfg.latent_dim, rng);

  auto plist = params.list();
  zero_grads(plist);
  {
    Tape t;
    ForwardVars fw = forward(t, ctx, params, &noise);
    LossVars loss = m_step_loss(t, fw.probs, pseudo, ctx.one_hot(), g.train_mask, g.edges, cfg.lambda,
                                opts.omega_grad_scale);
    t.backward(loss.total);
  }
  auto loss_fn = [&] {
    Tape t;
    ForwardVars fw = forward(t, ctx, params, &noise);
    return m_step_loss(t, fw.probs, pseudo, ctx.one_hot(), g.train_mask, g.edges, cfg.lambda).values.total;
  };

  GradcheckResult r;
  r.report = finite_diff_check(loss_fn, plist, opts.h);
  r.passed = r.report.max_relative_error <= opts.tolerance;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace gust
