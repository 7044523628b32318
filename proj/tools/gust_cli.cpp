// Command-line front end: train, sweep, ablate, gradcheck.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "gust/experiment.hpp"

namespace {

struct SharedFlags {
  std::optional<std::string> dataset;
  std::optional<std::string> sbm;
  std::optional<std::string> method;
  std::optional<int> seeds;
  std::optional<double> gamma;
  std::optional<double> lambda;
  std::optional<int> T;
  std::optional<int> m_epochs;
  std::optional<double> lr;
  std::optional<std::size_t> hidden_dim;
  std::optional<std::size_t> latent_dim;
  std::optional<std::string> out;
  std::optional<std::string> config;
  bool tune = false;
  bool deterministic_encoder = false;
  bool single_step = false;
  bool no_graph_reg = false;
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
  auto* ds = cmd->add_option("--dataset", f.dataset, "Dataset directory (nodes/edges/labels[/splits].tsv)");
  auto* sbm = cmd->add_option("--sbm", f.sbm, "SBM preset: easy, hard, tiny");
  ds->excludes(sbm);
  cmd->add_option("--method", f.method, "gust, gcn_supervised or self_training");
  cmd->add_option("--seeds", f.seeds, "Number of seeds (0..N-1)")->check(CLI::PositiveNumber);
  cmd->add_option("--gamma", f.gamma, "Uncertainty weight in the smoothing gate");
  cmd->add_option("--lambda", f.lambda, "Graph smoothness weight");
  cmd->add_option("--T", f.T, "EM iterations");
  cmd->add_option("--m-epochs", f.m_epochs, "Gradient steps per M-step");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--hidden-dim", f.hidden_dim, "Hidden layer width");
  cmd->add_option("--latent-dim", f.latent_dim, "Latent embedding dimension");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--config", f.config, "JSON config file; flags override its values");
}

void add_ablation_flags(CLI::App* cmd, SharedFlags& f) {
  cmd->add_flag("--tune", f.tune, "Grid-search gamma and lambda on validation accuracy");
  cmd->add_flag("--deterministic-encoder", f.deterministic_encoder, "Ablation: z = mu");
  cmd->add_flag("--single-step", f.single_step, "Ablation: one EM iteration");
  cmd->add_flag("--no-graph-reg", f.no_graph_reg, "Ablation: lambda = 0");
}

std::vector<std::uint64_t> seed_range(int n) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < n; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

/// Defaults, then the config file, then explicit flags.
gust::RunSpec build_spec(const SharedFlags& f, nlohmann::json* file_out = nullptr) {
  gust::RunSpec spec;
  nlohmann::json file = nlohmann::json::object();
  if (f.config) {
    std::ifstream in(*f.config);
    if (!in) throw std::invalid_argument(*f.config + ": cannot open config file");
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(*f.config + ": " + e.what());
    }
    try {
      gust::apply_json(file, spec.config);
      if (file.contains("dataset")) spec.data.dataset_dir = file.at("dataset").get<std::string>();
      if (file.contains("sbm")) spec.data.sbm_preset = file.at("sbm").get<std::string>();
      if (file.contains("seeds")) spec.seeds = seed_range(file.at("seeds").get<int>());
      if (file.contains("out")) spec.out = file.at("out").get<std::string>();
      if (file.contains("tune")) spec.tune = file.at("tune").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(*f.config + ": " + e.what());
    }
  }
  if (f.dataset) spec.data.dataset_dir = *f.dataset;
  if (f.sbm) {
    spec.data.dataset_dir.reset();
    spec.data.sbm_preset = *f.sbm;
  }
  if (f.method) spec.config.method = gust::parse_method(*f.method);
  if (f.seeds) spec.seeds = seed_range(*f.seeds);
  if (f.gamma) spec.config.gamma = *f.gamma;
  if (f.lambda) spec.config.lambda = *f.lambda;
  if (f.T) spec.config.T = *f.T;
  if (f.m_epochs) spec.config.m_epochs = *f.m_epochs;
  if (f.lr) spec.config.lr = *f.lr;
  if (f.hidden_dim) spec.config.hidden_dim = *f.hidden_dim;
  if (f.latent_dim) spec.config.latent_dim = *f.latent_dim;
  if (f.out) spec.out = *f.out;
  if (f.tune) spec.tune = true;
  if (f.deterministic_encoder) spec.config.ablations.deterministic_encoder = true;
  if (f.single_step) spec.config.ablations.single_step = true;
  if (f.no_graph_reg) spec.config.ablations.no_graph_reg = true;
  if (file_out) *file_out = file;
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-gated self-training for semi-supervised node classification"};
  app.require_subcommand(1);

  SharedFlags train_f, sweep_f, ablate_f;
  auto* train = app.add_subcommand("train", "Train one method over a list of seeds");
  add_shared(train, train_f);
  add_ablation_flags(train, train_f);

  auto* sweep = app.add_subcommand("sweep", "Accuracy versus labeled fraction");
  add_shared(sweep, sweep_f);
  std::vector<double> fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::string> methods;
  sweep->add_option("--fractions", fractions, "Labeled fractions in (0, 1]")->delimiter(',');
  sweep->add_option("--methods", methods, "Methods to compare (default: --method, or gust and gcn_supervised)")
      ->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "Full GUST against each single-component ablation");
  add_shared(ablate, ablate_f);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the training loss gradient");
  std::string inject;
  gradcheck->add_option("--inject-fault", inject, "Negative control: corrupt a backward pass (omega)")
      ->check(CLI::IsMember({"omega"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? gust::kExitOk : gust::kExitUsage;
  }

  try {
    if (*train) {
      gust::cmd_train(build_spec(train_f), std::cout, std::cerr);
    } else if (*sweep) {
      nlohmann::json file;
      gust::RunSpec spec = build_spec(sweep_f, &file);
      if (file.contains("fractions") && sweep->count("--fractions") == 0) {
        fractions = file.at("fractions").get<std::vector<double>>();
      }
      if (methods.empty() && file.contains("methods")) methods = file.at("methods").get<std::vector<std::string>>();
      std::vector<gust::Method> ms;
      for (const auto& m : methods) ms.push_back(gust::parse_method(m));
      if (ms.empty() && sweep_f.method) ms.push_back(spec.config.method);
      if (ms.empty()) ms = {gust::Method::gust, gust::Method::gcn_supervised};
      gust::cmd_sweep(spec, fractions, ms, std::cout, std::cerr);
    } else if (*ablate) {
      gust::cmd_ablate(build_spec(ablate_f), std::cout, std::cerr);
    } else if (*gradcheck) {
      gust::GradcheckOptions opts;
      if (inject == "omega") opts.omega_grad_scale = 2.0;
      const gust::GradcheckResult r = gust::cmd_gradcheck(opts);
      std::cout << "gradcheck: max relative error " << r.report.max_relative_error << " over "
                << r.report.coordinates << " coordinates (worst: " << r.report.worst_parameter << "["
                << r.report.worst_index << "] analytic " << r.report.worst_analytic << " numeric "
                << r.report.worst_numeric << "), " << r.seconds << " s -> "
                << (r.passed ? "PASS" : "FAIL") << '\n';
      return r.passed ? gust::kExitOk : gust::kExitGradcheckFail;
    }
  } catch (const gust::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gust::kExitRuntime;
  } catch (const gust::LoadError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gust::kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gust::kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return gust::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gust::kExitRuntime;
  }
  return gust::kExitOk;
}
