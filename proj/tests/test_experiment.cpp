#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gust/experiment.hpp"
#include "test_util.hpp"

namespace gust {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<nlohmann::json> jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<nlohmann::json> out;
  for (std::string l; std::getline(in, l);) out.push_back(nlohmann::json::parse(l));
  return out;
}

RunSpec quick_spec(const fs::path& out, Method m = Method::gust) {
  RunSpec s;
  s.out = out;
  s.seeds = {0, 1, 2};
  s.config.method = m;
  s.config.T = 4;
  s.config.m_epochs = 25;
  s.config.lr = 0.01;
  return s;
}

double majority_rate(const Graph& g) {
  std::vector<double> count(g.num_classes, 0.0);
  for (std::size_t i : g.test_mask) count[*g.labels[i]] += 1.0;
  return *std::max_element(count.begin(), count.end()) / static_cast<double>(g.test_mask.size());
}

TEST(MeanStd, SampleStandardDeviation) {
  const MeanStd s = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std({0.7}).std, 0.0);
  EXPECT_EQ(mean_std({}).count, 0u);
}

TEST(CmdTrain, WritesArtifactsAndConsistentSummary) {
  testing::TempDir d("train");
  std::ostringstream out, err;
  const MeanStd s = cmd_train(quick_spec(d.path()), out, err);
  EXPECT_NE(out.str().find("gust on sbm-easy: test accuracy"), std::string::npos);
  const auto rows = jsonl(d.path() / "metrics.jsonl");
  ASSERT_EQ(rows.size(), 3u * 5u);
  std::vector<double> finals;
  for (const auto& r : rows)
    if (r.contains("summary")) finals.push_back(r["test_acc"].get<double>());
  const MeanStd again = mean_std(finals);
  EXPECT_DOUBLE_EQ(again.mean, s.mean);
  EXPECT_DOUBLE_EQ(again.std, s.std);
  const auto summary = nlohmann::json::parse(slurp(d.path() / "summary.json"));
  EXPECT_DOUBLE_EQ(summary["test_acc_mean"].get<double>(), s.mean);
  EXPECT_EQ(summary["runs"].size(), 3u);
  EXPECT_TRUE(fs::exists(d.path() / "checkpoints" / "gust-seed2" / "weights.bin"));
}

TEST(CmdTrain, SupervisedBaselineBeatsMajority) {
  testing::TempDir d("train_gcn");
  std::ostringstream out, err;
  const MeanStd s = cmd_train(quick_spec(d.path(), Method::gcn_supervised), out, err);
  double majority = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) majority += majority_rate(generate_sbm(sbm_preset("easy"), seed).graph);
  EXPECT_GT(s.mean, majority / 3.0 + 0.2);
}

TEST(CmdTrain, RepeatedRunsAreByteIdentical) {
  testing::TempDir a("det_a"), b("det_b");
  std::ostringstream out, err;
  cmd_train(quick_spec(a.path()), out, err);
  cmd_train(quick_spec(b.path()), out, err);
  EXPECT_EQ(slurp(a.path() / "metrics.jsonl"), slurp(b.path() / "metrics.jsonl"));
  EXPECT_EQ(slurp(a.path() / "checkpoints/gust-seed1/weights.bin"),
            slurp(b.path() / "checkpoints/gust-seed1/weights.bin"));
}

TEST(CmdTrain, FileDatasetRuns) {
  testing::TempDir d("train_file");
  RunSpec s = quick_spec(d.path());
  s.data.dataset_dir = fs::path(GUST_TEST_DATA_DIR) / "triangle";
  s.seeds = {0};
  std::ostringstream out, err;
  cmd_train(s, out, err);
  EXPECT_NE(out.str().find("on triangle"), std::string::npos);
}

TEST(CmdSweep, FullFractionMatchesTrainAndRowsComplete) {
  testing::TempDir d("sweep"), t("sweep_train");
  std::ostringstream out, err;
  RunSpec spec = quick_spec(d.path());
  const auto rows = cmd_sweep(spec, {0.2, 0.6, 1.0}, {Method::gust, Method::gcn_supervised}, out, err);
  ASSERT_EQ(rows.size(), 3u * 3u * 2u);
  std::ifstream csv(d.path() / "sweep.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "fraction,seed,method,test_acc");
  std::size_t n = 0;
  for (std::string l; std::getline(csv, l);) ++n;
  EXPECT_EQ(n, rows.size());

  spec.out = t.path();
  cmd_train(spec, out, err);
  const auto summary = nlohmann::json::parse(slurp(t.path() / "summary.json"));
  for (const auto& r : rows) {
    if (r.fraction == 1.0 && r.method == Method::gust) {
      EXPECT_EQ(*r.test_acc, summary["runs"][r.seed]["test_acc"].get<double>());
    }
  }
  std::map<double, double> by_fraction;
  for (const auto& r : rows)
    if (r.method == Method::gcn_supervised) by_fraction[r.fraction] += *r.test_acc / 3.0;
  EXPECT_GE(by_fraction[1.0], by_fraction[0.2] - 0.02);
}

TEST(CmdSweep, InfeasibleFractionRecordsNan) {
  testing::TempDir d("sweep_nan");
  std::ostringstream out, err;
  RunSpec spec = quick_spec(d.path());
  spec.seeds = {0};
  const auto rows = cmd_sweep(spec, {0.05}, {Method::gust}, out, err);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].test_acc);
  EXPECT_NE(slurp(d.path() / "sweep.csv").find(",nan"), std::string::npos);
  EXPECT_NE(err.str().find("skipped"), std::string::npos);
}

TEST(CmdAblate, VariantsBehaveAsConfigured) {
  testing::TempDir d("ablate");
  std::ostringstream out, err;
  RunSpec spec = quick_spec(d.path());
  spec.seeds = {0, 1};
  const auto report = cmd_ablate(spec, out, err);
  ASSERT_EQ(report.size(), 4u);
  EXPECT_EQ(report[0].variant, "full");
  EXPECT_EQ(report[0].delta.mean, 0.0);
  std::map<std::string, std::vector<nlohmann::json>> by_run;
  for (const auto& r : jsonl(d.path() / "metrics.jsonl"))
    if (!r.contains("summary")) by_run[r["run_id"]].push_back(r);
  EXPECT_EQ(by_run["gust-single_step-seed0"].size(), 1u);
  EXPECT_EQ(by_run["gust-seed0"].size(), 4u);
  for (const auto& r : by_run["gust-no_graph_reg-seed1"]) EXPECT_EQ(r["losses"]["smoothness_term"], 0.0);
  for (const auto& r : by_run["gust-deterministic_encoder-seed1"]) EXPECT_EQ(r["mean_alpha"], 0.5);
  const auto j = nlohmann::json::parse(slurp(d.path() / "ablation.json"));
  EXPECT_EQ(j.size(), 4u);
}

TEST(CmdGradcheck, PassesAndDetectsInjectedFault) {
  const GradcheckResult ok = cmd_gradcheck();
  EXPECT_TRUE(ok.passed) << ok.report.max_relative_error;
  EXPECT_LT(ok.seconds, 10.0);
  GradcheckOptions bad;
  bad.omega_grad_scale = 2.0;
  const GradcheckResult r = cmd_gradcheck(bad);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.report.max_relative_error, 1e-2);
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(GUST_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  testing::TempDir d("cli");
  const fs::path log = d.path() / "log.txt";
  EXPECT_EQ(run_cli("gradcheck", log), 0);
  EXPECT_NE(slurp(log).find("PASS"), std::string::npos);
  EXPECT_EQ(run_cli("gradcheck --inject-fault omega", log), 3);
  EXPECT_EQ(run_cli("train --method gat", log), 1);
  EXPECT_NE(slurp(log).find("gat"), std::string::npos);
  EXPECT_EQ(run_cli("train --no-such-flag", log), 1);
  EXPECT_EQ(run_cli("", log), 1);
  EXPECT_EQ(run_cli("train --dataset " + (d.path() / "absent").string() + " --out " + d.path().string(), log), 1);
  EXPECT_EQ(run_cli("train --gamma -1 --out " + d.path().string(), log), 1);
  EXPECT_EQ(run_cli("train --lr 1e300 --T 1 --m-epochs 5 --seeds 1 --out " + d.path().string(), log), 2);
}

TEST(Cli, ConfigFileAndFlagOverride) {
  testing::TempDir d("cli_cfg");
  const fs::path cfg = d.path() / "cfg.json";
  std::ofstream(cfg) << R"({"method": "gcn_supervised", "T": 2, "m_epochs": 5, "seeds": 1, "sbm": "tiny"})";
  const fs::path log = d.path() / "log.txt";
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --T 3 --out " + d.path().string(), log), 0) << slurp(log);
  const auto rows = jsonl(d.path() / "metrics.jsonl");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0]["config"]["method"], "gcn_supervised");
  EXPECT_EQ(rows[0]["dataset"], "sbm-tiny");
  std::ofstream(cfg) << "{bad";
  EXPECT_EQ(run_cli("train --config " + cfg.string(), log), 1);
}

}  // namespace
}  // namespace gust
