#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"
#include "dascl/experiment.hpp"
#include "dascl_cli/cli.hpp"
#include "support/support.hpp"

namespace dascl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json tiny_config_json(const fs::path& out) {
  return {{"dataset", {{"kind", "glyphs"}, {"rotations", {0, 15, 30, 45}}, {"n_per_class", 10}}},
          {"seeds", {0, 1}},
          {"out_dir", out.string()},
          {"train", {{"epochs", 2}, {"batch_size", 16}, {"hidden_dims", {16}}, {"embed_dim", 8}, {"proj_dim", 4}}},
          {"calibration", {{"grid_steps", 3}}}};
}

ExperimentConfig tiny_config(const fs::path& out) { return experiment_config_from_json(tiny_config_json(out)); }

TEST(Summaries, MeanAndSampleStd) {
  const CellStats s = summarize({70.0, 80.0});
  EXPECT_DOUBLE_EQ(s.mean, 75.0);
  EXPECT_NEAR(s.std, 7.0710678118654755, 1e-12);
  EXPECT_EQ(summarize({42.0}).std, 0.0);
}

MetricsReport synthetic_report() {
  MetricsReport r;
  r.metric = "accuracy";
  r.targets = {{0, "rot0"}, {1, "rot15"}};
  r.seeds = {0, 1};
  r.rows = {MethodRow{"erm", {summarize({70, 80}), summarize({60, 62})}, summarize({65, 71})},
            MethodRow{"dascl", {summarize({76, 78}), summarize({55, 57})}, summarize({63.5, 65.5})}};
  r.config_hash = "0123456789abcdef";
  r.completed_at = "2026-01-01T00:00:00Z";
  return r;
}

TEST(Report, MarkdownLayoutAndBolding) {
  const std::string md = render_report(synthetic_report(), ReportFormat::Markdown);
  EXPECT_EQ(md,
            "| Target | rot0 | rot15 | Average |\n"
            "|---|---|---|---|\n"
            "| erm | 75.00 | **61.00** | **68.00** |\n"
            "| Std.dev | 7.07 | 1.41 | 4.24 |\n"
            "| dascl | **77.00** | 56.00 | 64.50 |\n"
            "| Std.dev | 1.41 | 1.41 | 1.41 |\n");
}

TEST(Report, TiesAreAllBoldAndMissingCellsMarked) {
  MetricsReport r = synthetic_report();
  r.rows[1].per_target[0] = summarize({75, 75});
  r.rows[1].per_target[1] = std::nullopt;
  r.rows[1].average = std::nullopt;
  const std::string md = render_report(r, ReportFormat::Markdown);
  EXPECT_NE(md.find("| erm | **75.00** |"), std::string::npos) << md;
  EXPECT_NE(md.find("| dascl | **75.00** | n/a | n/a |"), std::string::npos) << md;
}

TEST(Report, DeterministicAndJsonRoundTrip) {
  const MetricsReport r = synthetic_report();
  for (const ReportFormat f : {ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown})
    EXPECT_EQ(render_report(r, f), render_report(r, f));
  EXPECT_EQ(metrics_report_from_json(json::parse(render_report(r, ReportFormat::Json))), r);
  EXPECT_THROW(report_format_from_string("html"), ContractError);
  const std::string csv = render_report(r, ReportFormat::Csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,target,mean,std,n");
}

class HarnessRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("harness");
    ExperimentHooks hooks;
    hooks.on_split = [](DomainSplit& split) {
      auto counter = std::make_shared<std::atomic<std::size_t>>(0);
      split.target.set_access_counter(counter);
      std::lock_guard lock(mutex_);
      counters_.push_back(counter);
    };
    hooks.on_stage = [](Stage stage, int, std::uint64_t) {
      std::lock_guard lock(mutex_);
      if (stage == Stage::Split) return;
      const std::size_t reads = counters_.back()->load();
      if (stage == Stage::Evaluate) {
        reads_before_evaluate_ += reads;
      } else if (stage == Stage::Write) {
        reads_after_evaluate_ += reads;
      }
    };
    outcome_ = new ExperimentOutcome(run_experiment(tiny_config(dir_->path()), hooks, 1));
    first_json_ = new std::string(slurp(dir_->path() / "report.json"));
  }
  static void TearDownTestSuite() {
    delete outcome_;
    delete first_json_;
    delete dir_;
  }

  static inline testing::TempDir* dir_ = nullptr;
  static inline ExperimentOutcome* outcome_ = nullptr;
  static inline std::string* first_json_ = nullptr;
  static inline std::mutex mutex_;
  static inline std::vector<std::shared_ptr<std::atomic<std::size_t>>> counters_;
  static inline std::size_t reads_before_evaluate_ = 0;
  static inline std::size_t reads_after_evaluate_ = 0;
};

TEST_F(HarnessRun, EveryCellCompletesWithArtifacts) {
  EXPECT_EQ(outcome_->cells_run, 4u * 2u * 2u);
  EXPECT_TRUE(outcome_->report.failures.empty());
  ASSERT_EQ(outcome_->report.rows.size(), 2u);
  for (const MethodRow& row : outcome_->report.rows) {
    ASSERT_EQ(row.per_target.size(), 4u);
    for (const auto& cell : row.per_target) {
      ASSERT_TRUE(cell.has_value());
      EXPECT_EQ(cell->values.size(), 2u);
    }
  }
  for (const char* name : {"model.ckpt", "history.csv", "metrics.json", "distances.json"})
    EXPECT_TRUE(fs::exists(dir_->path() / "rot30" / "dascl" / "1" / name)) << name;
  EXPECT_TRUE(fs::exists(dir_->path() / "rot30" / "dascl" / "1" / "policy.json"));
  for (const char* name : {"report.json", "report.csv", "report.md"}) EXPECT_TRUE(fs::exists(dir_->path() / name));
}

TEST_F(HarnessRun, AggregationMatchesScalarRecomputation) {
  const MetricsReport& r = outcome_->report;
  for (std::size_t m = 0; m < r.rows.size(); ++m) {
    std::vector<double> per_target_means;
    std::vector<double> per_seed_sum(r.seeds.size(), 0.0);
    for (std::size_t t = 0; t < r.targets.size(); ++t) {
      std::vector<double> v;
      for (std::size_t s = 0; s < r.seeds.size(); ++s) {
        const json doc = json::parse(
            slurp(dir_->path() / r.targets[t].name / r.rows[m].method / std::to_string(r.seeds[s]) / "metrics.json"));
        v.push_back(100.0 * doc.at("value").get<double>());
        per_seed_sum[s] += v.back();
      }
      double mean = 0.0;
      for (const double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (const double x : v) ss += (x - mean) * (x - mean);
      const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
      EXPECT_NEAR(r.rows[m].per_target[t]->mean, mean, 1e-12);
      EXPECT_NEAR(r.rows[m].per_target[t]->std, sd, 1e-12);
      per_target_means.push_back(mean);
    }
    double avg = 0.0;
    for (const double x : per_target_means) avg += x;
    avg /= static_cast<double>(per_target_means.size());
    EXPECT_NEAR(r.rows[m].average->mean, avg, 1e-12);
    const double a0 = per_seed_sum[0] / 4.0, a1 = per_seed_sum[1] / 4.0;
    EXPECT_NEAR(r.rows[m].average->std, std::abs(a0 - a1) / std::sqrt(2.0), 1e-12);
  }
}

TEST_F(HarnessRun, TargetIsReadOnlyDuringEvaluation) {
  EXPECT_EQ(counters_.size(), 4u * 2u);
  EXPECT_EQ(reads_before_evaluate_, 0u);
  EXPECT_GT(reads_after_evaluate_, 0u);
}

TEST_F(HarnessRun, RerunIsANoOpWithIdenticalReport) {
  const ExperimentOutcome again = run_experiment(tiny_config(dir_->path()), {}, 1);
  EXPECT_EQ(again.cells_run, 0u);
  EXPECT_EQ(again.cells_skipped, 16u);
  EXPECT_EQ(slurp(dir_->path() / "report.json"), *first_json_);
}

TEST_F(HarnessRun, CliReportMatchesDirectRendering) {
  std::ostringstream out, err;
  const int code = cli::run({"dascl", "report", "--format", "markdown", "--emit", "stdout", "--out-dir",
                             dir_->path().string()},
                            out, err);
  EXPECT_EQ(code, 0) << err.str();
  EXPECT_EQ(out.str(), render_report(outcome_->report, ReportFormat::Markdown));
}

TEST(Harness, ParallelWorkersMatchSequentialRun) {
  testing::TempDir seq("seq"), par("par");
  json cfg = tiny_config_json(seq.path());
  cfg["targets"] = {0, 2};
  cfg["methods"] = {"dascl"};
  cfg["probe"] = false;
  run_experiment(experiment_config_from_json(cfg), {}, 1);
  cfg["out_dir"] = par.path().string();
  run_experiment(experiment_config_from_json(cfg), {}, 3);
  for (const char* t : {"rot0", "rot30"})
    for (const char* s : {"0", "1"})
      EXPECT_EQ(slurp(seq.path() / t / "dascl" / s / "model.ckpt"), slurp(par.path() / t / "dascl" / s / "model.ckpt"));
}

TEST(Harness, FailedCellsAreRecordedAndSkippedInReport) {
  testing::TempDir dir("fail");
  json cfg = tiny_config_json(dir.path());
  cfg["seeds"] = {0};
  cfg["targets"] = {0, 1};
  cfg["probe"] = false;
  ExperimentHooks hooks;
  hooks.on_stage = [](Stage stage, int target, std::uint64_t) {
    if (stage == Stage::Train && target == 1) throw TrainingError("injected");
  };
  const ExperimentOutcome o = run_experiment(experiment_config_from_json(cfg), hooks, 1);
  ASSERT_EQ(o.report.failures.size(), 2u);
  EXPECT_EQ(o.report.failures[0].target, 1);
  EXPECT_EQ(o.report.failures[0].message, "injected");
  EXPECT_TRUE(o.report.rows[0].per_target[0].has_value());
  EXPECT_FALSE(o.report.rows[0].per_target[1].has_value());
  EXPECT_FALSE(o.report.rows[0].average.has_value());
  EXPECT_NE(render_report(o.report, ReportFormat::Markdown).find("n/a"), std::string::npos);
}

TEST(Harness, BaselineIsStoredWhenErmIsNotRequested) {
  testing::TempDir dir("baseline");
  json cfg = tiny_config_json(dir.path());
  cfg["seeds"] = {3};
  cfg["targets"] = {2};
  cfg["methods"] = {"dascl"};
  cfg["probe"] = false;
  run_experiment(experiment_config_from_json(cfg), {}, 1);
  EXPECT_TRUE(fs::exists(dir.path() / "rot30" / "baseline" / "3" / "model.ckpt"));
  EXPECT_FALSE(fs::exists(dir.path() / "rot30" / "erm"));
}

TEST(Config, StrictParsing) {
  json cfg = tiny_config_json("x");
  cfg["bogus"] = 1;
  EXPECT_THROW(experiment_config_from_json(cfg), ConfigError);
  cfg = tiny_config_json("x");
  cfg["train"]["learning_rate"] = 0.1;
  EXPECT_THROW(experiment_config_from_json(cfg), ConfigError);
  cfg = tiny_config_json("x");
  cfg["seeds"] = json::array();
  EXPECT_THROW(experiment_config_from_json(cfg), ConfigError);
  cfg = tiny_config_json("x");
  cfg["methods"] = {"erm", "mixup"};
  EXPECT_THROW(experiment_config_from_json(cfg), ConfigError);
  cfg = tiny_config_json("x");
  cfg["dataset"]["rotations"] = {0};
  EXPECT_THROW(experiment_config_from_json(cfg), ConfigError);
  cfg = tiny_config_json("x");
  cfg["train"]["epochs"] = "many";
  EXPECT_THROW(experiment_config_from_json(cfg), ConfigError);
  EXPECT_EQ(to_json(experiment_config_from_json(tiny_config_json("x"))), to_json(tiny_config("x")));
}

TEST(Config, HashIgnoresOutputDirectory) {
  EXPECT_EQ(config_hash(tiny_config("a")), config_hash(tiny_config("b")));
  json cfg = tiny_config_json("a");
  cfg["seeds"] = {0, 1, 2};
  EXPECT_NE(config_hash(experiment_config_from_json(cfg)), config_hash(tiny_config("a")));
}

TEST(Cli, MissingConfigIsAUsageErrorNamingThePath) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::run({"dascl", "experiment", "--config", "/no/such/c.json"}, out, err), 1);
  EXPECT_NE(err.str().find("/no/such/c.json"), std::string::npos) << err.str();
  EXPECT_TRUE(out.str().empty());
}

TEST(Cli, UnknownSubcommandOrFlagIsAUsageError) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::run({"dascl", "frobnicate"}, out, err), 1);
  EXPECT_EQ(cli::run({"dascl", "experiment", "--turbo"}, out, err), 1);
  EXPECT_EQ(cli::run({"dascl"}, out, err), 1);
  EXPECT_EQ(cli::run({"dascl", "report", "--format", "html", "--out-dir", "/tmp"}, out, err), 1);
  EXPECT_TRUE(out.str().empty());
}

TEST(Cli, ExperimentHappyPathAndSubcommands) {
  testing::TempDir dir("cli");
  json cfg = tiny_config_json(dir.path() / "out");
  cfg["seeds"] = {0};
  cfg["targets"] = {3};
  const fs::path config_path = dir.path() / "c.json";
  std::ofstream(config_path) << cfg.dump();
  std::ostringstream out, err;
  const std::string c = config_path.string();
  ASSERT_EQ(cli::run({"dascl", "experiment", "--config", c, "--quiet"}, out, err), 0) << err.str();
  EXPECT_TRUE(out.str().empty());
  EXPECT_TRUE(err.str().empty());
  for (const char* name : {"report.json", "report.csv", "report.md"}) EXPECT_TRUE(fs::exists(dir.path() / "out" / name));

  const std::string ckpt = (dir.path() / "out" / "rot45" / "erm" / "0" / "model.ckpt").string();
  ASSERT_EQ(cli::run({"dascl", "eval", "--config", c, "--model", ckpt, "--target", "3", "--emit", "stdout"}, out, err),
            0)
      << err.str();
  const json eval = json::parse(out.str());
  const json metrics = json::parse(slurp(dir.path() / "out" / "rot45" / "erm" / "0" / "metrics.json"));
  EXPECT_EQ(eval.at("accuracy"), metrics.at("accuracy"));

  out.str("");
  ASSERT_EQ(cli::run({"dascl", "distance", "--config", c, "--model", ckpt, "--target", "3", "--emit", "stdout"}, out,
                     err),
            0);
  EXPECT_EQ(json::parse(out.str()).at("domain_ids"), json({0, 1, 2}));

  ASSERT_EQ(cli::run({"dascl", "gen-data", "--config", c, "--quiet"}, out, err), 0);
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "data" / "manifest.json"));
  ASSERT_EQ(cli::run({"dascl", "train", "--config", c, "--quiet", "--target", "0", "--method", "erm", "--data",
                      (dir.path() / "out" / "data").string()},
                     out, err),
            0)
      << err.str();
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "rot0" / "erm" / "0" / "history.csv"));
  ASSERT_EQ(cli::run({"dascl", "calibrate", "--config", c, "--quiet", "--target", "0", "--model",
                      (dir.path() / "out" / "rot0" / "erm" / "0" / "model.ckpt").string()},
                     out, err),
            0)
      << err.str();
  EXPECT_NO_THROW(load_policy(dir.path() / "out" / "policy.json"));
  EXPECT_EQ(cli::run({"dascl", "eval", "--config", c, "--model", "/no/model.ckpt", "--target", "0"}, out, err), 2);
}

}  // namespace
}  // namespace dascl
