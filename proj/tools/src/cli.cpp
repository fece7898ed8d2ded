#include "dascl_cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dascl/config.hpp"
#include "dascl/error.hpp"
#include "dascl/experiment.hpp"
#include "dascl/probe.hpp"
#include "dascl/report.hpp"
#include "dascl/trainer.hpp"

namespace dascl::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
  std::string emit = "file";
};

struct Context {
  Globals g;
  std::ostream& out;
  std::ostream& err;

  void log(const std::string& line) const {
    if (!g.quiet) err << line << '\n';
  }

  ExperimentConfig config() const {
    ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_experiment_config(g.config);
    if (g.seed) c.seeds = {*g.seed};
    if (!g.out_dir.empty()) c.out_dir = g.out_dir;
    c.validate();
    return c;
  }

  std::uint64_t seed(const ExperimentConfig& c) const { return g.seed ? *g.seed : c.seeds.front(); }

  /// Writes `text` to `<out_dir>/<name>` or to stdout, depending on --emit.
  void emit(const fs::path& dir, const std::string& name, const std::string& text) const {
    if (g.emit == "stdout") {
      out << text;
      return;
    }
    fs::create_directories(dir);
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    f << text;
    log("wrote " + (dir / name).string());
  }
};

std::vector<DomainDataset> domains_for(const ExperimentConfig& c, const std::string& data_dir) {
  return data_dir.empty() ? build_domains(c.dataset) : load_domains(data_dir);
}

const DomainDataset& find_domain(const std::vector<DomainDataset>& domains, int id) {
  for (const DomainDataset& d : domains)
    if (d.domain_id() == id) return d;
  throw ConfigError("unknown domain id " + std::to_string(id));
}

DomainSplit split_for(const ExperimentConfig& c, const std::vector<DomainDataset>& domains, int target,
                      std::uint64_t seed) {
  return leave_one_domain_out(domains, SplitSpec{target, c.validation_fraction,
                                                 derive_seed(seed, {static_cast<std::uint64_t>(target)})});
}

json calibration_to_json(const CalibrationResult& r) {
  json ops = json::array();
  for (const OpCalibration& op : r.ops) {
    json grid = json::array();
    for (const CalibrationPoint& p : op.grid)
      grid.push_back({{"magnitude", p.magnitude}, {"accuracy", p.accuracy}, {"drop", p.drop}});
    ops.push_back({{"kind", to_string(op.kind)}, {"magnitude", op.magnitude}, {"grid", grid}});
  }
  return {{"policy", policy_to_json(r.policy)}, {"ops", ops}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain-agnostic contrastive learning experiments"};
  app.name(args.empty() ? "dascl" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);
  app.fallthrough();

  Context ctx{{}, out, err};
  Globals& g = ctx.g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Override the seed list with a single seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.add_option("--emit", g.emit, "Where machine output goes")->check(CLI::IsMember({"file", "stdout"}));

  std::string data_dir, model_path, policy_path, method = "dascl", format = "markdown", input;
  int target = 0;
  std::optional<int> target_opt;

  auto* gen = app.add_subcommand("gen-data", "Generate the configured domains and store them");

  auto* calib = app.add_subcommand("calibrate", "Calibrate augmentation magnitudes against an ERM baseline");
  calib->add_option("--target", target, "Withheld domain id")->required();
  calib->add_option("--data", data_dir, "Stored domains (from gen-data)");
  calib->add_option("--model", model_path, "Baseline checkpoint; trained when omitted");

  auto* train = app.add_subcommand("train", "Train one model with a domain withheld");
  train->add_option("--target", target, "Withheld domain id")->required();
  train->add_option("--method", method, "erm or dascl")->check(CLI::IsMember({"erm", "dascl"}));
  train->add_option("--data", data_dir, "Stored domains (from gen-data)");
  train->add_option("--policy", policy_path, "Policy file (dascl); calibrated when omitted");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one domain");
  eval->add_option("--model", model_path, "Checkpoint")->required();
  eval->add_option("--target", target, "Domain id")->required();
  eval->add_option("--data", data_dir, "Stored domains (from gen-data)");

  auto* dist = app.add_subcommand("distance", "Pairwise proxy A-distances between domains");
  dist->add_option("--model", model_path, "Checkpoint")->required();
  dist->add_option("--target", target_opt, "Exclude this domain");
  dist->add_option("--data", data_dir, "Stored domains (from gen-data)");

  auto* exp = app.add_subcommand("experiment", "Run the leave-one-domain-out matrix");

  auto* rep = app.add_subcommand("report", "Render a stored report");
  rep->add_option("--input", input, "report.json (default <out-dir>/report.json)");
  rep->add_option("--format", format, "csv, json or markdown");

  try {
    std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    err << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  ExperimentConfig config;
  try {
    config = ctx.config();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    const fs::path out_dir = config.out_dir;
    if (gen->parsed()) {
      const auto domains = build_domains(config.dataset);
      const fs::path dir = out_dir / "data";
      save_domains(dir, domains);
      for (const DomainDataset& d : domains)
        ctx.log("domain " + std::to_string(d.domain_id()) + " " + d.name() + ": " + std::to_string(d.size()) + " samples");
      ctx.log("wrote " + dir.string());
    } else if (calib->parsed()) {
      const auto domains = domains_for(config, data_dir);
      const std::uint64_t seed = ctx.seed(config);
      const DomainSplit split = split_for(config, domains, target, seed);
      ModelBundle baseline;
      if (model_path.empty()) {
        ctx.log("training ERM baseline");
        baseline = fit(cell_train_config(config, split.train_sets.front(), Method::Erm, seed, target), split.train_sets,
                       split.val_sets)
                       .model;
      } else {
        baseline = load_checkpoint(model_path);
      }
      CalibrationSettings settings = config.calibration;
      settings.ranges = config.train.ranges;
      settings.seed = derive_seed(config.calibration.seed, {seed, static_cast<std::uint64_t>(target)});
      const auto ops = policy_ops(config);
      const CalibrationResult result = calibrate_magnitudes(baseline, split.val_sets, ops, settings);
      for (const OpCalibration& op : result.ops)
        ctx.log(to_string(op.kind) + ": m = " + std::to_string(op.magnitude));
      ctx.emit(out_dir, "calibration.json", calibration_to_json(result).dump(2) + "\n");
      if (g.emit == "file") save_policy(out_dir / "policy.json", result.policy);
    } else if (train->parsed()) {
      const auto domains = domains_for(config, data_dir);
      const std::uint64_t seed = ctx.seed(config);
      const Method m = method_from_string(method);
      const DomainSplit split = split_for(config, domains, target, seed);
      TrainConfig cfg = cell_train_config(config, split.train_sets.front(), m, seed, target);
      if (m == Method::Dascl) {
        if (!policy_path.empty()) {
          cfg.policy = load_policy(policy_path);
        } else {
          ctx.log("calibrating policy");
          const ModelBundle baseline =
              fit(cell_train_config(config, split.train_sets.front(), Method::Erm, seed, target), split.train_sets,
                  split.val_sets)
                  .model;
          CalibrationSettings settings = config.calibration;
          settings.ranges = config.train.ranges;
          settings.seed = derive_seed(config.calibration.seed, {seed, static_cast<std::uint64_t>(target)});
          const auto ops = policy_ops(config);
          cfg.policy = calibrate_magnitudes(baseline, split.val_sets, ops, settings).policy;
        }
      }
      const FitResult fitted = fit(cfg, split.train_sets, split.val_sets);
      const HistoryRow& last = fitted.history.back();
      ctx.log("epoch " + std::to_string(last.epoch) + ": loss " + std::to_string(last.total) + ", val acc " +
              std::to_string(last.val_acc));
      const fs::path dir = cell_dir(out_dir, find_domain(domains, target).name(), method, seed);
      fs::create_directories(dir);
      save_checkpoint(dir / "model.ckpt", fitted.model);
      if (m == Method::Dascl) save_policy(dir / "policy.json", cfg.policy);
      ctx.emit(dir, "history.csv", history_to_csv(fitted.history));
      ctx.log("wrote " + (dir / "model.ckpt").string());
    } else if (eval->parsed()) {
      const auto domains = domains_for(config, data_dir);
      const ModelBundle model = load_checkpoint(model_path);
      const DomainDataset& d = find_domain(domains, target);
      json result = {{"domain", target}, {"name", d.name()}, {"accuracy", evaluate(model, d, Metric::Accuracy)}};
      try {
        result["auc"] = evaluate(model, d, Metric::Auc);
      } catch (const ContractError&) {
        result["auc"] = nullptr;
      }
      ctx.log(d.name() + ": accuracy " + std::to_string(result["accuracy"].get<double>()));
      ctx.emit(out_dir, "eval.json", result.dump(2) + "\n");
    } else if (dist->parsed()) {
      auto domains = domains_for(config, data_dir);
      if (target_opt)
        std::erase_if(domains, [&](const DomainDataset& d) { return d.domain_id() == *target_opt; });
      const ModelBundle model = load_checkpoint(model_path);
      const DistanceReport report = pairwise_distances(domains, model, ctx.seed(config));
      ctx.emit(out_dir, "distances.json", to_json(report).dump(2) + "\n");
    } else if (exp->parsed()) {
      ExperimentHooks hooks;
      hooks.log = [&](const std::string& line) { ctx.log(line); };
      const ExperimentOutcome outcome = run_experiment(config, hooks);
      ctx.log("cells run: " + std::to_string(outcome.cells_run) + ", skipped: " +
              std::to_string(outcome.cells_skipped) + ", failed: " + std::to_string(outcome.report.failures.size()));
      if (g.emit == "stdout") out << render_report(outcome.report, ReportFormat::Json);
      ctx.log("report: " + (out_dir / "report.md").string());
      if (!outcome.report.failures.empty()) return kRuntime;
    } else if (rep->parsed()) {
      ReportFormat f;
      try {
        f = report_format_from_string(format);
      } catch (const ContractError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
      }
      const fs::path path = input.empty() ? out_dir / "report.json" : fs::path(input);
      std::ifstream in(path);
      if (!in) throw IoError("cannot read report " + path.string());
      json doc;
      try {
        in >> doc;
      } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
      }
      const MetricsReport report = metrics_report_from_json(doc);
      ctx.emit(out_dir, "report." + extension(f), render_report(report, f));
    }
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

}  // namespace dascl::cli
