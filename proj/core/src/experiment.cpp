#include "dascl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"
#include "dascl/probe.hpp"

namespace dascl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kAugmentedIdOffset = 100;

void write_text(const fs::path& path, const std::string& text) {
  // Write-then-rename so a crash never leaves a half-written completion marker.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::optional<json> read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::size_t thread_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DASCL_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("DASCL_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

struct GroupResult {
  std::vector<CellFailure> failures;
  std::size_t run = 0;
  std::size_t skipped = 0;
};

class GroupRunner {
 public:
  GroupRunner(const ExperimentConfig& config, std::span<const DomainDataset> domains, const ExperimentHooks& hooks,
              std::mutex& log_mutex)
      : config_(config), domains_(domains), hooks_(hooks), log_mutex_(log_mutex), hash_(config_hash(config)) {}

  GroupResult run(int target, std::uint64_t seed);

 private:
  struct Trained {
    Method method;
    TrainConfig train;
    ModelBundle model;
    TrainHistory history;
    std::optional<AugmentationPolicy> policy;
    std::optional<json> distances;
  };

  void log(const std::string& line) const {
    if (!hooks_.log) return;
    std::lock_guard lock(log_mutex_);
    hooks_.log(line);
  }
  void stage(Stage s, int target, std::uint64_t seed) const {
    if (hooks_.on_stage) hooks_.on_stage(s, target, seed);
  }
  bool wants(Method m) const { return std::find(config_.methods.begin(), config_.methods.end(), m) != config_.methods.end(); }
  json probe(const DomainSplit& split, const Trained& run, const std::optional<AugmentationPolicy>& policy,
             std::uint64_t seed, int target) const;

  const ExperimentConfig& config_;
  std::span<const DomainDataset> domains_;
  const ExperimentHooks& hooks_;
  std::mutex& log_mutex_;
  std::string hash_;
};

json GroupRunner::probe(const DomainSplit& split, const Trained& run, const std::optional<AugmentationPolicy>& policy,
                        std::uint64_t seed, int target) const {
  std::vector<DomainDataset> probe_domains(split.val_sets.begin(), split.val_sets.end());
  const std::size_t k = probe_domains.size();
  if (policy && split.val_sets.front().kind() == SampleKind::Image) {
    // Augmented counterpart of each source: every entry forced on, magnitudes drawn from (0, m_k].
    AugmentationPolicy forced = *policy;
    for (PolicyEntry& e : forced.entries)
      if (e.op.safe) e.probability = 1.0;
    std::erase_if(forced.entries, [](const PolicyEntry& e) { return !e.op.safe; });
    for (std::size_t i = 0; i < k; ++i) {
      const DomainDataset& src = split.val_sets[i];
      DomainDataset aug = augment_dataset(src, forced, derive_seed(seed, {static_cast<std::uint64_t>(target), i, 0x415547}),
                                          config_.train.ranges);
      std::vector<Sample> samples = aug.samples();
      probe_domains.emplace_back(src.domain_id() + kAugmentedIdOffset, src.name() + "+aug", src.kind(), src.height(),
                                 src.width(), src.num_classes(), std::move(samples));
    }
  }
  const std::uint64_t probe_seed = derive_seed(seed, {static_cast<std::uint64_t>(target), 0x50524f4245});
  const DistanceReport before = pairwise_distances(probe_domains, initial_model(run.train), probe_seed);
  const DistanceReport after = pairwise_distances(probe_domains, run.model, probe_seed);

  std::vector<std::pair<std::size_t, std::size_t>> source_pairs, augmented_pairs;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) source_pairs.emplace_back(i, j);
  for (std::size_t i = 0; k < probe_domains.size() && i < k; ++i) augmented_pairs.emplace_back(i, k + i);

  json summary = json::object();
  if (!source_pairs.empty()) {
    summary["source_pairs_before"] = mean_distance(before, source_pairs);
    summary["source_pairs_after"] = mean_distance(after, source_pairs);
  }
  if (!augmented_pairs.empty()) {
    summary["source_augmented_before"] = mean_distance(before, augmented_pairs);
    summary["source_augmented_after"] = mean_distance(after, augmented_pairs);
  }
  return {{"before", to_json(before)}, {"after", to_json(after)}, {"summary", summary}};
}

GroupResult GroupRunner::run(int target, std::uint64_t seed) {
  GroupResult result;
  const auto target_it =
      std::find_if(domains_.begin(), domains_.end(), [&](const DomainDataset& d) { return d.domain_id() == target; });
  const DomainDataset& target_domain = *target_it;
  const std::string& tname = target_domain.name();

  std::map<Method, bool> done;
  for (const Method m : config_.methods)
    done[m] = fs::exists(cell_dir(config_.out_dir, tname, to_string(m), seed) / "metrics.json");
  std::vector<Method> pending;
  for (const Method m : config_.methods)
    if (!done[m]) pending.push_back(m);
  result.skipped = config_.methods.size() - pending.size();
  if (pending.empty()) {
    log("skip " + tname + " seed " + std::to_string(seed) + ": all cells complete");
    return result;
  }

  try {
    stage(Stage::Split, target, seed);
    SplitSpec spec{target, config_.validation_fraction, derive_seed(seed, {static_cast<std::uint64_t>(target)})};
    DomainSplit split = leave_one_domain_out(domains_, spec);
    if (hooks_.on_split) hooks_.on_split(split);
    const DomainDataset& shape_ref = split.train_sets.front();

    std::vector<Trained> runs;
    const bool need_dascl = std::find(pending.begin(), pending.end(), Method::Dascl) != pending.end();
    const bool need_erm = std::find(pending.begin(), pending.end(), Method::Erm) != pending.end();

    // ERM baseline: doubles as the frozen model for calibration.
    stage(Stage::Baseline, target, seed);
    std::optional<ModelBundle> baseline;
    const TrainConfig erm_cfg = cell_train_config(config_, shape_ref, Method::Erm, seed, target);
    if (need_erm) {
      log("train erm  " + tname + " seed " + std::to_string(seed));
      FitResult fitted = fit(erm_cfg, split.train_sets, split.val_sets);
      baseline = fitted.model;
      runs.push_back(Trained{Method::Erm, erm_cfg, std::move(fitted.model), std::move(fitted.history), {}, {}});
    } else if (need_dascl) {
      const fs::path stored = wants(Method::Erm)
                                  ? cell_dir(config_.out_dir, tname, "erm", seed) / "model.ckpt"
                                  : config_.out_dir / tname / "baseline" / std::to_string(seed) / "model.ckpt";
      if (fs::exists(stored)) {
        baseline = load_checkpoint(stored);
      } else {
        log("train baseline " + tname + " seed " + std::to_string(seed));
        baseline = fit(erm_cfg, split.train_sets, split.val_sets).model;
        fs::create_directories(stored.parent_path());
        save_checkpoint(stored, *baseline);
      }
    }

    std::optional<AugmentationPolicy> policy;
    if (need_dascl) {
      stage(Stage::Calibrate, target, seed);
      CalibrationSettings settings = config_.calibration;
      settings.ranges = config_.train.ranges;
      settings.seed = derive_seed(config_.calibration.seed, {seed, static_cast<std::uint64_t>(target)});
      const auto ops = policy_ops(config_);
      policy = calibrate_magnitudes(*baseline, split.val_sets, ops, settings).policy;

      stage(Stage::Train, target, seed);
      log("train dascl " + tname + " seed " + std::to_string(seed));
      TrainConfig cfg = cell_train_config(config_, shape_ref, Method::Dascl, seed, target);
      cfg.policy = *policy;
      FitResult fitted = fit(cfg, split.train_sets, split.val_sets);
      runs.push_back(Trained{Method::Dascl, cfg, std::move(fitted.model), std::move(fitted.history), policy, {}});
    } else if (wants(Method::Dascl)) {
      const fs::path stored = cell_dir(config_.out_dir, tname, "dascl", seed) / "policy.json";
      if (fs::exists(stored)) policy = load_policy(stored);
    }

    if (config_.probe) {
      stage(Stage::Probe, target, seed);
      for (Trained& r : runs) r.distances = probe(split, r, policy, seed, target);
    }

    // Only now is the withheld domain read.
    stage(Stage::Evaluate, target, seed);
    std::vector<json> metrics;
    for (const Trained& r : runs) {
      const double accuracy = evaluate(r.model, split.target, Metric::Accuracy);
      double auc = std::numeric_limits<double>::quiet_NaN();
      try {
        auc = evaluate(r.model, split.target, Metric::Auc);
      } catch (const ContractError&) {
      }
      const double value = config_.metric == Metric::Accuracy ? accuracy : auc;
      json m = {{"target", target},
                {"target_name", tname},
                {"method", to_string(r.method)},
                {"seed", seed},
                {"metric", to_string(config_.metric)},
                {"value", value},
                {"accuracy", accuracy},
                {"auc", std::isfinite(auc) ? json(auc) : json(nullptr)},
                {"final_val_acc", r.history.back().val_acc},
                {"config_hash", hash_},
                {"completed_at", utc_timestamp()}};
      if (r.distances) m["distance_summary"] = r.distances->at("summary");
      metrics.push_back(std::move(m));
      log(to_string(r.method) + " " + tname + " seed " + std::to_string(seed) + ": " + to_string(config_.metric) +
          " = " + std::to_string(value));
    }

    stage(Stage::Write, target, seed);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const Trained& r = runs[i];
      const fs::path dir = cell_dir(config_.out_dir, tname, to_string(r.method), seed);
      fs::create_directories(dir);
      save_checkpoint(dir / "model.ckpt", r.model);
      save_history_csv(dir / "history.csv", r.history);
      if (r.policy) save_policy(dir / "policy.json", *r.policy);
      if (r.distances) write_text(dir / "distances.json", r.distances->dump(2) + "\n");
      write_text(dir / "metrics.json", metrics[i].dump(2) + "\n");
      ++result.run;
    }
  } catch (const std::exception& e) {
    log("FAILED " + tname + " seed " + std::to_string(seed) + ": " + e.what());
    for (const Method m : pending) result.failures.push_back(CellFailure{target, to_string(m), seed, e.what()});
  }
  return result;
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Split: return "split";
    case Stage::Baseline: return "baseline";
    case Stage::Calibrate: return "calibrate";
    case Stage::Train: return "train";
    case Stage::Probe: return "probe";
    case Stage::Evaluate: return "evaluate";
    case Stage::Write: return "write";
  }
  return "unknown";
}

std::filesystem::path cell_dir(const std::filesystem::path& out_dir, const std::string& target_name,
                               const std::string& method, std::uint64_t seed) {
  return out_dir / target_name / method / std::to_string(seed);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

TrainConfig cell_train_config(const ExperimentConfig& config, const DomainDataset& sample_domain, Method method,
                              std::uint64_t seed, int target) {
  TrainConfig cfg = config.train;
  cfg.method = method;
  cfg.seed = derive_seed(seed, {static_cast<std::uint64_t>(target)});
  cfg.model.input_dim = sample_domain.input_dim();
  cfg.model.num_classes = sample_domain.num_classes();
  cfg.run_id = sample_domain.name() + "/" + to_string(method) + "/" + std::to_string(seed);
  if (method == Method::Erm) cfg.policy = {};
  return cfg;
}

MetricsReport aggregate_report(const ExperimentConfig& config, std::span<const DomainDataset> domains,
                               std::vector<CellFailure> failures) {
  MetricsReport report;
  report.metric = to_string(config.metric);
  report.seeds = config.seeds;
  report.config_hash = config_hash(config);
  std::vector<int> targets = config.targets;
  if (targets.empty())
    for (const DomainDataset& d : domains) targets.push_back(d.domain_id());
  for (const int t : targets) {
    const auto it =
        std::find_if(domains.begin(), domains.end(), [&](const DomainDataset& d) { return d.domain_id() == t; });
    if (it == domains.end()) throw ConfigError("unknown target domain " + std::to_string(t));
    report.targets.push_back(TargetColumn{t, it->name()});
  }

  for (const Method method : config.methods) {
    MethodRow row;
    row.method = to_string(method);
    // per_seed[seed index][target index]
    std::vector<std::vector<std::optional<double>>> per_seed(config.seeds.size(),
                                                             std::vector<std::optional<double>>(targets.size()));
    for (std::size_t t = 0; t < targets.size(); ++t) {
      std::vector<double> values;
      for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        const auto doc = read_json(cell_dir(config.out_dir, report.targets[t].name, row.method, config.seeds[s]) /
                                   "metrics.json");
        if (!doc || !doc->contains("value") || !doc->at("value").is_number()) continue;
        const double v = 100.0 * doc->at("value").get<double>();
        values.push_back(v);
        per_seed[s][t] = v;
        const std::string stamp = doc->value("completed_at", std::string());
        report.completed_at = std::max(report.completed_at, stamp);
      }
      row.per_target.push_back(values.empty() ? std::nullopt : std::optional<CellStats>(summarize(values)));
    }
    const bool complete = std::all_of(row.per_target.begin(), row.per_target.end(), [](const auto& c) { return c.has_value(); });
    if (complete && !targets.empty()) {
      std::vector<double> seed_averages;
      for (const auto& seed_row : per_seed) {
        if (!std::all_of(seed_row.begin(), seed_row.end(), [](const auto& v) { return v.has_value(); })) continue;
        double acc = 0.0;
        for (const auto& v : seed_row) acc += *v;
        seed_averages.push_back(acc / static_cast<double>(seed_row.size()));
      }
      double mean_of_means = 0.0;
      for (const auto& c : row.per_target) mean_of_means += c->mean;
      mean_of_means /= static_cast<double>(row.per_target.size());
      CellStats avg;
      if (!seed_averages.empty()) avg = summarize(seed_averages);
      avg.mean = mean_of_means;
      row.average = avg;
    }
    report.rows.push_back(std::move(row));
  }
  std::sort(failures.begin(), failures.end(), [](const CellFailure& a, const CellFailure& b) {
    return std::tie(a.target, a.seed, a.method) < std::tie(b.target, b.seed, b.method);
  });
  report.failures = std::move(failures);
  return report;
}

void write_report_files(const std::filesystem::path& out_dir, const MetricsReport& report) {
  fs::create_directories(out_dir);
  for (const ReportFormat f : {ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown})
    write_text(out_dir / ("report." + extension(f)), render_report(report, f));
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks, std::size_t threads) {
  config.validate();
  const std::vector<DomainDataset> domains = build_domains(config.dataset);
  std::vector<int> targets = config.targets;
  if (targets.empty())
    for (const DomainDataset& d : domains) targets.push_back(d.domain_id());

  std::vector<std::pair<int, std::uint64_t>> groups;
  for (const int t : targets)
    for (const std::uint64_t s : config.seeds) groups.emplace_back(t, s);

  std::mutex log_mutex;
  GroupRunner runner(config, domains, hooks, log_mutex);
  std::vector<GroupResult> results(groups.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < groups.size(); i = next++) results[i] = runner.run(groups[i].first, groups[i].second);
  };
  const std::size_t workers = std::min(thread_count(threads), std::max<std::size_t>(groups.size(), 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  ExperimentOutcome outcome;
  std::vector<CellFailure> failures;
  for (GroupResult& r : results) {
    outcome.cells_run += r.run;
    outcome.cells_skipped += r.skipped;
    failures.insert(failures.end(), r.failures.begin(), r.failures.end());
  }
  outcome.report = aggregate_report(config, domains, std::move(failures));
  write_report_files(config.out_dir, outcome.report);
  return outcome;
}

}  // namespace dascl
