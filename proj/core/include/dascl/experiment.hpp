#pragma once

#include <cstdint>
#include <span>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dascl/config.hpp"
#include "dascl/datasets.hpp"
#include "dascl/report.hpp"

namespace dascl {

/// Pipeline stages reported to ExperimentHooks::on_stage, in execution order
/// within one (target, seed) group.
enum class Stage { Split, Baseline, Calibrate, Train, Probe, Evaluate, Write };

std::string to_string(Stage stage);

struct ExperimentHooks {
  /// Human-readable progress lines.
  std::function<void(const std::string&)> log;
  /// Called after the leave-one-domain-out split of each group; tests use it to
  /// attach access counters to the withheld target.
  std::function<void(DomainSplit&)> on_split;
  std::function<void(Stage, int target, std::uint64_t seed)> on_stage;
};

struct ExperimentOutcome {
  MetricsReport report;
  std::size_t cells_run = 0;
  std::size_t cells_skipped = 0;
};

/// <out>/<target name>/<method>/<seed>
std::filesystem::path cell_dir(const std::filesystem::path& out_dir, const std::string& target_name,
                               const std::string& method, std::uint64_t seed);

/// Runs every (target, seed, method) cell not already completed on disk,
/// then aggregates all stored per-run metrics into <out>/report.{json,csv,md}.
/// Groups sharing (target, seed) run in up to `threads` workers; 0 reads
/// DASCL_THREADS (absent: 1). Failed cells are recorded, not fatal.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks = {},
                                 std::size_t threads = 0);

/// Builds the report from the per-run metrics.json artifacts under out_dir.
MetricsReport aggregate_report(const ExperimentConfig& config, std::span<const DomainDataset> domains,
                               std::vector<CellFailure> failures = {});

/// Writes report.{json,csv,md} into out_dir.
void write_report_files(const std::filesystem::path& out_dir, const MetricsReport& report);

/// Train config for one cell: method, seed and data-derived model dimensions filled in.
TrainConfig cell_train_config(const ExperimentConfig& config, const DomainDataset& sample_domain, Method method,
                              std::uint64_t seed, int target);

std::string utc_timestamp();

}  // namespace dascl
