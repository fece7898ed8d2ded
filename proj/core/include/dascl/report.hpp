#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dascl {

/// Mean and sample standard deviation (n - 1 denominator; 0 when n < 2).
struct CellStats {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> values;

  bool operator==(const CellStats&) const = default;
};

CellStats summarize(std::vector<double> values);

struct TargetColumn {
  int id = 0;
  std::string name;

  bool operator==(const TargetColumn&) const = default;
};

struct MethodRow {
  std::string method;
  std::vector<std::optional<CellStats>> per_target;  // nullopt marks a missing cell
  /// Mean of the per-target means; std over seeds of per-seed target averages.
  std::optional<CellStats> average;

  bool operator==(const MethodRow&) const = default;
};

struct CellFailure {
  int target = 0;
  std::string method;
  std::uint64_t seed = 0;
  std::string message;

  bool operator==(const CellFailure&) const = default;
};

/// Per-(method, target) metric summary in percent, laid out like a results
/// table: targets as columns plus an Average column, one row per method.
struct MetricsReport {
  std::string metric;
  std::vector<TargetColumn> targets;
  std::vector<std::uint64_t> seeds;
  std::vector<MethodRow> rows;
  std::vector<CellFailure> failures;
  std::string config_hash;
  std::string completed_at;

  bool operator==(const MetricsReport&) const = default;
};

enum class ReportFormat { Csv, Json, Markdown };

ReportFormat report_format_from_string(const std::string& name);
std::string extension(ReportFormat format);

/// Deterministic bytes. Markdown bolds the best mean of every column.
std::string render_report(const MetricsReport& report, ReportFormat format);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const nlohmann::json& doc);

}  // namespace dascl
