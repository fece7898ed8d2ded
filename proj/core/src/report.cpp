#include "dascl/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"

namespace dascl {

namespace {

using nlohmann::json;

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json stats_to_json(const std::optional<CellStats>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"std", s->std}, {"n", s->values.size()}, {"values", s->values}};
}

std::optional<CellStats> stats_from_json(const json& doc) {
  if (doc.is_null()) return std::nullopt;
  return CellStats{doc.at("mean").get<double>(), doc.at("std").get<double>(),
                   doc.at("values").get<std::vector<double>>()};
}

// Column c of the table (targets, then Average).
const std::optional<CellStats>& column(const MethodRow& row, std::size_t c) {
  return c < row.per_target.size() ? row.per_target[c] : row.average;
}

}  // namespace

CellStats summarize(std::vector<double> values) {
  if (values.empty()) throw ContractError("summarize: no values");
  CellStats s;
  double acc = 0.0;
  for (const double v : values) acc += v;
  s.mean = acc / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (const double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  s.values = std::move(values);
  return s;
}

ReportFormat report_format_from_string(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  throw ContractError("unknown report format '" + name + "' (expected csv, json or markdown)");
}

std::string extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Json: return "json";
    case ReportFormat::Markdown: return "md";
  }
  return "txt";
}

std::string render_report(const MetricsReport& report, ReportFormat format) {
  std::ostringstream os;
  const std::size_t columns = report.targets.size() + 1;
  switch (format) {
    case ReportFormat::Json:
      os << to_json(report).dump(2) << '\n';
      break;
    case ReportFormat::Csv:
      os << "method,target,mean,std,n\n";
      for (const MethodRow& row : report.rows)
        for (std::size_t c = 0; c < columns; ++c) {
          const auto& cell = column(row, c);
          os << row.method << ',' << (c < report.targets.size() ? report.targets[c].name : "Average") << ',';
          if (cell) {
            os << full(cell->mean) << ',' << full(cell->std) << ',' << cell->values.size() << '\n';
          } else {
            os << ",,0\n";
          }
        }
      break;
    case ReportFormat::Markdown: {
      std::vector<std::optional<double>> best(columns);
      for (std::size_t c = 0; c < columns; ++c)
        for (const MethodRow& row : report.rows)
          if (const auto& cell = column(row, c); cell && (!best[c] || cell->mean > *best[c])) best[c] = cell->mean;
      os << "| Target |";
      for (const TargetColumn& t : report.targets) os << ' ' << t.name << " |";
      os << " Average |\n|---|";
      for (std::size_t c = 0; c < columns; ++c) os << "---|";
      os << '\n';
      for (const MethodRow& row : report.rows) {
        os << "| " << row.method << " |";
        for (std::size_t c = 0; c < columns; ++c) {
          const auto& cell = column(row, c);
          if (!cell) {
            os << " n/a |";
          } else if (best[c] && cell->mean == *best[c]) {
            os << " **" << fixed2(cell->mean) << "** |";
          } else {
            os << ' ' << fixed2(cell->mean) << " |";
          }
        }
        os << "\n| Std.dev |";
        for (std::size_t c = 0; c < columns; ++c) {
          const auto& cell = column(row, c);
          os << ' ' << (cell ? fixed2(cell->std) : std::string("n/a")) << " |";
        }
        os << '\n';
      }
      break;
    }
  }
  return os.str();
}

json to_json(const MetricsReport& report) {
  json targets = json::array();
  for (const TargetColumn& t : report.targets) targets.push_back({{"id", t.id}, {"name", t.name}});
  json rows = json::array();
  for (const MethodRow& row : report.rows) {
    json cells = json::array();
    for (const auto& cell : row.per_target) cells.push_back(stats_to_json(cell));
    rows.push_back({{"method", row.method}, {"per_target", cells}, {"average", stats_to_json(row.average)}});
  }
  json failures = json::array();
  for (const CellFailure& f : report.failures)
    failures.push_back({{"target", f.target}, {"method", f.method}, {"seed", f.seed}, {"message", f.message}});
  return {{"metric", report.metric},         {"unit", "percent"},
          {"targets", targets},              {"seeds", report.seeds},
          {"rows", rows},                    {"failures", failures},
          {"config_hash", report.config_hash}, {"completed_at", report.completed_at}};
}

MetricsReport metrics_report_from_json(const json& doc) {
  try {
    MetricsReport report;
    report.metric = doc.at("metric").get<std::string>();
    for (const auto& t : doc.at("targets"))
      report.targets.push_back(TargetColumn{t.at("id").get<int>(), t.at("name").get<std::string>()});
    report.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& r : doc.at("rows")) {
      MethodRow row;
      row.method = r.at("method").get<std::string>();
      for (const auto& cell : r.at("per_target")) row.per_target.push_back(stats_from_json(cell));
      row.average = stats_from_json(r.at("average"));
      report.rows.push_back(std::move(row));
    }
    for (const auto& f : doc.at("failures"))
      report.failures.push_back(CellFailure{f.at("target").get<int>(), f.at("method").get<std::string>(),
                                            f.at("seed").get<std::uint64_t>(), f.at("message").get<std::string>()});
    report.config_hash = doc.at("config_hash").get<std::string>();
    report.completed_at = doc.at("completed_at").get<std::string>();
    return report;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed metrics report: ") + e.what());
  }
}

}  // namespace dascl
