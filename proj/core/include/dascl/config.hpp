#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dascl/augment.hpp"
#include "dascl/datasets.hpp"
#include "dascl/trainer.hpp"

namespace dascl {

enum class DatasetKind { Glyphs, Moons, Idx };

struct IdxSource {
  std::string name;
  std::filesystem::path images;
  std::filesystem::path labels;
  std::size_t limit = 0;
};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Glyphs;
  GlyphParams glyphs;
  MoonsParams moons;
  std::vector<IdxSource> idx;
};

/// Everything needed to run the leave-one-domain-out matrix. The same
/// document configures the individual CLI subcommands.
struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<int> targets;  // empty: every domain in turn
  std::vector<Method> methods{Method::Erm, Method::Dascl};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double validation_fraction = 0.2;
  Metric metric = Metric::Accuracy;
  bool probe = true;
  std::filesystem::path out_dir = "dascl-out";

  /// Template for every run; method, seed, run id, policy and the data-dependent
  /// model dimensions are filled in per cell.
  TrainConfig train;
  CalibrationSettings calibration;
  std::vector<AugmentKind> ops = safe_augment_kinds();
  /// Adds the flips (probability `calibration.probability`, magnitude 1) to
  /// calibrated policies.
  bool include_unsafe = false;

  void validate() const;
};

/// Strict parse: unknown keys and wrongly typed values raise ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);
/// Missing file -> IoError; bad content -> ConfigError.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Stable 64-bit FNV-1a hash (hex) of the canonical config, excluding out_dir.
std::string config_hash(const ExperimentConfig& config);

std::vector<DomainDataset> build_domains(const DatasetSpec& spec);

/// Ops for calibrated policies (configured safe ops, plus flips if requested).
std::vector<AugmentOp> policy_ops(const ExperimentConfig& config);

}  // namespace dascl
