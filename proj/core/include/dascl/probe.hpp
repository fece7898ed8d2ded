#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dascl/datasets.hpp"
#include "dascl/model.hpp"
#include "dascl/tensor.hpp"

namespace dascl {

struct ProbeSettings {
  std::size_t steps = 200;
  double learning_rate = 0.1;
};

/// Full outcome of one domain-discrimination probe.
struct ProbeOutcome {
  std::vector<std::size_t> train_a, test_a, train_b, test_b;  // row indices
  std::vector<double> weights;  // on standardized features
  double bias = 0.0;
  double balanced_test_error = 0.5;
  double distance = 0.0;
};

/// Splits each feature set 50/50 (seeded), standardizes with probe-train
/// statistics, fits a logistic discriminator by full-batch gradient descent and
/// reports the balanced test error and max(0, 2(1 - 2 err)).
ProbeOutcome run_domain_probe(const Tensor& features_a, const Tensor& features_b, std::uint64_t seed,
                              const ProbeSettings& settings = {});

/// Proxy A-distance in [0, 2]. Requires >= 10 rows per side and equal widths.
double proxy_a_distance(const Tensor& features_a, const Tensor& features_b, std::uint64_t seed,
                        const ProbeSettings& settings = {});

struct DistanceReport {
  std::vector<int> domain_ids;
  std::vector<std::string> names;
  std::vector<std::vector<double>> matrix;  // symmetric, zero diagonal, entries in [0, 2]
  std::uint64_t seed = 0;
  std::size_t feature_dim = 0;
  std::string run_id;

  bool operator==(const DistanceReport&) const = default;
};

/// D[i][j] for i < j uses seed derive_seed(seed, {i, j}); the lower triangle mirrors it.
DistanceReport pairwise_feature_distances(std::span<const Tensor> features, std::vector<int> ids,
                                          std::vector<std::string> names, std::uint64_t seed);
/// Encodes every domain with the model's feature extractor first.
DistanceReport pairwise_distances(std::span<const DomainDataset> domains, const ModelBundle& model,
                                  std::uint64_t seed);

/// Mean of the strict upper triangle over the listed index pairs.
double mean_distance(const DistanceReport& report, std::span<const std::pair<std::size_t, std::size_t>> pairs);

nlohmann::json to_json(const DistanceReport& report);
DistanceReport distance_report_from_json(const nlohmann::json& doc);

}  // namespace dascl
