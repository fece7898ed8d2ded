#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dascl/augment.hpp"
#include "dascl/datasets.hpp"
#include "dascl/losses.hpp"
#include "dascl/model.hpp"
#include "dascl/optimizer.hpp"

namespace dascl {

enum class Method { Erm, Dascl };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct TrainConfig {
  Method method = Method::Dascl;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  SupConConfig supcon;
  AugmentationPolicy policy;  // ignored for ERM
  AugmentRanges ranges;
  ModelConfig model;
  std::uint64_t seed = 0;
  std::string run_id = "run";

  void validate() const;
  /// Lambda actually applied (0 for ERM).
  double effective_lambda() const { return method == Method::Erm ? 0.0 : supcon.lambda; }
};

struct HistoryRow {
  std::size_t epoch = 0;
  double total = 0.0;
  double ce = 0.0;
  double supcon = 0.0;
  double val_acc = 0.0;  // NaN when no validation data was given

  bool operator==(const HistoryRow&) const = default;
};

using TrainHistory = std::vector<HistoryRow>;

struct Batch {
  Tensor inputs;                // [2b, input_dim]: originals, then augmented copies
  std::vector<int> labels;      // [2b]
  std::vector<int> view_tag;    // 0 original, 1 augmented
  bool augmented_is_copy = false;  // identity composite: view 2 equals view 1
};

/// Two views per sample: the original and the composite-augmented copy. Point
/// datasets use the coordinate variants of the ops.
Batch make_batch(std::span<const Sample* const> samples, const CompositeAugmentation& composite, SampleKind kind,
                 std::size_t height, std::size_t width, const AugmentRanges& ranges = {});

/// Randomness used by training, split into independent streams so that the
/// batch order does not depend on whether composites are drawn.
struct TrainStreams {
  Rng shuffle;
  Rng augment;

  explicit TrainStreams(std::uint64_t seed);
};

/// One pass over `data` in shuffled mini-batches. The CE term uses both views
/// (only the first when the composite is the identity, since the copy adds
/// nothing); the contrastive term uses both. Throws TrainingError on a
/// non-finite loss. val_acc is left for the caller.
HistoryRow train_epoch(ModelBundle& model, Optimizer& optimizer, const DomainDataset& data, const TrainConfig& config,
                       TrainStreams& streams, std::size_t epoch);

struct FitResult {
  ModelBundle model;
  TrainHistory history;
};

/// Parameters fit() starts from (seeded from config.seed).
ModelBundle initial_model(const TrainConfig& config);

/// Initializes from config.seed, pools the sources and trains for
/// config.epochs. Validation accuracy is measured after every epoch.
FitResult fit(const TrainConfig& config, std::span<const DomainDataset> sources, std::span<const DomainDataset> val);

enum class Metric { Accuracy, Auc };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy_from_logits(const Tensor& logits, std::span<const int> labels);
/// Rank-based (Mann-Whitney) AUC; tied scores contribute 0.5. Requires at
/// least one positive and one negative.
double binary_auc(std::span<const double> scores, std::span<const bool> positive);
/// One-vs-rest AUC on softmax probabilities, averaged over classes that have
/// both positives and negatives.
double macro_auc_from_logits(const Tensor& logits, std::span<const int> labels);

double evaluate(const ModelBundle& model, const DomainDataset& dataset, Metric metric);
double evaluate(const ModelBundle& model, std::span<const DomainDataset> datasets, Metric metric);

/// Calibrates each op against a frozen baseline on the pooled validation
/// inputs. Stochastic ops at grid point j use seed derive_seed(settings.seed, {kind, j}).
CalibrationResult calibrate_magnitudes(const ModelBundle& baseline, std::span<const DomainDataset> val,
                                       std::span<const AugmentOp> ops, const CalibrationSettings& settings);

/// Transforms every sample with the same op and magnitude (per-sample draws
/// seeded from `seed`). Image datasets only.
DomainDataset augment_dataset(const DomainDataset& data, AugmentKind kind, double magnitude, std::uint64_t seed,
                              const AugmentRanges& ranges = {});
/// Transforms every sample with its own composite drawn from `policy`.
DomainDataset augment_dataset(const DomainDataset& data, const AugmentationPolicy& policy, std::uint64_t seed,
                              const AugmentRanges& ranges = {});

/// CSV with header "epoch,total,ce,supcon,val_acc".
std::string history_to_csv(const TrainHistory& history);
void save_history_csv(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace dascl
