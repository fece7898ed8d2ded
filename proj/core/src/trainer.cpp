#include "dascl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <limits>
#include <numeric>
#include <sstream>

#include "dascl/error.hpp"

namespace dascl {

std::string to_string(Method method) { return method == Method::Erm ? "erm" : "dascl"; }

Method method_from_string(const std::string& name) {
  if (name == "erm") return Method::Erm;
  if (name == "dascl") return Method::Dascl;
  throw ConfigError("unknown method '" + name + "' (expected erm or dascl)");
}

std::string to_string(Metric metric) { return metric == Metric::Accuracy ? "accuracy" : "auc"; }

Metric metric_from_string(const std::string& name) {
  if (name == "accuracy") return Metric::Accuracy;
  if (name == "auc") return Metric::Auc;
  throw ConfigError("unknown metric '" + name + "' (expected accuracy or auc)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("train config: epochs must be >= 1");
  if (batch_size < 2) throw ContractError("train config: batch_size must be >= 2");
  if (!(optimizer.lr > 0.0)) throw ContractError("train config: learning rate must be positive");
  optimizer.validate();
  supcon.validate();
  model.validate();
  if (method == Method::Dascl) policy.validate();
}

Batch make_batch(std::span<const Sample* const> samples, const CompositeAugmentation& composite, SampleKind kind,
                 std::size_t height, std::size_t width, const AugmentRanges& ranges) {
  const std::size_t b = samples.size();
  if (b < 2) throw ContractError("make_batch: need at least two samples");
  const std::size_t dim = height * width;
  std::vector<double> data(2 * b * dim);
  Batch batch;
  batch.labels.resize(2 * b);
  batch.view_tag.resize(2 * b);
  batch.augmented_is_copy = composite.is_identity();
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& s = *samples[i];
    if (s.x.size() != dim) throw ShapeError("make_batch: sample size mismatch");
    std::copy(s.x.begin(), s.x.end(), data.begin() + static_cast<std::ptrdiff_t>(i * dim));
    std::vector<double> view;
    if (composite.is_identity()) {
      view = s.x;
    } else if (kind == SampleKind::Image) {
      view = apply_composite(Image{height, width, s.x}, composite, i, ranges).pixels;
    } else {
      view = apply_composite_point(s.x, composite, i, ranges);
    }
    std::copy(view.begin(), view.end(), data.begin() + static_cast<std::ptrdiff_t>((b + i) * dim));
    batch.labels[i] = batch.labels[b + i] = s.label;
    batch.view_tag[i] = 0;
    batch.view_tag[b + i] = 1;
  }
  batch.inputs = Tensor({2 * b, dim}, std::move(data));
  return batch;
}

TrainStreams::TrainStreams(std::uint64_t seed)
    : shuffle(derive_seed(seed, {0x5348})), augment(derive_seed(seed, {0x4147})) {}

HistoryRow train_epoch(ModelBundle& model, Optimizer& optimizer, const DomainDataset& data, const TrainConfig& config,
                       TrainStreams& streams, std::size_t epoch) {
  const auto& samples = data.samples();
  if (samples.size() < 2) throw ContractError("train_epoch: need at least two training samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  streams.shuffle.shuffle(order.begin(), order.end());

  const bool dascl = config.method == Method::Dascl;
  const double lambda = config.effective_lambda();
  HistoryRow row;
  row.epoch = epoch;
  std::size_t batches = 0;
  std::vector<const Sample*> chosen;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t b = std::min(config.batch_size, order.size() - start);
    if (b < 2) break;
    chosen.clear();
    for (std::size_t k = 0; k < b; ++k) chosen.push_back(&samples[order[start + k]]);
    const CompositeAugmentation composite =
        dascl ? sample_composite(config.policy, streams.augment) : CompositeAugmentation{};
    const Batch batch = make_batch(chosen, composite, data.kind(), data.height(), data.width(), config.ranges);

    Tape tape;
    const ModelGraph graph(tape, model);
    const std::span<const int> all_labels(batch.labels);
    Var ce, h_all;
    if (batch.augmented_is_copy) {
      // Both views are identical: encode once and reuse the rows.
      std::vector<std::size_t> originals(b);
      std::iota(originals.begin(), originals.end(), 0);
      const Var x = gather_rows(tape.constant(batch.inputs), originals);
      const Var h = graph.features(x);
      ce = cross_entropy(graph.logits(h), all_labels.first(b));
      if (dascl) {
        const Var parts[] = {h, h};
        h_all = concat_rows(parts);
      }
    } else {
      h_all = graph.features(tape.constant(batch.inputs));
      ce = cross_entropy(graph.logits(h_all), all_labels);
    }
    Var loss = ce;
    double supcon_value = 0.0;
    if (dascl) {
      const Var sc = supcon_loss(graph.projection(h_all), all_labels, config.supcon.temperature);
      supcon_value = sc.value().item();
      if (lambda != 0.0) loss = add(ce, scale(sc, lambda));
    }
    const double total = loss.value().item();
    if (!std::isfinite(total)) {
      throw TrainingError("non-finite loss in run '" + config.run_id + "' at epoch " + std::to_string(epoch) +
                          ", batch " + std::to_string(batches));
    }
    const Gradients grads = tape.backward(loss);
    std::vector<const Tensor*> grad_ptrs;
    for (const Var& p : graph.params()) grad_ptrs.push_back(&grads.of(p));
    const auto params = model.parameters();
    optimizer.step(params, grad_ptrs);

    row.total += total;
    row.ce += ce.value().item();
    row.supcon += supcon_value;
    ++batches;
  }
  if (batches > 0) {
    row.total /= static_cast<double>(batches);
    row.ce /= static_cast<double>(batches);
    row.supcon /= static_cast<double>(batches);
  }
  row.val_acc = std::numeric_limits<double>::quiet_NaN();
  return row;
}

ModelBundle initial_model(const TrainConfig& config) {
  return init_model(config.model, derive_seed(config.seed, {0x494e4954}));
}

FitResult fit(const TrainConfig& config, std::span<const DomainDataset> sources, std::span<const DomainDataset> val) {
  config.validate();
  if (sources.empty()) throw ContractError("fit: no source domains");
  const DomainDataset pooled = pool_domains(sources, "sources");
  if (pooled.input_dim() != config.model.input_dim)
    throw ContractError("fit: model input_dim " + std::to_string(config.model.input_dim) + " does not match data (" +
                        std::to_string(pooled.input_dim()) + ")");
  if (pooled.num_classes() > config.model.num_classes) throw ContractError("fit: model has too few classes");

  FitResult result{initial_model(config), {}};
  Optimizer optimizer(config.optimizer);
  TrainStreams streams(config.seed);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    HistoryRow row = train_epoch(result.model, optimizer, pooled, config, streams, epoch);
    if (!val.empty()) row.val_acc = evaluate(result.model, val, Metric::Accuracy);
    result.history.push_back(row);
  }
  return result;
}

double accuracy_from_logits(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "accuracy");
  if (logits.rows() != labels.size()) throw ShapeError("accuracy: one label per row required");
  if (labels.empty()) throw ContractError("accuracy: empty dataset");
  const std::size_t c = logits.cols();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw ShapeError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ContractError("auc: need at least one positive and one negative");
  const double p = static_cast<double>(n_pos), n = static_cast<double>(n_neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double macro_auc_from_logits(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "auc");
  if (logits.rows() != labels.size()) throw ShapeError("auc: one label per row required");
  if (labels.empty()) throw ContractError("auc: empty dataset");
  const std::size_t n = logits.rows(), c = logits.cols();
  std::vector<double> probs(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx) / z;
  }
  double total = 0.0;
  std::size_t classes = 0;
  std::vector<double> scores(n);
  std::unique_ptr<bool[]> positive(new bool[n]);
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probs[i * c + j];
      positive[i] = labels[i] == static_cast<int>(j);
      pos += positive[i] ? 1 : 0;
    }
    if (pos == 0 || pos == n) continue;
    total += binary_auc(scores, std::span<const bool>(positive.get(), n));
    ++classes;
  }
  if (classes == 0) throw ContractError("auc: labels contain a single class");
  return total / static_cast<double>(classes);
}

namespace {

Tensor logits_in_chunks(const ModelBundle& model, const DomainDataset& data) {
  constexpr std::size_t kChunk = 512;
  const auto& samples = data.samples();
  if (samples.empty()) throw ContractError("evaluate: empty dataset '" + data.name() + "'");
  const std::size_t dim = data.input_dim();
  std::vector<double> out;
  out.reserve(samples.size() * model.config.num_classes);
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t rows = std::min(kChunk, samples.size() - start);
    std::vector<double> x;
    x.reserve(rows * dim);
    for (std::size_t i = start; i < start + rows; ++i) x.insert(x.end(), samples[i].x.begin(), samples[i].x.end());
    const Tensor logits = compute_logits(model, Tensor({rows, dim}, std::move(x)));
    out.insert(out.end(), logits.data().begin(), logits.data().end());
  }
  return Tensor({samples.size(), model.config.num_classes}, std::move(out));
}

}  // namespace

double evaluate(const ModelBundle& model, const DomainDataset& dataset, Metric metric) {
  const Tensor logits = logits_in_chunks(model, dataset);
  const std::vector<int> labels = dataset.labels();
  return metric == Metric::Accuracy ? accuracy_from_logits(logits, labels) : macro_auc_from_logits(logits, labels);
}

double evaluate(const ModelBundle& model, std::span<const DomainDataset> datasets, Metric metric) {
  if (datasets.empty()) throw ContractError("evaluate: no datasets");
  if (datasets.size() == 1) return evaluate(model, datasets.front(), metric);
  return evaluate(model, pool_domains(datasets), metric);
}

DomainDataset augment_dataset(const DomainDataset& data, AugmentKind kind, double magnitude, std::uint64_t seed,
                              const AugmentRanges& ranges) {
  std::vector<Sample> out = data.samples();
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(derive_seed(seed, {i}));
    if (data.kind() == SampleKind::Image) {
      out[i].x = apply_op(Image{data.height(), data.width(), out[i].x}, kind, magnitude, rng, ranges).pixels;
    } else {
      out[i].x = apply_op_point(out[i].x, kind, magnitude, rng, ranges);
    }
  }
  return DomainDataset(data.domain_id(), data.name() + "+" + to_string(kind), data.kind(), data.height(),
                       data.width(), data.num_classes(), std::move(out));
}

DomainDataset augment_dataset(const DomainDataset& data, const AugmentationPolicy& policy, std::uint64_t seed,
                              const AugmentRanges& ranges) {
  std::vector<Sample> out = data.samples();
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(derive_seed(seed, {i}));
    const CompositeAugmentation composite = sample_composite(policy, rng);
    if (data.kind() == SampleKind::Image) {
      out[i].x = apply_composite(Image{data.height(), data.width(), out[i].x}, composite, i, ranges).pixels;
    } else {
      out[i].x = apply_composite_point(out[i].x, composite, i, ranges);
    }
  }
  return DomainDataset(data.domain_id(), data.name() + "+aug", data.kind(), data.height(), data.width(),
                       data.num_classes(), std::move(out));
}

CalibrationResult calibrate_magnitudes(const ModelBundle& baseline, std::span<const DomainDataset> val,
                                       std::span<const AugmentOp> ops, const CalibrationSettings& settings) {
  if (val.empty()) throw ContractError("calibration: empty validation set");
  const DomainDataset pooled = pool_domains(val, "calibration");
  if (pooled.empty()) throw ContractError("calibration: empty validation set");
  const AccuracyOracle oracle = [&](AugmentKind kind, double magnitude, std::size_t grid_index) {
    if (magnitude == 0.0 && !is_binary(kind)) return evaluate(baseline, pooled, Metric::Accuracy);
    const std::uint64_t seed =
        derive_seed(settings.seed, {static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(grid_index)});
    return evaluate(baseline, augment_dataset(pooled, kind, magnitude, seed, settings.ranges), Metric::Accuracy);
  };
  return calibrate_policy(ops, oracle, settings);
}

std::string history_to_csv(const TrainHistory& history) {
  std::ostringstream os;
  os << "epoch,total,ce,supcon,val_acc\n";
  char buf[256];
  for (const HistoryRow& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.total, r.ce, r.supcon, r.val_acc);
    os << buf;
  }
  return os.str();
}

void save_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << history_to_csv(history);
}

}  // namespace dascl
