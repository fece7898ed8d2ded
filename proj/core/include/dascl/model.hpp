#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dascl/autodiff.hpp"
#include "dascl/tensor.hpp"

namespace dascl {

struct ModelConfig {
  std::size_t input_dim = 256;
  std::vector<std::size_t> hidden_dims{128, 64};
  std::size_t embed_dim = 64;
  std::size_t proj_dim = 32;
  std::size_t num_classes = 5;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Fully connected layer: y = x W + b with W [in, out] and b [1, out].
struct Dense {
  Tensor weight;
  Tensor bias;
};

/// Encoder MLP, projection head (one relu hidden layer of width embed_dim,
/// then a linear map to proj_dim) and a linear classifier on the features.
struct ModelBundle {
  ModelConfig config;
  std::vector<Dense> encoder;
  Dense proj_hidden;
  Dense proj_out;
  Dense classifier;

  /// Every parameter tensor in a fixed order (encoder, projection, classifier; weight before bias).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

ModelBundle init_model(const ModelConfig& config, std::uint64_t seed);

/// A ModelBundle's parameters bound onto a tape.
class ModelGraph {
 public:
  /// With `track` false the parameters are recorded as constants (inference).
  ModelGraph(Tape& tape, const ModelBundle& model, bool track = true);

  /// Encoder features h [n, embed_dim]; relu between layers, none on the output.
  Var features(const Var& x) const;
  /// Unit-norm projections z [n, proj_dim].
  Var projection(const Var& h) const;
  Var logits(const Var& h) const;

  /// Parameter Vars in ModelBundle::parameters() order.
  const std::vector<Var>& params() const { return params_; }

 private:
  Var dense(std::size_t layer, const Var& x) const;

  Tape* tape_;
  ModelConfig config_;
  std::vector<Var> params_;
};

/// Inference helpers (no gradient tracking).
Tensor compute_features(const ModelBundle& model, const Tensor& inputs);
Tensor compute_logits(const ModelBundle& model, const Tensor& inputs);

// Checkpoints: versioned JSON holding the config and flat parameter arrays.
// Doubles are written in shortest round-trip form, so load(save(m)) == m exactly.
nlohmann::json model_to_json(const ModelBundle& model);
ModelBundle model_from_json(const nlohmann::json& doc);
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model);
ModelBundle load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

}  // namespace dascl
