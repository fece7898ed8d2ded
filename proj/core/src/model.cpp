#include "dascl/model.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"
#include "dascl/rng.hpp"

namespace dascl {

namespace {

constexpr const char* kCheckpointFormat = "dascl-checkpoint";
constexpr int kCheckpointVersion = 1;

Dense make_dense(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  return Dense{Tensor::randn({fan_in, fan_out}, seed, std::sqrt(2.0 / static_cast<double>(fan_in))),
               Tensor::zeros({1, fan_out})};
}

nlohmann::json tensor_to_json(const std::string& name, const Tensor& t) {
  return {{"name", name}, {"shape", t.shape()}, {"data", t.values()}};
}

}  // namespace

void ModelConfig::validate() const {
  if (input_dim == 0 || embed_dim == 0 || proj_dim == 0) throw ContractError("model config: dimensions must be >= 1");
  for (const std::size_t h : hidden_dims)
    if (h == 0) throw ContractError("model config: hidden dimensions must be >= 1");
  if (num_classes < 2) throw ContractError("model config: num_classes must be >= 2");
}

std::vector<Tensor*> ModelBundle::parameters() {
  std::vector<Tensor*> out;
  for (Dense& layer : encoder) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  for (Dense* layer : {&proj_hidden, &proj_out, &classifier}) {
    out.push_back(&layer->weight);
    out.push_back(&layer->bias);
  }
  return out;
}

std::vector<const Tensor*> ModelBundle::parameters() const {
  auto mutable_params = const_cast<ModelBundle*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::vector<std::string> ModelBundle::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    names.push_back("encoder." + std::to_string(i) + ".weight");
    names.push_back("encoder." + std::to_string(i) + ".bias");
  }
  for (const char* head : {"proj_hidden", "proj_out", "classifier"}) {
    names.push_back(std::string(head) + ".weight");
    names.push_back(std::string(head) + ".bias");
  }
  return names;
}

ModelBundle init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelBundle model;
  model.config = config;
  std::uint64_t layer = 0;
  std::size_t fan_in = config.input_dim;
  for (const std::size_t width : config.hidden_dims) {
    model.encoder.push_back(make_dense(fan_in, width, derive_seed(seed, {layer++})));
    fan_in = width;
  }
  model.encoder.push_back(make_dense(fan_in, config.embed_dim, derive_seed(seed, {layer++})));
  model.proj_hidden = make_dense(config.embed_dim, config.embed_dim, derive_seed(seed, {layer++}));
  model.proj_out = make_dense(config.embed_dim, config.proj_dim, derive_seed(seed, {layer++}));
  model.classifier = make_dense(config.embed_dim, config.num_classes, derive_seed(seed, {layer++}));
  return model;
}

ModelGraph::ModelGraph(Tape& tape, const ModelBundle& model, bool track) : tape_(&tape), config_(model.config) {
  for (const Tensor* p : model.parameters()) params_.push_back(track ? tape.parameter(*p) : tape.constant(*p));
}

Var ModelGraph::dense(std::size_t layer, const Var& x) const {
  return add_row_bias(matmul(x, params_[2 * layer]), params_[2 * layer + 1]);
}

Var ModelGraph::features(const Var& x) const {
  if (x.value().rank() != 2 || x.value().cols() != config_.input_dim) {
    throw ShapeError("features: expected [n, " + std::to_string(config_.input_dim) + "] input, got " +
                     shape_string(x.shape()));
  }
  const std::size_t layers = config_.hidden_dims.size() + 1;
  Var h = x;
  for (std::size_t i = 0; i < layers; ++i) {
    h = dense(i, h);
    if (i + 1 < layers) h = relu(h);
  }
  return h;
}

Var ModelGraph::projection(const Var& h) const {
  const std::size_t first = config_.hidden_dims.size() + 1;
  if (h.value().rank() != 2 || h.value().cols() != config_.embed_dim) throw ShapeError("projection: bad feature shape");
  return l2_normalize_rows(dense(first + 1, relu(dense(first, h))), 1e-12);
}

Var ModelGraph::logits(const Var& h) const {
  const std::size_t first = config_.hidden_dims.size() + 1;
  if (h.value().rank() != 2 || h.value().cols() != config_.embed_dim) throw ShapeError("logits: bad feature shape");
  return dense(first + 2, h);
}

Tensor compute_features(const ModelBundle& model, const Tensor& inputs) {
  Tape tape;
  ModelGraph graph(tape, model, false);
  return graph.features(tape.constant(inputs)).value();
}

Tensor compute_logits(const ModelBundle& model, const Tensor& inputs) {
  Tape tape;
  ModelGraph graph(tape, model, false);
  return graph.logits(graph.features(tape.constant(inputs))).value();
}

nlohmann::json to_json(const ModelConfig& config) {
  return {{"input_dim", config.input_dim},
          {"hidden_dims", config.hidden_dims},
          {"embed_dim", config.embed_dim},
          {"proj_dim", config.proj_dim},
          {"num_classes", config.num_classes}};
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
  ModelConfig config;
  config.input_dim = doc.at("input_dim").get<std::size_t>();
  config.hidden_dims = doc.at("hidden_dims").get<std::vector<std::size_t>>();
  config.embed_dim = doc.at("embed_dim").get<std::size_t>();
  config.proj_dim = doc.at("proj_dim").get<std::size_t>();
  config.num_classes = doc.at("num_classes").get<std::size_t>();
  config.validate();
  return config;
}

nlohmann::json model_to_json(const ModelBundle& model) {
  nlohmann::json params = nlohmann::json::array();
  const auto names = model.parameter_names();
  const auto tensors = model.parameters();
  for (std::size_t i = 0; i < tensors.size(); ++i) params.push_back(tensor_to_json(names[i], *tensors[i]));
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config", to_json(model.config)},
          {"parameters", std::move(params)}};
}

ModelBundle model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) throw FormatError("not a model checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " + doc.at("version").dump());
    ModelBundle model = init_model(model_config_from_json(doc.at("config")), 0);
    const auto& params = doc.at("parameters");
    auto tensors = model.parameters();
    const auto names = model.parameter_names();
    if (params.size() != tensors.size()) throw FormatError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (params[i].at("name").get<std::string>() != names[i])
        throw FormatError("checkpoint parameter " + std::to_string(i) + " should be " + names[i]);
      Tensor loaded(params[i].at("shape").get<Shape>(), params[i].at("data").get<std::vector<double>>());
      if (loaded.shape() != tensors[i]->shape()) throw FormatError("checkpoint shape mismatch for " + names[i]);
      *tensors[i] = std::move(loaded);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << model_to_json(model).dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace dascl
