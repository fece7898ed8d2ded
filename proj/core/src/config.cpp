#include "dascl/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"

namespace dascl {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!keys.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

DatasetSpec dataset_from_json(const json& doc) {
  DatasetSpec spec;
  const std::string kind = doc.value("kind", std::string("glyphs"));
  if (kind == "glyphs") {
    check_keys(doc, "dataset", {"kind", "rotations", "n_per_class", "num_classes", "size", "seed"});
    spec.kind = DatasetKind::Glyphs;
    read(doc, "rotations", spec.glyphs.rotations);
    read(doc, "n_per_class", spec.glyphs.n_per_class);
    read(doc, "num_classes", spec.glyphs.num_classes);
    read(doc, "size", spec.glyphs.size);
    read(doc, "seed", spec.glyphs.seed);
  } else if (kind == "moons") {
    check_keys(doc, "dataset", {"kind", "rotations", "n", "noise_std", "seed"});
    spec.kind = DatasetKind::Moons;
    read(doc, "rotations", spec.moons.rotations);
    read(doc, "n", spec.moons.n);
    read(doc, "noise_std", spec.moons.noise_std);
    read(doc, "seed", spec.moons.seed);
  } else if (kind == "idx") {
    check_keys(doc, "dataset", {"kind", "domains"});
    spec.kind = DatasetKind::Idx;
    for (const auto& d : doc.at("domains")) {
      check_keys(d, "dataset.domains[]", {"name", "images", "labels", "limit"});
      IdxSource src;
      src.name = d.at("name").get<std::string>();
      src.images = d.at("images").get<std::string>();
      src.labels = d.at("labels").get<std::string>();
      read(d, "limit", src.limit);
      spec.idx.push_back(std::move(src));
    }
  } else {
    throw ConfigError("dataset: unknown kind '" + kind + "'");
  }
  return spec;
}

json dataset_to_json(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::Glyphs:
      return {{"kind", "glyphs"},
              {"rotations", spec.glyphs.rotations},
              {"n_per_class", spec.glyphs.n_per_class},
              {"num_classes", spec.glyphs.num_classes},
              {"size", spec.glyphs.size},
              {"seed", spec.glyphs.seed}};
    case DatasetKind::Moons:
      return {{"kind", "moons"},
              {"rotations", spec.moons.rotations},
              {"n", spec.moons.n},
              {"noise_std", spec.moons.noise_std},
              {"seed", spec.moons.seed}};
    case DatasetKind::Idx: {
      json domains = json::array();
      for (const IdxSource& s : spec.idx)
        domains.push_back(
            {{"name", s.name}, {"images", s.images.string()}, {"labels", s.labels.string()}, {"limit", s.limit}});
      return {{"kind", "idx"}, {"domains", domains}};
    }
  }
  return {};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("config: methods must not be empty");
  if (seeds.empty()) throw ConfigError("config: at least one seed required");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("config: validation_fraction must lie in (0, 1)");
  if (!(calibration.epsilon > 0.0 && calibration.epsilon < 1.0))
    throw ConfigError("config: calibration.epsilon must lie in (0, 1)");
  if (calibration.grid_steps < 2) throw ConfigError("config: calibration.grid_steps must be >= 2");
  if (!(calibration.probability >= 0.0 && calibration.probability <= 1.0))
    throw ConfigError("config: calibration.probability must lie in [0, 1]");
  const std::set<AugmentKind> unique_ops(ops.begin(), ops.end());
  if (unique_ops.size() != ops.size()) throw ConfigError("config: duplicate calibration ops");
  if (train.epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
  if (train.batch_size < 2) throw ConfigError("config: train.batch_size must be >= 2");
  if (!(train.optimizer.lr > 0.0)) throw ConfigError("config: train.lr must be positive");
  if (!(train.supcon.temperature > 0.0)) throw ConfigError("config: train.temperature must be positive");
  if (!(train.supcon.lambda >= 0.0)) throw ConfigError("config: train.lambda must be non-negative");
  const std::size_t domains = dataset.kind == DatasetKind::Glyphs  ? dataset.glyphs.rotations.size()
                              : dataset.kind == DatasetKind::Moons ? dataset.moons.rotations.size()
                                                                   : dataset.idx.size();
  if (domains < 2) throw ConfigError("config: at least two domains required");
  for (const int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= domains)
      throw ConfigError("config: target " + std::to_string(t) + " is not a domain id");
}

ExperimentConfig experiment_config_from_json(const json& doc) {
  try {
    check_keys(doc, "config",
               {"dataset", "targets", "methods", "seeds", "validation_fraction", "metric", "probe", "out_dir", "train",
                "calibration", "augment_ranges"});
    ExperimentConfig config;
    if (doc.contains("dataset")) config.dataset = dataset_from_json(doc.at("dataset"));
    read(doc, "targets", config.targets);
    if (doc.contains("methods")) {
      config.methods.clear();
      for (const auto& m : doc.at("methods")) config.methods.push_back(method_from_string(m.get<std::string>()));
    }
    read(doc, "seeds", config.seeds);
    read(doc, "validation_fraction", config.validation_fraction);
    if (doc.contains("metric")) config.metric = metric_from_string(doc.at("metric").get<std::string>());
    read(doc, "probe", config.probe);
    if (doc.contains("out_dir")) config.out_dir = doc.at("out_dir").get<std::string>();

    if (doc.contains("train")) {
      const json& t = doc.at("train");
      check_keys(t, "train",
                 {"epochs", "batch_size", "lr", "optimizer", "momentum", "lambda", "temperature", "hidden_dims",
                  "embed_dim", "proj_dim"});
      read(t, "epochs", config.train.epochs);
      read(t, "batch_size", config.train.batch_size);
      read(t, "lr", config.train.optimizer.lr);
      if (t.contains("optimizer"))
        config.train.optimizer.kind = optimizer_kind_from_string(t.at("optimizer").get<std::string>());
      read(t, "momentum", config.train.optimizer.momentum);
      read(t, "lambda", config.train.supcon.lambda);
      read(t, "temperature", config.train.supcon.temperature);
      read(t, "hidden_dims", config.train.model.hidden_dims);
      read(t, "embed_dim", config.train.model.embed_dim);
      read(t, "proj_dim", config.train.model.proj_dim);
    }
    if (doc.contains("calibration")) {
      const json& c = doc.at("calibration");
      check_keys(c, "calibration", {"epsilon", "grid_steps", "probability", "ops", "include_unsafe", "seed"});
      read(c, "epsilon", config.calibration.epsilon);
      read(c, "grid_steps", config.calibration.grid_steps);
      read(c, "probability", config.calibration.probability);
      read(c, "include_unsafe", config.include_unsafe);
      read(c, "seed", config.calibration.seed);
      if (c.contains("ops")) {
        config.ops.clear();
        for (const auto& op : c.at("ops")) {
          const AugmentKind kind = augment_kind_from_string(op.get<std::string>());
          if (is_binary(kind)) throw ConfigError("calibration.ops: flips are enabled with include_unsafe");
          config.ops.push_back(kind);
        }
      }
    }
    if (doc.contains("augment_ranges")) {
      const json& r = doc.at("augment_ranges");
      check_keys(r, "augment_ranges",
                 {"rotate_degrees", "translate_fraction", "scale_fraction", "noise_stddev", "brightness_shift",
                  "contrast_fraction", "cutout_fraction"});
      AugmentRanges& a = config.train.ranges;
      read(r, "rotate_degrees", a.rotate_degrees);
      read(r, "translate_fraction", a.translate_fraction);
      read(r, "scale_fraction", a.scale_fraction);
      read(r, "noise_stddev", a.noise_stddev);
      read(r, "brightness_shift", a.brightness_shift);
      read(r, "contrast_fraction", a.contrast_fraction);
      read(r, "cutout_fraction", a.cutout_fraction);
    }
    config.calibration.ranges = config.train.ranges;
    config.validate();
    return config;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json to_json(const ExperimentConfig& config) {
  json methods = json::array();
  for (const Method m : config.methods) methods.push_back(to_string(m));
  json ops = json::array();
  for (const AugmentKind k : config.ops) ops.push_back(to_string(k));
  const AugmentRanges& r = config.train.ranges;
  return {{"dataset", dataset_to_json(config.dataset)},
          {"targets", config.targets},
          {"methods", methods},
          {"seeds", config.seeds},
          {"validation_fraction", config.validation_fraction},
          {"metric", to_string(config.metric)},
          {"probe", config.probe},
          {"out_dir", config.out_dir.string()},
          {"train",
           {{"epochs", config.train.epochs},
            {"batch_size", config.train.batch_size},
            {"lr", config.train.optimizer.lr},
            {"optimizer", to_string(config.train.optimizer.kind)},
            {"momentum", config.train.optimizer.momentum},
            {"lambda", config.train.supcon.lambda},
            {"temperature", config.train.supcon.temperature},
            {"hidden_dims", config.train.model.hidden_dims},
            {"embed_dim", config.train.model.embed_dim},
            {"proj_dim", config.train.model.proj_dim}}},
          {"calibration",
           {{"epsilon", config.calibration.epsilon},
            {"grid_steps", config.calibration.grid_steps},
            {"probability", config.calibration.probability},
            {"ops", ops},
            {"include_unsafe", config.include_unsafe},
            {"seed", config.calibration.seed}}},
          {"augment_ranges",
           {{"rotate_degrees", r.rotate_degrees},
            {"translate_fraction", r.translate_fraction},
            {"scale_fraction", r.scale_fraction},
            {"noise_stddev", r.noise_stddev},
            {"brightness_shift", r.brightness_shift},
            {"contrast_fraction", r.contrast_fraction},
            {"cutout_fraction", r.cutout_fraction}}}};
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(doc);
}

std::string config_hash(const ExperimentConfig& config) {
  json doc = to_json(config);
  doc.erase("out_dir");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<DomainDataset> build_domains(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::Glyphs: return gen_glyph_domains(spec.glyphs);
    case DatasetKind::Moons: return gen_two_moons_domains(spec.moons);
    case DatasetKind::Idx: {
      std::vector<DomainDataset> out;
      for (std::size_t i = 0; i < spec.idx.size(); ++i) {
        const IdxSource& s = spec.idx[i];
        out.push_back(load_idx(s.images, s.labels, static_cast<int>(i), s.limit, s.name));
      }
      return out;
    }
  }
  return {};
}

std::vector<AugmentOp> policy_ops(const ExperimentConfig& config) {
  std::vector<AugmentOp> ops;
  for (const AugmentKind k : config.ops) ops.push_back(AugmentOp::of(k));
  if (config.include_unsafe) {
    ops.push_back(AugmentOp::of(AugmentKind::HFlip));
    ops.push_back(AugmentOp::of(AugmentKind::VFlip));
  }
  return ops;
}

}  // namespace dascl
