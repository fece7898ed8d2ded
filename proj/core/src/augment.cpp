#include "dascl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"

namespace dascl {

namespace {

// Accuracies are sample ratios; differences below this are rounding noise.
constexpr double kDropTolerance = 1e-12;
constexpr double kSnap = 1e-9;

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kSnap ? r : v;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Bilinear sample with zero padding outside the image.
double sample_bilinear(const Image& img, double sy, double sx) {
  sy = snap(sy);
  sx = snap(sx);
  const double fy = std::floor(sy);
  const double fx = std::floor(sx);
  const double wy = sy - fy;
  const double wx = sx - fx;
  const auto y0 = static_cast<long>(fy);
  const auto x0 = static_cast<long>(fx);
  const auto h = static_cast<long>(img.height);
  const auto w = static_cast<long>(img.width);
  auto pixel = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= h || x >= w) return 0.0;
    return img.pixels[static_cast<std::size_t>(y * w + x)];
  };
  double value = 0.0;
  if (wy < 1.0 && wx < 1.0) value += (1.0 - wy) * (1.0 - wx) * pixel(y0, x0);
  if (wy < 1.0 && wx > 0.0) value += (1.0 - wy) * wx * pixel(y0, x0 + 1);
  if (wy > 0.0 && wx < 1.0) value += wy * (1.0 - wx) * pixel(y0 + 1, x0);
  if (wy > 0.0 && wx > 0.0) value += wy * wx * pixel(y0 + 1, x0 + 1);
  return value;
}

// out(y, x) = img(source(y - cy, x - cx) + centre)
template <typename Map>
Image remap(const Image& img, Map&& source) {
  Image out{img.height, img.width, std::vector<double>(img.pixels.size())};
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const auto [sy, sx] = source(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
      out.pixels[y * img.width + x] = clamp01(sample_bilinear(img, sy + cy, sx + cx));
    }
  return out;
}

Image map_pixels(const Image& img, const std::function<double(double)>& f) {
  Image out = img;
  for (double& p : out.pixels) p = clamp01(f(p));
  return out;
}

void validate_magnitude(double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ContractError("augmentation magnitude must lie in [0, 1]");
}

}  // namespace

std::string to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::Rotate: return "rotate";
    case AugmentKind::Translate: return "translate";
    case AugmentKind::Scale: return "scale";
    case AugmentKind::GaussianNoise: return "gaussian_noise";
    case AugmentKind::Brightness: return "brightness";
    case AugmentKind::Contrast: return "contrast";
    case AugmentKind::Cutout: return "cutout";
    case AugmentKind::HFlip: return "hflip";
    case AugmentKind::VFlip: return "vflip";
  }
  return "unknown";
}

AugmentKind augment_kind_from_string(const std::string& name) {
  for (const AugmentKind kind : all_augment_kinds())
    if (to_string(kind) == name) return kind;
  throw FormatError("unknown augmentation kind '" + name + "'");
}

const std::vector<AugmentKind>& all_augment_kinds() {
  static const std::vector<AugmentKind> kinds{AugmentKind::Rotate,     AugmentKind::Translate,
                                              AugmentKind::Scale,      AugmentKind::GaussianNoise,
                                              AugmentKind::Brightness, AugmentKind::Contrast,
                                              AugmentKind::Cutout,     AugmentKind::HFlip,
                                              AugmentKind::VFlip};
  return kinds;
}

const std::vector<AugmentKind>& safe_augment_kinds() {
  static const std::vector<AugmentKind> kinds{AugmentKind::Rotate,     AugmentKind::Translate,
                                              AugmentKind::Scale,      AugmentKind::GaussianNoise,
                                              AugmentKind::Brightness, AugmentKind::Contrast,
                                              AugmentKind::Cutout};
  return kinds;
}

bool is_binary(AugmentKind kind) { return kind == AugmentKind::HFlip || kind == AugmentKind::VFlip; }

AugmentOp AugmentOp::of(AugmentKind kind) { return AugmentOp{kind, !is_binary(kind)}; }

Image rotate_image(const Image& img, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return remap(img, [c, s](double dy, double dx) { return std::pair{-s * dx + c * dy, c * dx + s * dy}; });
}

Image translate_image(const Image& img, double dx, double dy) {
  return remap(img, [dx, dy](double oy, double ox) { return std::pair{oy - dy, ox - dx}; });
}

Image scale_image(const Image& img, double factor) {
  if (!(factor > 0.0)) throw ContractError("scale_image: factor must be positive");
  return remap(img, [factor](double dy, double dx) { return std::pair{dy / factor, dx / factor}; });
}

Image apply_op(const Image& img, AugmentKind kind, double magnitude, Rng& rng, const AugmentRanges& ranges) {
  validate_magnitude(magnitude);
  if (img.pixels.size() != img.height * img.width) throw ShapeError("apply_op: image size mismatch");
  if (!is_binary(kind) && magnitude == 0.0) return img;
  const double w = static_cast<double>(img.width);
  switch (kind) {
    case AugmentKind::Rotate:
      return rotate_image(img, rng.sign() * magnitude * ranges.rotate_degrees);
    case AugmentKind::Translate: {
      const double shift = magnitude * ranges.translate_fraction * w;
      const double dx = rng.sign() * shift;
      const double dy = rng.sign() * shift;
      return translate_image(img, dx, dy);
    }
    case AugmentKind::Scale:
      return scale_image(img, 1.0 + rng.sign() * magnitude * ranges.scale_fraction);
    case AugmentKind::GaussianNoise: {
      const double sd = magnitude * ranges.noise_stddev;
      return map_pixels(img, [&](double p) { return p + rng.normal(0.0, sd); });
    }
    case AugmentKind::Brightness: {
      const double shift = rng.sign() * magnitude * ranges.brightness_shift;
      return map_pixels(img, [shift](double p) { return p + shift; });
    }
    case AugmentKind::Contrast: {
      const double factor = 1.0 + rng.sign() * magnitude * ranges.contrast_fraction;
      double mean = 0.0;
      for (const double p : img.pixels) mean += p;
      mean /= static_cast<double>(img.pixels.size());
      return map_pixels(img, [mean, factor](double p) { return mean + factor * (p - mean); });
    }
    case AugmentKind::Cutout: {
      const auto side = std::min<std::size_t>(
          static_cast<std::size_t>(std::lround(magnitude * ranges.cutout_fraction * w)),
          std::min(img.height, img.width));
      if (side == 0) return img;
      const std::size_t top = rng.below(img.height - side + 1);
      const std::size_t left = rng.below(img.width - side + 1);
      Image out = img;
      for (std::size_t y = top; y < top + side; ++y)
        for (std::size_t x = left; x < left + side; ++x) out.pixels[y * img.width + x] = 0.0;
      return out;
    }
    case AugmentKind::HFlip: {
      Image out = img;
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
          out.pixels[y * img.width + x] = img.pixels[y * img.width + (img.width - 1 - x)];
      return out;
    }
    case AugmentKind::VFlip: {
      Image out = img;
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
          out.pixels[y * img.width + x] = img.pixels[(img.height - 1 - y) * img.width + x];
      return out;
    }
  }
  return img;
}

std::vector<double> apply_op_point(std::span<const double> point, AugmentKind kind, double magnitude, Rng& rng,
                                   const AugmentRanges& ranges) {
  validate_magnitude(magnitude);
  std::vector<double> out(point.begin(), point.end());
  if (magnitude == 0.0) return out;
  if (kind == AugmentKind::Rotate) {
    if (out.size() != 2) throw ShapeError("point rotation requires 2-D points");
    const double theta = rng.sign() * magnitude * ranges.rotate_degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    out = {c * point[0] - s * point[1], s * point[0] + c * point[1]};
  } else if (kind == AugmentKind::GaussianNoise) {
    const double sd = magnitude * ranges.noise_stddev;
    for (double& v : out) v += rng.normal(0.0, sd);
  }
  return out;
}

void AugmentationPolicy::validate() const {
  std::set<AugmentKind> seen;
  for (const PolicyEntry& e : entries) {
    if (!(e.probability >= 0.0 && e.probability <= 1.0))
      throw ContractError("policy: probability for " + to_string(e.op.kind) + " outside [0, 1]");
    if (!(e.magnitude >= 0.0 && e.magnitude <= 1.0))
      throw ContractError("policy: magnitude for " + to_string(e.op.kind) + " outside [0, 1]");
    if (!seen.insert(e.op.kind).second) throw ContractError("policy: duplicate kind " + to_string(e.op.kind));
  }
}

CompositeAugmentation sample_composite(const AugmentationPolicy& policy, Rng& rng) {
  policy.validate();
  CompositeAugmentation composite;
  for (const PolicyEntry& e : policy.entries) {
    if (!rng.bernoulli(e.probability)) continue;
    // 1 - u lies in (0, 1], so the magnitude lies in (0, m_k].
    const double u = rng.uniform();
    const double magnitude = is_binary(e.op.kind) ? 1.0 : e.magnitude * (1.0 - u);
    composite.steps.push_back(CompositeStep{e.op.kind, magnitude, rng.next_u64()});
  }
  return composite;
}

Image apply_composite(const Image& img, const CompositeAugmentation& composite, std::uint64_t sample_index,
                      const AugmentRanges& ranges) {
  Image out = img;
  for (const CompositeStep& step : composite.steps) {
    Rng rng(derive_seed(step.seed, {sample_index}));
    out = apply_op(out, step.kind, step.magnitude, rng, ranges);
  }
  return out;
}

std::vector<double> apply_composite_point(std::span<const double> point, const CompositeAugmentation& composite,
                                          std::uint64_t sample_index, const AugmentRanges& ranges) {
  std::vector<double> out(point.begin(), point.end());
  for (const CompositeStep& step : composite.steps) {
    Rng rng(derive_seed(step.seed, {sample_index}));
    out = apply_op_point(out, step.kind, step.magnitude, rng, ranges);
  }
  return out;
}

OpCalibration calibrate_op(AugmentKind kind, const AccuracyOracle& accuracy, double epsilon, std::size_t grid_steps) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ContractError("calibration: epsilon must lie in (0, 1)");
  if (grid_steps < 2) throw ContractError("calibration: grid_steps must be >= 2");
  OpCalibration result;
  result.kind = kind;
  const double reference = accuracy(kind, 0.0, 0);
  for (std::size_t j = 0; j < grid_steps; ++j) {
    const double m = static_cast<double>(j) / static_cast<double>(grid_steps - 1);
    const double acc = j == 0 ? reference : accuracy(kind, m, j);
    const double drop = reference - acc;
    result.grid.push_back(CalibrationPoint{m, acc, drop});
    if (drop <= epsilon + kDropTolerance) result.magnitude = m;
  }
  return result;
}

CalibrationResult calibrate_policy(std::span<const AugmentOp> ops, const AccuracyOracle& accuracy,
                                   const CalibrationSettings& settings) {
  if (!(settings.probability >= 0.0 && settings.probability <= 1.0))
    throw ContractError("calibration: probability must lie in [0, 1]");
  CalibrationResult result;
  for (const AugmentOp& op : ops) {
    double magnitude = 1.0;
    if (!is_binary(op.kind)) {
      OpCalibration cal = calibrate_op(op.kind, accuracy, settings.epsilon, settings.grid_steps);
      magnitude = cal.magnitude;
      result.ops.push_back(std::move(cal));
    }
    result.policy.entries.push_back(PolicyEntry{op, settings.probability, magnitude});
  }
  result.policy.validate();
  return result;
}

nlohmann::json policy_to_json(const AugmentationPolicy& policy) {
  nlohmann::json entries = nlohmann::json::array();
  for (const PolicyEntry& e : policy.entries) {
    entries.push_back({{"kind", to_string(e.op.kind)},
                       {"probability", e.probability},
                       {"magnitude", e.magnitude},
                       {"safe", e.op.safe}});
  }
  return {{"entries", std::move(entries)}};
}

AugmentationPolicy policy_from_json(const nlohmann::json& doc) {
  try {
    for (const auto& [key, _] : doc.items())
      if (key != "entries") throw FormatError("policy: unknown key '" + key + "'");
    AugmentationPolicy policy;
    for (const auto& entry : doc.at("entries")) {
      for (const auto& [key, _] : entry.items())
        if (key != "kind" && key != "probability" && key != "magnitude" && key != "safe")
          throw FormatError("policy entry: unknown key '" + key + "'");
      const AugmentKind kind = augment_kind_from_string(entry.at("kind").get<std::string>());
      AugmentOp op = AugmentOp::of(kind);
      if (entry.contains("safe")) op.safe = entry.at("safe").get<bool>();
      policy.entries.push_back(
          PolicyEntry{op, entry.at("probability").get<double>(), entry.at("magnitude").get<double>()});
    }
    policy.validate();
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed policy: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid policy: ") + e.what());
  }
}

void save_policy(const std::filesystem::path& path, const AugmentationPolicy& policy) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write policy " + path.string());
  out << policy_to_json(policy).dump(2) << '\n';
}

AugmentationPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read policy " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("policy " + path.string() + " is not valid JSON: " + e.what());
  }
  return policy_from_json(doc);
}

}  // namespace dascl
