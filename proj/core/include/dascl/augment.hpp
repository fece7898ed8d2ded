#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dascl/rng.hpp"

namespace dascl {

/// Grayscale image, row-major, pixels in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool operator==(const Image&) const = default;
};

enum class AugmentKind { Rotate, Translate, Scale, GaussianNoise, Brightness, Contrast, Cutout, HFlip, VFlip };

std::string to_string(AugmentKind kind);
/// Throws FormatError for unknown names.
AugmentKind augment_kind_from_string(const std::string& name);
const std::vector<AugmentKind>& all_augment_kinds();
/// Every kind except the flips.
const std::vector<AugmentKind>& safe_augment_kinds();
/// Flips are binary; the normalized magnitude is ignored.
bool is_binary(AugmentKind kind);

struct AugmentOp {
  AugmentKind kind = AugmentKind::Rotate;
  /// False for transforms that can change a digit-like label (flips).
  bool safe = true;

  static AugmentOp of(AugmentKind kind);
  bool operator==(const AugmentOp&) const = default;
};

/// Physical range reached at normalized magnitude 1.
struct AugmentRanges {
  double rotate_degrees = 30.0;
  double translate_fraction = 0.25;  // of the width, each axis
  double scale_fraction = 0.3;       // factor 1 +/- m * this
  double noise_stddev = 0.3;
  double brightness_shift = 0.4;
  double contrast_fraction = 0.6;  // factor 1 +/- m * this
  double cutout_fraction = 0.5;    // square side, of the width

  bool operator==(const AugmentRanges&) const = default;
};

// Geometric primitives: inverse-mapped bilinear sampling around the image
// centre with zero padding. Sample coordinates within 1e-9 of the pixel
// lattice are snapped, so quarter turns are exact permutations.
Image rotate_image(const Image& img, double degrees);
Image translate_image(const Image& img, double dx, double dy);
Image scale_image(const Image& img, double factor);

/// Applies one op at normalized magnitude m in [0, 1]. Directions (signs),
/// noise and cutout position are drawn from `rng`. m == 0 returns the input
/// unchanged for every non-binary kind; flips ignore m.
Image apply_op(const Image& img, AugmentKind kind, double magnitude, Rng& rng, const AugmentRanges& ranges = {});

/// Point-cloud counterpart for 2-D datasets: only Rotate (about the origin) and
/// GaussianNoise act; every other kind is the identity.
std::vector<double> apply_op_point(std::span<const double> point, AugmentKind kind, double magnitude, Rng& rng,
                                   const AugmentRanges& ranges = {});

struct PolicyEntry {
  AugmentOp op;
  double probability = 0.5;
  double magnitude = 0.0;

  bool operator==(const PolicyEntry&) const = default;
};

struct AugmentationPolicy {
  std::vector<PolicyEntry> entries;

  /// Probabilities and magnitudes in [0, 1]; kinds distinct.
  void validate() const;
  bool operator==(const AugmentationPolicy&) const = default;
};

struct CompositeStep {
  AugmentKind kind = AugmentKind::Rotate;
  double magnitude = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const CompositeStep&) const = default;
};

/// Ordered transformation drawn from a policy; no steps means identity.
struct CompositeAugmentation {
  std::vector<CompositeStep> steps;

  bool is_identity() const { return steps.empty(); }
  bool operator==(const CompositeAugmentation&) const = default;
};

/// Includes entry k with probability p_k; an included entry gets a magnitude
/// drawn uniformly from (0, m_k] (binary kinds use 1) and its own seed.
CompositeAugmentation sample_composite(const AugmentationPolicy& policy, Rng& rng);

/// Folds apply_op over the steps. Per-step randomness is seeded from
/// (step seed, sample_index), so every sample in a batch gets its own draw
/// of the same composite.
Image apply_composite(const Image& img, const CompositeAugmentation& composite, std::uint64_t sample_index = 0,
                      const AugmentRanges& ranges = {});
std::vector<double> apply_composite_point(std::span<const double> point, const CompositeAugmentation& composite,
                                          std::uint64_t sample_index = 0, const AugmentRanges& ranges = {});

// ---------------------------------------------------------------------------
// Magnitude calibration
// ---------------------------------------------------------------------------

struct CalibrationPoint {
  double magnitude = 0.0;
  double accuracy = 0.0;
  double drop = 0.0;
};

struct OpCalibration {
  AugmentKind kind = AugmentKind::Rotate;
  double magnitude = 0.0;  // largest qualifying grid point
  std::vector<CalibrationPoint> grid;
};

/// Accuracy of the frozen baseline on validation inputs transformed by a single
/// op at the given magnitude. `grid_index` identifies the grid point so the
/// implementation can derive a deterministic seed from it.
using AccuracyOracle = std::function<double(AugmentKind kind, double magnitude, std::size_t grid_index)>;

/// Evaluates the uniform grid {0, 1/(g-1), ..., 1} and returns the largest
/// magnitude whose accuracy drop relative to magnitude 0 is <= epsilon.
OpCalibration calibrate_op(AugmentKind kind, const AccuracyOracle& accuracy, double epsilon, std::size_t grid_steps);

struct CalibrationSettings {
  double epsilon = 0.05;
  std::size_t grid_steps = 11;
  double probability = 0.5;
  std::uint64_t seed = 0;
  AugmentRanges ranges;
};

struct CalibrationResult {
  AugmentationPolicy policy;
  std::vector<OpCalibration> ops;
};

/// Calibrates every op independently and assembles a policy with the shared
/// application probability. Binary kinds are not calibrated; they enter the
/// policy with magnitude 1.
CalibrationResult calibrate_policy(std::span<const AugmentOp> ops, const AccuracyOracle& accuracy,
                                   const CalibrationSettings& settings);

// Policy file: {"entries": [{"kind", "probability", "magnitude", "safe"}]}.
nlohmann::json policy_to_json(const AugmentationPolicy& policy);
/// Rejects unknown kinds and unknown keys (FormatError).
AugmentationPolicy policy_from_json(const nlohmann::json& doc);
void save_policy(const std::filesystem::path& path, const AugmentationPolicy& policy);
AugmentationPolicy load_policy(const std::filesystem::path& path);

}  // namespace dascl
