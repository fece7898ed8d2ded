#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dascl/augment.hpp"
#include "dascl/tensor.hpp"

namespace dascl {

enum class SampleKind { Image, Point };

struct Sample {
  std::vector<double> x;  // flattened image or point coordinates
  int label = 0;
  int domain_id = 0;
  std::size_t index = 0;  // position within the originating domain

  bool operator==(const Sample&) const = default;
};

/// Samples of one domain (or a split of one). Reads through samples() can be
/// counted by attaching an access counter, which tests use to prove that a
/// withheld target is not touched early.
class DomainDataset {
 public:
  using AccessCounter = std::shared_ptr<std::atomic<std::size_t>>;

  DomainDataset() = default;
  DomainDataset(int domain_id, std::string name, SampleKind kind, std::size_t height, std::size_t width,
                std::size_t num_classes, std::vector<Sample> samples);

  int domain_id() const { return domain_id_; }
  const std::string& name() const { return name_; }
  SampleKind kind() const { return kind_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t input_dim() const { return height_ * width_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  const std::vector<Sample>& samples() const;
  void set_access_counter(AccessCounter counter) { counter_ = std::move(counter); }

  Image image(std::size_t i) const;
  /// [n, input_dim] matrix of all inputs.
  Tensor inputs() const;
  std::vector<int> labels() const;

 private:
  int domain_id_ = 0;
  std::string name_;
  SampleKind kind_ = SampleKind::Image;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<Sample> samples_;
  AccessCounter counter_;
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxGlyphClasses = 8;

struct GlyphParams {
  std::vector<double> rotations{0.0, 15.0, 30.0, 45.0};
  std::size_t n_per_class = 200;
  std::size_t num_classes = 5;
  std::size_t size = 16;
  std::uint64_t seed = 0;
};

/// Per-sample nuisance parameters of a rendered glyph.
struct GlyphInstance {
  std::size_t template_index = 0;
  int shift_x = 0;  // pixels, in [-1, 1]
  int shift_y = 0;
  double rotation_degrees = 0.0;
  double intensity = 1.0;
  std::uint64_t noise_seed = 0;
};

/// Draws the nuisance parameters of sample `index` of class `label` in the
/// domain with the given rotation. Independent of any domain id.
GlyphInstance draw_glyph_instance(const GlyphParams& params, double rotation, std::size_t label, std::size_t index);
/// Renders a stroke template onto a size x size grid.
Image render_glyph(const GlyphInstance& instance, std::size_t size);

/// One domain per rotation (domain_id = position in the list), C templates,
/// n_per_class samples each.
std::vector<DomainDataset> gen_glyph_domains(const GlyphParams& params);

struct MoonsParams {
  std::vector<double> rotations{0.0, 30.0, 60.0, 90.0};
  std::size_t n = 200;  // total per domain, even
  double noise_std = 0.1;
  std::uint64_t seed = 0;
};

/// Two interleaving half circles (radius 1, second offset by (1, 0.5)), noise
/// added, then rotated about the origin by the domain angle. The base cloud
/// (positions and noise) is shared across domains.
std::vector<DomainDataset> gen_two_moons_domains(const MoonsParams& params);

// ---------------------------------------------------------------------------
// IDX files (big-endian; images 0x00000803, labels 0x00000801)
// ---------------------------------------------------------------------------

/// Loads at most `limit` samples (0 = all); pixels are scaled to [0, 1].
DomainDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       int domain_id, std::size_t limit = 0, std::string name = "idx");

// ---------------------------------------------------------------------------
// Export: manifest.json + data.bin (float64 little-endian inputs, in order)
// ---------------------------------------------------------------------------

void save_domains(const std::filesystem::path& dir, std::span<const DomainDataset> domains);
std::vector<DomainDataset> load_domains(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Leave-one-domain-out splitting
// ---------------------------------------------------------------------------

struct SplitSpec {
  int target_domain_id = 0;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct DomainSplit {
  std::vector<DomainDataset> train_sets;  // one per source domain
  std::vector<DomainDataset> val_sets;    // one per source domain
  DomainDataset target;
};

/// Withholds the target domain; every other domain is split per class into
/// round(f * count) validation samples (seeded shuffle) and the rest training.
DomainSplit leave_one_domain_out(std::span<const DomainDataset> domains, const SplitSpec& spec);

/// Concatenates same-shaped datasets (domain ids of samples are kept).
DomainDataset pool_domains(std::span<const DomainDataset> parts, std::string name = "pooled");

}  // namespace dascl
