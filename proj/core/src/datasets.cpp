#include "dascl/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"
#include "dascl/rng.hpp"

namespace dascl {

DomainDataset::DomainDataset(int domain_id, std::string name, SampleKind kind, std::size_t height, std::size_t width,
                             std::size_t num_classes, std::vector<Sample> samples)
    : domain_id_(domain_id),
      name_(std::move(name)),
      kind_(kind),
      height_(height),
      width_(width),
      num_classes_(num_classes),
      samples_(std::move(samples)) {
  if (height_ == 0 || width_ == 0) throw ContractError("dataset: zero-sized inputs");
  if (num_classes_ < 2) throw ContractError("dataset: need at least two classes");
  for (const Sample& s : samples_) {
    if (s.x.size() != height_ * width_) throw ShapeError("dataset '" + name_ + "': inhomogeneous sample shapes");
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= num_classes_)
      throw ContractError("dataset '" + name_ + "': label " + std::to_string(s.label) + " out of range");
  }
}

const std::vector<Sample>& DomainDataset::samples() const {
  if (counter_) counter_->fetch_add(1, std::memory_order_relaxed);
  return samples_;
}

Image DomainDataset::image(std::size_t i) const {
  const Sample& s = samples().at(i);
  return Image{height_, width_, s.x};
}

Tensor DomainDataset::inputs() const {
  const auto& all = samples();
  if (all.empty()) throw ContractError("dataset '" + name_ + "' is empty");
  std::vector<double> data;
  data.reserve(all.size() * input_dim());
  for (const Sample& s : all) data.insert(data.end(), s.x.begin(), s.x.end());
  return Tensor({all.size(), input_dim()}, std::move(data));
}

std::vector<int> DomainDataset::labels() const {
  std::vector<int> out;
  for (const Sample& s : samples()) out.push_back(s.label);
  return out;
}

// ---------------------------------------------------------------------------
// Glyphs
// ---------------------------------------------------------------------------

namespace {

struct Point2 {
  double x, y;
};

struct Stroke {
  bool arc = false;
  Point2 a{}, b{};            // segment endpoints
  Point2 centre{};            // arc centre
  double radius = 0.0;
  double start = 0.0, end = 0.0;  // arc angles in radians, start < end
};

Stroke seg(double x0, double y0, double x1, double y1) { return Stroke{false, {x0, y0}, {x1, y1}, {}, 0, 0, 0}; }

Stroke arc(double cx, double cy, double r, double start_deg, double end_deg) {
  return Stroke{true, {}, {}, {cx, cy}, r, start_deg * std::numbers::pi / 180.0, end_deg * std::numbers::pi / 180.0};
}

const std::vector<std::vector<Stroke>>& glyph_templates() {
  static const std::vector<std::vector<Stroke>> templates{
      {arc(0, 0, 0.6, 0, 360)},                                                            // O
      {seg(-0.4, -0.6, -0.4, 0.6), seg(-0.4, 0.6, 0.5, 0.6)},                              // L
      {seg(-0.6, -0.6, 0.6, -0.6), seg(0, -0.6, 0, 0.6)},                                  // T
      {seg(-0.6, 0, 0.6, 0), seg(0, -0.6, 0, 0.6)},                                        // +
      {arc(0, 0, 0.6, 45, 315)},                                                           // C
      {seg(-0.5, -0.6, 0.5, -0.6), seg(0.5, -0.6, -0.5, 0.6), seg(-0.5, 0.6, 0.5, 0.6)},   // Z
      {seg(0, -0.6, 0.6, 0.5), seg(0.6, 0.5, -0.6, 0.5), seg(-0.6, 0.5, 0, -0.6)},         // triangle
      {seg(-0.5, -0.6, -0.5, 0.6), seg(0.5, -0.6, 0.5, 0.6), seg(-0.5, 0, 0.5, 0)},        // H
  };
  return templates;
}

double distance_to(const Stroke& s, Point2 p) {
  if (!s.arc) {
    const double vx = s.b.x - s.a.x, vy = s.b.y - s.a.y;
    const double len2 = vx * vx + vy * vy;
    const double t = std::clamp(((p.x - s.a.x) * vx + (p.y - s.a.y) * vy) / len2, 0.0, 1.0);
    return std::hypot(p.x - (s.a.x + t * vx), p.y - (s.a.y + t * vy));
  }
  const double dx = p.x - s.centre.x, dy = p.y - s.centre.y;
  double angle = std::atan2(dy, dx);
  if (angle < 0) angle += 2.0 * std::numbers::pi;
  if (angle >= s.start && angle <= s.end) return std::abs(std::hypot(dx, dy) - s.radius);
  auto endpoint = [&](double t) {
    return std::hypot(p.x - (s.centre.x + s.radius * std::cos(t)), p.y - (s.centre.y + s.radius * std::sin(t)));
  };
  return std::min(endpoint(s.start), endpoint(s.end));
}

std::uint64_t rotation_tag(double degrees) { return static_cast<std::uint64_t>(std::llround(degrees * 1000.0)); }

}  // namespace

GlyphInstance draw_glyph_instance(const GlyphParams& params, double rotation, std::size_t label, std::size_t index) {
  Rng rng(derive_seed(params.seed, {rotation_tag(rotation), label, index}));
  GlyphInstance inst;
  inst.template_index = label;
  inst.shift_x = static_cast<int>(rng.below(3)) - 1;
  inst.shift_y = static_cast<int>(rng.below(3)) - 1;
  inst.rotation_degrees = rotation;
  inst.intensity = rng.uniform(0.7, 1.0);
  inst.noise_seed = rng.next_u64();
  return inst;
}

Image render_glyph(const GlyphInstance& instance, std::size_t size) {
  const auto& strokes = glyph_templates().at(instance.template_index);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  const double half = static_cast<double>(size) / 2.0;
  const double theta = instance.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  Rng noise(instance.noise_seed);
  Image img{size, size, std::vector<double>(size * size, 0.0)};
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      // Undo the shift, then the rotation, to land in template coordinates.
      const double px = (static_cast<double>(x) - centre - instance.shift_x) / half;
      const double py = (static_cast<double>(y) - centre - instance.shift_y) / half;
      const Point2 q{c * px + s * py, -s * px + c * py};
      double dist = std::numeric_limits<double>::infinity();
      for (const Stroke& stroke : strokes) dist = std::min(dist, distance_to(stroke, q));
      const double coverage = std::clamp(1.5 - dist * half, 0.0, 1.0);
      const double jitter = noise.normal(0.0, 0.05);
      if (coverage > 0.0) img.pixels[y * size + x] = std::clamp(coverage * (instance.intensity + jitter), 0.0, 1.0);
    }
  return img;
}

std::vector<DomainDataset> gen_glyph_domains(const GlyphParams& params) {
  if (params.rotations.empty()) throw ContractError("glyphs: at least one rotation required");
  if (params.n_per_class == 0) throw ContractError("glyphs: n_per_class must be >= 1");
  if (params.num_classes < 2 || params.num_classes > kMaxGlyphClasses)
    throw ContractError("glyphs: num_classes must lie in [2, 8]");
  if (params.size < 4) throw ContractError("glyphs: image size must be >= 4");
  std::vector<std::uint64_t> tags;
  for (const double r : params.rotations) tags.push_back(rotation_tag(r));
  std::sort(tags.begin(), tags.end());
  if (std::adjacent_find(tags.begin(), tags.end()) != tags.end())
    throw ContractError("glyphs: rotations must be distinct");

  std::vector<DomainDataset> domains;
  for (std::size_t d = 0; d < params.rotations.size(); ++d) {
    const double rotation = params.rotations[d];
    std::vector<Sample> samples;
    samples.reserve(params.num_classes * params.n_per_class);
    for (std::size_t label = 0; label < params.num_classes; ++label)
      for (std::size_t i = 0; i < params.n_per_class; ++i) {
        const Image img = render_glyph(draw_glyph_instance(params, rotation, label, i), params.size);
        samples.push_back(Sample{img.pixels, static_cast<int>(label), static_cast<int>(d), samples.size()});
      }
    std::ostringstream name;
    name << "rot" << rotation;
    domains.emplace_back(static_cast<int>(d), name.str(), SampleKind::Image, params.size, params.size,
                         params.num_classes, std::move(samples));
  }
  return domains;
}

// ---------------------------------------------------------------------------
// Two moons
// ---------------------------------------------------------------------------

std::vector<DomainDataset> gen_two_moons_domains(const MoonsParams& params) {
  if (params.n < 2 || params.n % 2 != 0) throw ContractError("two moons: n must be even and >= 2");
  if (!(params.noise_std >= 0.0)) throw ContractError("two moons: noise_std must be non-negative");
  if (params.rotations.empty()) throw ContractError("two moons: at least one rotation required");
  const std::size_t half = params.n / 2;

  std::vector<Sample> base;
  for (int label = 0; label < 2; ++label)
    for (std::size_t i = 0; i < half; ++i) {
      const double t = half == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(half - 1);
      double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
      if (params.noise_std > 0.0) {
        Rng rng(derive_seed(params.seed, {static_cast<std::uint64_t>(label), i}));
        x += rng.normal(0.0, params.noise_std);
        y += rng.normal(0.0, params.noise_std);
      }
      base.push_back(Sample{{x, y}, label, 0, base.size()});
    }

  std::vector<DomainDataset> domains;
  for (std::size_t d = 0; d < params.rotations.size(); ++d) {
    const double theta = params.rotations[d] * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    std::vector<Sample> samples = base;
    for (Sample& sample : samples) {
      const double x = sample.x[0], y = sample.x[1];
      sample.x = {c * x - s * y, s * x + c * y};
      sample.domain_id = static_cast<int>(d);
    }
    std::ostringstream name;
    name << "moons" << params.rotations[d];
    domains.emplace_back(static_cast<int>(d), name.str(), SampleKind::Point, 1, 2, 2, std::move(samples));
  }
  return domains;
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw IoError("truncated IDX header in " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

DomainDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       int domain_id, std::size_t limit, std::string name) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  if (read_be32(images, 0, images_path) != 0x00000803u)
    throw FormatError("bad IDX image magic in " + images_path.string());
  if (read_be32(labels, 0, labels_path) != 0x00000801u)
    throw FormatError("bad IDX label magic in " + labels_path.string());
  const std::size_t count = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (count != label_count)
    throw ConsistencyError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                           std::to_string(label_count) + " labels");
  if (rows == 0 || cols == 0) throw FormatError("IDX images have zero size");
  if (images.size() < 16 + count * rows * cols) throw IoError("truncated IDX image data in " + images_path.string());
  if (labels.size() < 8 + count) throw IoError("truncated IDX label data in " + labels_path.string());

  const std::size_t n = limit == 0 ? count : std::min(limit, count);
  int max_label = 1;
  std::vector<Sample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.x.resize(rows * cols);
    for (std::size_t p = 0; p < rows * cols; ++p) s.x[p] = images[16 + i * rows * cols + p] / 255.0;
    s.label = labels[8 + i];
    s.domain_id = domain_id;
    s.index = i;
    max_label = std::max(max_label, s.label);
    samples.push_back(std::move(s));
  }
  return DomainDataset(domain_id, std::move(name), SampleKind::Image, rows, cols,
                       static_cast<std::size_t>(max_label) + 1, std::move(samples));
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kDomainsFormat = "dascl-domains";
constexpr const char* kBlobName = "data.bin";

void write_le64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  out.write(bytes, 8);
}

double read_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_domains(const std::filesystem::path& dir, std::span<const DomainDataset> domains) {
  std::filesystem::create_directories(dir);
  std::ofstream blob(dir / kBlobName, std::ios::binary);
  if (!blob) throw IoError("cannot write " + (dir / kBlobName).string());
  nlohmann::json entries = nlohmann::json::array();
  for (const DomainDataset& d : domains) {
    std::vector<int> labels, sample_domains;
    std::vector<std::size_t> indices;
    for (const Sample& s : d.samples()) {
      for (const double v : s.x) write_le64(blob, v);
      labels.push_back(s.label);
      sample_domains.push_back(s.domain_id);
      indices.push_back(s.index);
    }
    entries.push_back({{"domain_id", d.domain_id()},
                       {"name", d.name()},
                       {"kind", d.kind() == SampleKind::Image ? "image" : "point"},
                       {"height", d.height()},
                       {"width", d.width()},
                       {"num_classes", d.num_classes()},
                       {"count", d.size()},
                       {"labels", labels},
                       {"sample_domains", sample_domains},
                       {"indices", indices}});
  }
  if (!blob) throw IoError("failed writing " + (dir / kBlobName).string());
  std::ofstream manifest(dir / "manifest.json");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.json").string());
  manifest << nlohmann::json{{"format", kDomainsFormat}, {"version", 1}, {"blob", kBlobName}, {"domains", entries}}
                  .dump(1)
           << '\n';
}

std::vector<DomainDataset> load_domains(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot read " + (dir / "manifest.json").string());
  try {
    nlohmann::json doc;
    in >> doc;
    if (doc.at("format").get<std::string>() != kDomainsFormat || doc.at("version").get<int>() != 1)
      throw FormatError("unsupported dataset manifest in " + dir.string());
    const auto blob = read_file(dir / doc.at("blob").get<std::string>());
    std::size_t offset = 0;
    std::vector<DomainDataset> domains;
    for (const auto& e : doc.at("domains")) {
      const std::size_t h = e.at("height").get<std::size_t>();
      const std::size_t w = e.at("width").get<std::size_t>();
      const std::size_t count = e.at("count").get<std::size_t>();
      const auto labels = e.at("labels").get<std::vector<int>>();
      const auto sample_domains = e.at("sample_domains").get<std::vector<int>>();
      const auto indices = e.at("indices").get<std::vector<std::size_t>>();
      if (labels.size() != count || sample_domains.size() != count || indices.size() != count)
        throw ConsistencyError("manifest entry counts disagree");
      if (blob.size() < offset + count * h * w * 8) throw IoError("truncated dataset blob in " + dir.string());
      std::vector<Sample> samples(count);
      for (std::size_t i = 0; i < count; ++i) {
        samples[i].x.resize(h * w);
        for (std::size_t p = 0; p < h * w; ++p, offset += 8) samples[i].x[p] = read_le64(blob.data() + offset);
        samples[i].label = labels[i];
        samples[i].domain_id = sample_domains[i];
        samples[i].index = indices[i];
      }
      const std::string kind = e.at("kind").get<std::string>();
      if (kind != "image" && kind != "point") throw FormatError("unknown sample kind '" + kind + "'");
      domains.emplace_back(e.at("domain_id").get<int>(), e.at("name").get<std::string>(),
                           kind == "image" ? SampleKind::Image : SampleKind::Point, h, w,
                           e.at("num_classes").get<std::size_t>(), std::move(samples));
    }
    return domains;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset manifest in " + dir.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

DomainSplit leave_one_domain_out(std::span<const DomainDataset> domains, const SplitSpec& spec) {
  if (domains.size() < 2) throw ContractError("leave-one-domain-out needs at least two domains");
  if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0))
    throw ContractError("validation fraction must lie in (0, 1)");
  const auto target_it = std::find_if(domains.begin(), domains.end(),
                                      [&](const DomainDataset& d) { return d.domain_id() == spec.target_domain_id; });
  if (target_it == domains.end())
    throw ContractError("unknown target domain id " + std::to_string(spec.target_domain_id));

  DomainSplit split;
  split.target = *target_it;
  for (const DomainDataset& d : domains) {
    if (d.domain_id() == spec.target_domain_id) continue;
    const auto& samples = d.samples();
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
    std::vector<bool> in_val(samples.size(), false);
    for (auto& [label, positions] : by_class) {
      Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(d.domain_id()), static_cast<std::uint64_t>(label)}));
      rng.shuffle(positions.begin(), positions.end());
      const auto n_val = static_cast<std::size_t>(
          std::lround(spec.validation_fraction * static_cast<double>(positions.size())));
      for (std::size_t k = 0; k < n_val; ++k) in_val[positions[k]] = true;
    }
    std::vector<Sample> train, val;
    for (std::size_t i = 0; i < samples.size(); ++i) (in_val[i] ? val : train).push_back(samples[i]);
    split.train_sets.emplace_back(d.domain_id(), d.name() + "/train", d.kind(), d.height(), d.width(),
                                  d.num_classes(), std::move(train));
    split.val_sets.emplace_back(d.domain_id(), d.name() + "/val", d.kind(), d.height(), d.width(), d.num_classes(),
                                std::move(val));
  }
  return split;
}

DomainDataset pool_domains(std::span<const DomainDataset> parts, std::string name) {
  if (parts.empty()) throw ContractError("pool_domains: nothing to pool");
  const DomainDataset& first = parts.front();
  std::vector<Sample> samples;
  for (const DomainDataset& p : parts) {
    if (p.height() != first.height() || p.width() != first.width() || p.kind() != first.kind())
      throw ShapeError("pool_domains: datasets have different shapes");
    const auto& s = p.samples();
    samples.insert(samples.end(), s.begin(), s.end());
  }
  std::size_t classes = 0;
  for (const DomainDataset& p : parts) classes = std::max(classes, p.num_classes());
  return DomainDataset(parts.size() == 1 ? first.domain_id() : -1, std::move(name), first.kind(), first.height(),
                       first.width(), classes, std::move(samples));
}

}  // namespace dascl
