#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "dascl/datasets.hpp"
#include "dascl/error.hpp"
#include "support/support.hpp"

namespace dascl {
namespace {

namespace fs = std::filesystem;

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<unsigned char>((v >> shift) & 0xffu));
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

struct IdxFixture {
  testing::TempDir dir{"idx"};
  fs::path images = dir.path() / "images.idx";
  fs::path labels = dir.path() / "labels.idx";
  std::vector<unsigned char> pixels;
  std::vector<unsigned char> label_bytes{3, 0, 7};

  IdxFixture() {
    // 3 images of 2x3; pixel value = 10 * image + position, and one 255.
    for (unsigned i = 0; i < 3; ++i)
      for (unsigned p = 0; p < 6; ++p) pixels.push_back(static_cast<unsigned char>(10 * i + p));
    pixels[5] = 255;
    write(0x803, 3, 0x801, 3);
  }

  void write(std::uint32_t image_magic, std::uint32_t image_count, std::uint32_t label_magic, std::uint32_t label_count,
             std::size_t drop_tail = 0) {
    std::vector<unsigned char> img;
    put_be32(img, image_magic);
    put_be32(img, image_count);
    put_be32(img, 2);
    put_be32(img, 3);
    img.insert(img.end(), pixels.begin(), pixels.end() - static_cast<std::ptrdiff_t>(drop_tail));
    write_bytes(images, img);
    std::vector<unsigned char> lab;
    put_be32(lab, label_magic);
    put_be32(lab, label_count);
    lab.insert(lab.end(), label_bytes.begin(), label_bytes.end());
    write_bytes(labels, lab);
  }
};

TEST(Idx, ParsesHandBuiltFiles) {
  IdxFixture f;
  const DomainDataset d = load_idx(f.images, f.labels, 4, 0, "digits");
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.height(), 2u);
  EXPECT_EQ(d.width(), 3u);
  EXPECT_EQ(d.domain_id(), 4);
  EXPECT_EQ(d.name(), "digits");
  EXPECT_EQ(d.num_classes(), 8u);
  EXPECT_EQ(d.labels(), (std::vector<int>{3, 0, 7}));
  const Image second = d.image(1);
  EXPECT_DOUBLE_EQ(second.at(0, 0), 10.0 / 255.0);
  EXPECT_DOUBLE_EQ(second.at(1, 2), 15.0 / 255.0);
  EXPECT_DOUBLE_EQ(d.image(0).at(1, 2), 1.0);
  EXPECT_EQ(d.samples()[2].domain_id, 4);
}

TEST(Idx, RespectsLimit) {
  IdxFixture f;
  EXPECT_EQ(load_idx(f.images, f.labels, 0, 2).size(), 2u);
  EXPECT_EQ(load_idx(f.images, f.labels, 0, 10).size(), 3u);
}

TEST(Idx, ErrorsAreClassified) {
  IdxFixture f;
  f.write(0x804, 3, 0x801, 3);
  EXPECT_THROW(load_idx(f.images, f.labels, 0), FormatError);
  f.write(0x803, 3, 0x802, 3);
  EXPECT_THROW(load_idx(f.images, f.labels, 0), FormatError);
  f.write(0x803, 3, 0x801, 2);
  EXPECT_THROW(load_idx(f.images, f.labels, 0), ConsistencyError);
  f.write(0x803, 3, 0x801, 3, 4);
  EXPECT_THROW(load_idx(f.images, f.labels, 0), IoError);
  EXPECT_THROW(load_idx(f.dir.path() / "missing", f.labels, 0), IoError);
}

GlyphParams small_glyphs() {
  GlyphParams p;
  p.n_per_class = 12;
  p.rotations = {0.0, 20.0, 40.0};
  return p;
}

TEST(Glyphs, DeterministicAndWellFormed) {
  const auto a = gen_glyph_domains(small_glyphs());
  const auto b = gen_glyph_domains(small_glyphs());
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t d = 0; d < a.size(); ++d) {
    EXPECT_EQ(a[d].domain_id(), static_cast<int>(d));
    ASSERT_EQ(a[d].size(), 5u * 12u);
    std::map<int, int> per_class;
    for (std::size_t i = 0; i < a[d].size(); ++i) {
      const Sample& s = a[d].samples()[i];
      EXPECT_EQ(s.x, b[d].samples()[i].x);
      EXPECT_EQ(s.domain_id, static_cast<int>(d));
      ++per_class[s.label];
      for (const double p : s.x) {
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
      }
    }
    for (const auto& [label, n] : per_class) EXPECT_EQ(n, 12) << label;
  }
  EXPECT_EQ(a[1].name(), "rot20");
  GlyphParams other = small_glyphs();
  other.seed = 1;
  EXPECT_NE(gen_glyph_domains(other)[0].samples()[0].x, a[0].samples()[0].x);
}

TEST(Glyphs, ClassesAreDistinguishable) {
  // Mean images of different classes differ clearly in the unrotated domain.
  const auto d = gen_glyph_domains(small_glyphs())[0];
  std::vector<std::vector<double>> means(5, std::vector<double>(256, 0.0));
  for (const Sample& s : d.samples())
    for (std::size_t p = 0; p < 256; ++p) means[static_cast<std::size_t>(s.label)][p] += s.x[p] / 12.0;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = a + 1; b < 5; ++b) {
      double dist = 0.0;
      for (std::size_t p = 0; p < 256; ++p) dist += std::pow(means[a][p] - means[b][p], 2);
      EXPECT_GT(std::sqrt(dist), 1.0) << a << " vs " << b;
    }
}

TEST(Glyphs, RejectsBadParameters) {
  GlyphParams p = small_glyphs();
  p.num_classes = kMaxGlyphClasses + 1;
  EXPECT_THROW(gen_glyph_domains(p), ContractError);
  p = small_glyphs();
  p.rotations = {0.0, 0.0};
  EXPECT_THROW(gen_glyph_domains(p), ContractError);
}

TEST(Moons, DomainsAreRotationsOfOneCloud) {
  MoonsParams p;
  p.n = 40;
  const auto domains = gen_two_moons_domains(p);
  ASSERT_EQ(domains.size(), 4u);
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const double th = p.rotations[d] * std::numbers::pi / 180.0;
    int ones = 0;
    for (std::size_t i = 0; i < domains[d].size(); ++i) {
      const Sample& base = domains[0].samples()[i];
      const Sample& s = domains[d].samples()[i];
      EXPECT_EQ(s.label, base.label);
      ones += s.label;
      EXPECT_NEAR(s.x[0], std::cos(th) * base.x[0] - std::sin(th) * base.x[1], 1e-12);
      EXPECT_NEAR(s.x[1], std::sin(th) * base.x[0] + std::cos(th) * base.x[1], 1e-12);
    }
    EXPECT_EQ(ones, 20);
    EXPECT_EQ(domains[d].kind(), SampleKind::Point);
  }
}

TEST(Export, RoundTripIsExact) {
  testing::TempDir dir("export");
  auto domains = gen_glyph_domains(small_glyphs());
  save_domains(dir.path(), domains);
  const auto back = load_domains(dir.path());
  ASSERT_EQ(back.size(), domains.size());
  for (std::size_t d = 0; d < domains.size(); ++d) {
    EXPECT_EQ(back[d].name(), domains[d].name());
    EXPECT_EQ(back[d].num_classes(), domains[d].num_classes());
    for (std::size_t i = 0; i < domains[d].size(); ++i) {
      EXPECT_EQ(back[d].samples()[i].x, domains[d].samples()[i].x);
      EXPECT_EQ(back[d].samples()[i].label, domains[d].samples()[i].label);
    }
  }
  EXPECT_THROW(load_domains(dir.path() / "nope"), IoError);
}

TEST(Split, StratifiedDisjointAndDeterministic) {
  const auto domains = gen_glyph_domains(small_glyphs());
  const SplitSpec spec{1, 0.25, 9};
  const DomainSplit s = leave_one_domain_out(domains, spec);
  ASSERT_EQ(s.train_sets.size(), 2u);
  ASSERT_EQ(s.val_sets.size(), 2u);
  EXPECT_EQ(s.target.domain_id(), 1);
  EXPECT_EQ(s.target.size(), domains[1].size());
  for (std::size_t k = 0; k < 2; ++k) {
    const int source = s.train_sets[k].domain_id();
    EXPECT_NE(source, 1);
    EXPECT_EQ(s.val_sets[k].domain_id(), source);
    std::map<int, int> val_per_class, train_per_class;
    std::set<std::size_t> seen;
    for (const Sample& x : s.val_sets[k].samples()) {
      ++val_per_class[x.label];
      EXPECT_TRUE(seen.insert(x.index).second);
    }
    for (const Sample& x : s.train_sets[k].samples()) {
      ++train_per_class[x.label];
      EXPECT_TRUE(seen.insert(x.index).second);
    }
    EXPECT_EQ(seen.size(), 60u);
    for (int c = 0; c < 5; ++c) {
      EXPECT_EQ(val_per_class[c], 3);  // round(0.25 * 12)
      EXPECT_EQ(train_per_class[c], 9);
    }
  }
  const DomainSplit again = leave_one_domain_out(domains, spec);
  EXPECT_EQ(again.val_sets[0].labels(), s.val_sets[0].labels());
  EXPECT_EQ(again.val_sets[0].samples()[0].index, s.val_sets[0].samples()[0].index);
  const DomainSplit other = leave_one_domain_out(domains, SplitSpec{1, 0.25, 10});
  std::vector<std::size_t> a, b;
  for (const Sample& x : s.val_sets[0].samples()) a.push_back(x.index);
  for (const Sample& x : other.val_sets[0].samples()) b.push_back(x.index);
  EXPECT_NE(a, b);
}

TEST(Split, RejectsUnknownTargetAndBadFraction) {
  const auto domains = gen_glyph_domains(small_glyphs());
  EXPECT_THROW(leave_one_domain_out(domains, SplitSpec{7, 0.2, 0}), ContractError);
  EXPECT_THROW(leave_one_domain_out(domains, SplitSpec{0, 1.0, 0}), ContractError);
}

TEST(Pool, ConcatenatesAndKeepsDomainIds) {
  const auto domains = gen_glyph_domains(small_glyphs());
  const DomainDataset pooled = pool_domains(domains);
  EXPECT_EQ(pooled.size(), 180u);
  EXPECT_EQ(pooled.domain_id(), -1);
  EXPECT_EQ(pooled.samples()[179].domain_id, 2);
}

TEST(AccessCounter, CountsSampleReads) {
  auto d = gen_glyph_domains(small_glyphs())[0];
  auto counter = std::make_shared<std::atomic<std::size_t>>(0);
  d.set_access_counter(counter);
  EXPECT_EQ(counter->load(), 0u);
  (void)d.size();
  EXPECT_EQ(counter->load(), 0u);
  (void)d.inputs();
  EXPECT_GT(counter->load(), 0u);
}

}  // namespace
}  // namespace dascl
