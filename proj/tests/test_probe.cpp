#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"
#include "dascl/model.hpp"
#include "dascl/probe.hpp"
#include "support/support.hpp"

namespace dascl {
namespace {

Tensor gaussian_cloud(std::size_t n, std::size_t d, double shift, std::uint64_t seed) {
  Tensor t = Tensor::randn({n, d}, seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += shift;
  return t;
}

TEST(ProxyDistance, SameDistributionIsNearZero) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const double d = proxy_a_distance(gaussian_cloud(200, 8, 0.0, 2 * s), gaussian_cloud(200, 8, 0.0, 2 * s + 1), s);
    EXPECT_LT(d, 0.2) << s;
    EXPECT_GE(d, 0.0);
  }
}

TEST(ProxyDistance, SeparatedClustersAreNearTwo) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const double d = proxy_a_distance(gaussian_cloud(100, 4, 0.0, 2 * s), gaussian_cloud(100, 4, 10.0, 2 * s + 1), s);
    EXPECT_GT(d, 1.8) << s;
    EXPECT_LE(d, 2.0);
  }
}

TEST(ProxyDistance, DeterministicGivenSeed) {
  const Tensor a = gaussian_cloud(60, 3, 0.0, 1), b = gaussian_cloud(60, 3, 0.5, 2);
  EXPECT_EQ(proxy_a_distance(a, b, 7), proxy_a_distance(a, b, 7));
}

TEST(ProxyDistance, Preconditions) {
  EXPECT_THROW(proxy_a_distance(gaussian_cloud(9, 2, 0, 1), gaussian_cloud(20, 2, 0, 2), 0), ContractError);
  EXPECT_THROW(proxy_a_distance(gaussian_cloud(20, 2, 0, 1), gaussian_cloud(20, 3, 0, 2), 0), ShapeError);
}

// Recomputes the probe's test decision from its reported weights with an
// independent standardization pass, and bounds its error by the best
// threshold rule on the same (1-D) test rows.
TEST(DomainProbe, ReportedErrorMatchesIndependentEvaluation) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const double gap = rng.uniform(0.0, 3.0);
    const Tensor a = gaussian_cloud(80, 1, 0.0, rng.next_u64());
    const Tensor b = gaussian_cloud(70, 1, gap, rng.next_u64());
    const ProbeOutcome o = run_domain_probe(a, b, rng.next_u64());

    EXPECT_EQ(o.train_a.size() + o.test_a.size(), 80u);
    EXPECT_EQ(o.train_b.size() + o.test_b.size(), 70u);
    std::vector<std::size_t> all_a = o.train_a;
    all_a.insert(all_a.end(), o.test_a.begin(), o.test_a.end());
    std::sort(all_a.begin(), all_a.end());
    for (std::size_t i = 0; i < 80; ++i) ASSERT_EQ(all_a[i], i);

    double mean = 0.0, var = 0.0;
    std::vector<double> train;
    for (const auto i : o.train_a) train.push_back(a[i]);
    for (const auto i : o.train_b) train.push_back(b[i]);
    for (const double v : train) mean += v / static_cast<double>(train.size());
    for (const double v : train) var += (v - mean) * (v - mean) / static_cast<double>(train.size());
    const double sd = std::sqrt(var);
    auto says_b = [&](double v) { return o.bias + o.weights[0] * (v - mean) / sd > 0.0; };
    double err_a = 0.0, err_b = 0.0;
    for (const auto i : o.test_a) err_a += says_b(a[i]) ? 1.0 : 0.0;
    for (const auto i : o.test_b) err_b += says_b(b[i]) ? 0.0 : 1.0;
    const double balanced = 0.5 * (err_a / static_cast<double>(o.test_a.size()) + err_b / static_cast<double>(o.test_b.size()));
    EXPECT_NEAR(o.balanced_test_error, balanced, 1e-12);
    EXPECT_NEAR(o.distance, std::clamp(2.0 * (1.0 - 2.0 * balanced), 0.0, 2.0), 1e-12);

    // Best threshold in either orientation, searched exhaustively on test rows.
    std::vector<double> cuts;
    for (const auto i : o.test_a) cuts.push_back(a[i]);
    for (const auto i : o.test_b) cuts.push_back(b[i]);
    cuts.push_back(-1e9);
    double best = 1.0;
    for (const double c : cuts)
      for (const double dir : {1.0, -1.0}) {
        double ea = 0.0, eb = 0.0;
        for (const auto i : o.test_a) ea += dir * (a[i] - c) > 0.0 ? 1.0 : 0.0;
        for (const auto i : o.test_b) eb += dir * (b[i] - c) > 0.0 ? 0.0 : 1.0;
        best = std::min(best, 0.5 * (ea / static_cast<double>(o.test_a.size()) + eb / static_cast<double>(o.test_b.size())));
      }
    EXPECT_GE(o.balanced_test_error, best - 1e-12);
    EXPECT_LE(o.balanced_test_error, best + 0.1) << "gap " << gap;
  }
}

TEST(PairwiseDistances, SymmetricZeroDiagonalAndBounded) {
  std::vector<Tensor> features;
  for (std::size_t k = 0; k < 4; ++k) features.push_back(gaussian_cloud(40, 3, 1.5 * static_cast<double>(k), 10 + k));
  const DistanceReport r = pairwise_feature_distances(features, {0, 1, 2, 3}, {"a", "b", "c", "d"}, 5);
  ASSERT_EQ(r.matrix.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(r.matrix[i][i], 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(r.matrix[i][j], r.matrix[j][i]);
      EXPECT_GE(r.matrix[i][j], 0.0);
      EXPECT_LE(r.matrix[i][j], 2.0);
    }
  }
  EXPECT_DOUBLE_EQ(r.matrix[0][2], proxy_a_distance(features[0], features[2], derive_seed(5, {0, 2})));
  EXPECT_EQ(r.run_id.size(), 16u);
  EXPECT_EQ(distance_report_from_json(to_json(r)), r);
  const std::pair<std::size_t, std::size_t> pairs[] = {{0, 1}, {2, 3}};
  EXPECT_DOUBLE_EQ(mean_distance(r, pairs), 0.5 * (r.matrix[0][1] + r.matrix[2][3]));
}

}  // namespace
}  // namespace dascl
