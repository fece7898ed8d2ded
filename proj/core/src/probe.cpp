#include "dascl/probe.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dascl/error.hpp"
#include "dascl/rng.hpp"

namespace dascl {

namespace {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> halves(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const std::size_t cut = n / 2;
  return {{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut)},
          {order.begin() + static_cast<std::ptrdiff_t>(cut), order.end()}};
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

std::string hex_id(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

ProbeOutcome run_domain_probe(const Tensor& features_a, const Tensor& features_b, std::uint64_t seed,
                              const ProbeSettings& settings) {
  require_matrix(features_a, "proxy_a_distance");
  require_matrix(features_b, "proxy_a_distance");
  if (features_a.rows() < 10 || features_b.rows() < 10)
    throw ContractError("proxy_a_distance: need at least 10 samples per domain");
  if (features_a.cols() != features_b.cols()) throw ShapeError("proxy_a_distance: feature widths differ");
  const std::size_t d = features_a.cols();

  ProbeOutcome out;
  std::tie(out.train_a, out.test_a) = halves(features_a.rows(), derive_seed(seed, {0}));
  std::tie(out.train_b, out.test_b) = halves(features_b.rows(), derive_seed(seed, {1}));

  // Standardize with probe-train statistics.
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  const double n_train = static_cast<double>(out.train_a.size() + out.train_b.size());
  auto for_train = [&](auto&& f) {
    for (const std::size_t i : out.train_a) f(features_a.data().data() + i * d);
    for (const std::size_t i : out.train_b) f(features_b.data().data() + i * d);
  };
  for_train([&](const double* row) {
    for (std::size_t k = 0; k < d; ++k) mu[k] += row[k] / n_train;
  });
  for_train([&](const double* row) {
    for (std::size_t k = 0; k < d; ++k) sd[k] += (row[k] - mu[k]) * (row[k] - mu[k]) / n_train;
  });
  for (double& s : sd) s = s > 1e-24 ? std::sqrt(s) : 1.0;
  auto standardized = [&](const Tensor& f, std::size_t i) {
    std::vector<double> row(d);
    for (std::size_t k = 0; k < d; ++k) row[k] = (f[i * d + k] - mu[k]) / sd[k];
    return row;
  };

  std::vector<std::vector<double>> xs;
  std::vector<double> ys, weights;
  const double wa = 0.5 / static_cast<double>(out.train_a.size());
  const double wb = 0.5 / static_cast<double>(out.train_b.size());
  for (const std::size_t i : out.train_a) {
    xs.push_back(standardized(features_a, i));
    ys.push_back(0.0);
    weights.push_back(wa);
  }
  for (const std::size_t i : out.train_b) {
    xs.push_back(standardized(features_b, i));
    ys.push_back(1.0);
    weights.push_back(wb);
  }

  // Class-balanced logistic regression, full-batch gradient descent.
  out.weights.assign(d, 0.0);
  std::vector<double> grad(d);
  for (std::size_t step = 0; step < settings.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_bias = 0.0;
    for (std::size_t r = 0; r < xs.size(); ++r) {
      double t = out.bias;
      for (std::size_t k = 0; k < d; ++k) t += out.weights[k] * xs[r][k];
      const double residual = weights[r] * (sigmoid(t) - ys[r]);
      for (std::size_t k = 0; k < d; ++k) grad[k] += residual * xs[r][k];
      grad_bias += residual;
    }
    for (std::size_t k = 0; k < d; ++k) out.weights[k] -= settings.learning_rate * grad[k];
    out.bias -= settings.learning_rate * grad_bias;
  }

  auto predicts_b = [&](const Tensor& f, std::size_t i) {
    const auto row = standardized(f, i);
    double t = out.bias;
    for (std::size_t k = 0; k < d; ++k) t += out.weights[k] * row[k];
    return t > 0.0;
  };
  double wrong_a = 0.0, wrong_b = 0.0;
  for (const std::size_t i : out.test_a) wrong_a += predicts_b(features_a, i) ? 1.0 : 0.0;
  for (const std::size_t i : out.test_b) wrong_b += predicts_b(features_b, i) ? 0.0 : 1.0;
  out.balanced_test_error = 0.5 * (wrong_a / static_cast<double>(out.test_a.size()) +
                                   wrong_b / static_cast<double>(out.test_b.size()));
  out.distance = std::clamp(2.0 * (1.0 - 2.0 * out.balanced_test_error), 0.0, 2.0);
  return out;
}

double proxy_a_distance(const Tensor& features_a, const Tensor& features_b, std::uint64_t seed,
                        const ProbeSettings& settings) {
  return run_domain_probe(features_a, features_b, seed, settings).distance;
}

DistanceReport pairwise_feature_distances(std::span<const Tensor> features, std::vector<int> ids,
                                          std::vector<std::string> names, std::uint64_t seed) {
  const std::size_t k = features.size();
  if (k < 2) throw ContractError("pairwise distances need at least two domains");
  if (ids.size() != k || names.size() != k) throw ContractError("pairwise distances: ids/names size mismatch");
  DistanceReport report;
  report.domain_ids = std::move(ids);
  report.names = std::move(names);
  report.seed = seed;
  report.feature_dim = features.front().cols();
  report.matrix.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double dist = proxy_a_distance(features[i], features[j], derive_seed(seed, {i, j}));
      report.matrix[i][j] = dist;
      report.matrix[j][i] = dist;
    }
  std::uint64_t h = derive_seed(seed, {k, report.feature_dim});
  for (const int id : report.domain_ids) h = derive_seed(h, {static_cast<std::uint64_t>(id)});
  report.run_id = hex_id(h);
  return report;
}

DistanceReport pairwise_distances(std::span<const DomainDataset> domains, const ModelBundle& model,
                                  std::uint64_t seed) {
  std::vector<Tensor> features;
  std::vector<int> ids;
  std::vector<std::string> names;
  for (const DomainDataset& d : domains) {
    features.push_back(compute_features(model, d.inputs()));
    ids.push_back(d.domain_id());
    names.push_back(d.name());
  }
  return pairwise_feature_distances(features, std::move(ids), std::move(names), seed);
}

double mean_distance(const DistanceReport& report, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  if (pairs.empty()) throw ContractError("mean_distance: no pairs");
  double acc = 0.0;
  for (const auto& [i, j] : pairs) acc += report.matrix.at(i).at(j);
  return acc / static_cast<double>(pairs.size());
}

nlohmann::json to_json(const DistanceReport& report) {
  return {{"domain_ids", report.domain_ids}, {"names", report.names},       {"matrix", report.matrix},
          {"seed", report.seed},             {"feature_dim", report.feature_dim}, {"run_id", report.run_id}};
}

DistanceReport distance_report_from_json(const nlohmann::json& doc) {
  try {
    DistanceReport r;
    r.domain_ids = doc.at("domain_ids").get<std::vector<int>>();
    r.names = doc.at("names").get<std::vector<std::string>>();
    r.matrix = doc.at("matrix").get<std::vector<std::vector<double>>>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.feature_dim = doc.at("feature_dim").get<std::size_t>();
    r.run_id = doc.at("run_id").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed distance report: ") + e.what());
  }
}

}  // namespace dascl
