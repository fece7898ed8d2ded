#include "dascl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dascl/error.hpp"

namespace dascl {

void SupConConfig::validate() const {
  if (!(temperature > 0.0)) throw ContractError("supcon: temperature must be positive");
  if (!(lambda >= 0.0)) throw ContractError("supcon: lambda must be non-negative");
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  if (labels.size() != lv.rows()) throw ShapeError("cross_entropy: one label per row required");
  std::vector<std::size_t> columns(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= lv.cols())
      throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    columns[i] = static_cast<std::size_t>(labels[i]);
  }
  return scale(mean(pick_per_row(log_softmax(logits), columns)), -1.0);
}

Var supcon_loss(const Var& z, std::span<const int> labels, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("supcon: temperature must be positive");
  const Tensor& zv = z.value();
  require_matrix(zv, "supcon_loss");
  const std::size_t n = zv.rows(), d = zv.cols();
  if (n < 2) throw ContractError("supcon: need at least two rows");
  if (labels.size() != n) throw ShapeError("supcon: one label per row required");
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += zv[i * d + k] * zv[i * d + k];
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
      throw ContractError("supcon: row " + std::to_string(i) + " is not unit-norm");
  }

  // Pairwise logits s[i][a] = z_i.z_a / t.
  std::vector<double> s(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < n; ++a) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += zv[i * d + k] * zv[a * d + k];
      s[i * n + a] = dot / temperature;
    }

  std::vector<std::size_t> positives(n, 0);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < n; ++a)
      if (a != i && labels[a] == labels[i]) ++positives[i];
    if (positives[i] > 0) ++valid;
  }
  if (valid == 0) {
    return z.tape().record(Tensor::scalar(0.0), {z}, [](const Tensor&, const Tensor&, std::span<Tensor* const>) {});
  }

  // coeff[i][a] = dL/ds[i][a] = (softmax_i(a) - [a in P(i)]/|P(i)|) / valid
  std::vector<double> coeff(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positives[i] == 0) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a)
      if (a != i) mx = std::max(mx, s[i * n + a]);
    double denom = 0.0;
    for (std::size_t a = 0; a < n; ++a)
      if (a != i) denom += std::exp(s[i * n + a] - mx);
    const double lse = mx + std::log(denom);
    const double inv_pos = 1.0 / static_cast<double>(positives[i]);
    double anchor = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      const bool positive = labels[a] == labels[i];
      if (positive) anchor -= (s[i * n + a] - lse) * inv_pos;
      coeff[i * n + a] = std::exp(s[i * n + a] - lse) - (positive ? inv_pos : 0.0);
    }
    total += anchor;
  }
  const double inv_valid = 1.0 / static_cast<double>(valid);
  for (double& c : coeff) c *= inv_valid;

  return z.tape().record(
      Tensor::scalar(total * inv_valid), {z},
      [pz = &zv, coeff = std::move(coeff), n, d, temperature](const Tensor&, const Tensor& g,
                                                              std::span<Tensor* const> gi) {
        // dZ = (C + C^T) Z / t
        const double factor = g[0] / temperature;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t a = 0; a < n; ++a) {
            const double w = (coeff[i * n + a] + coeff[a * n + i]) * factor;
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) (*gi[0])[i * d + k] += w * (*pz)[a * d + k];
          }
      });
}

Var combined_loss(const Var& logits, const Var& z, std::span<const int> labels, const SupConConfig& config) {
  config.validate();
  Var ce = cross_entropy(logits, labels);
  if (config.lambda == 0.0) return ce;
  return add(ce, scale(supcon_loss(z, labels, config.temperature), config.lambda));
}

}  // namespace dascl
