#pragma once

#include <cstddef>
#include <span>

#include "dascl/autodiff.hpp"

namespace dascl {

struct SupConConfig {
  double temperature = 0.1;
  double lambda = 1.0;

  void validate() const;
};

/// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
Var cross_entropy(const Var& logits, std::span<const int> labels);

/// Supervised contrastive loss over unit-norm rows of `z`.
///
/// For anchor i, A(i) is every other row and P(i) the rows of A(i) sharing
/// its label, whatever domain or view they came from:
///
///   L_i = -1/|P(i)| * sum_{p in P(i)} log( exp(z_i.z_p/t) / sum_{a in A(i)} exp(z_i.z_a/t) )
///
/// The loss is the mean of L_i over anchors with non-empty P(i); anchors
/// without positives are skipped and the loss is 0 if none remain.
/// Requires n >= 2 and every row unit-norm within 1e-6.
Var supcon_loss(const Var& z, std::span<const int> labels, double temperature);

/// cross_entropy(logits) + lambda * supcon_loss(z). With lambda == 0 the
/// contrastive term is not added to the graph at all.
Var combined_loss(const Var& logits, const Var& z, std::span<const int> labels, const SupConConfig& config);

}  // namespace dascl
