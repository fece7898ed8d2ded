#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dascl/autodiff.hpp"
#include "dascl/augment.hpp"
#include "dascl/rng.hpp"

namespace dascl::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// ---- finite differences -----------------------------------------------------

using GraphFn = std::function<Var(Tape&, std::span<const Var>)>;

struct Built {
  Var loss;
  std::vector<Var> wrt;  // one per input tensor, same order
};
/// Records the expression for the given input values on `tape`.
using Builder = std::function<Built(Tape&, const std::vector<Tensor>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

/// Compares tape gradients with central differences (step h) for every entry of
/// every input. Relative error uses max(|analytic|, |numeric|, 1e-4) as denominator.
GradCheck check_gradients(const Builder& build, const std::vector<Tensor>& inputs, double h = 1e-5);
/// Inputs become parameter leaves passed to `f`.
Builder leaves(GraphFn f);

/// A differentiable expression with freshly drawn inputs.
struct GradCase {
  GradCase(std::vector<Tensor> xs, GraphFn f) : inputs(std::move(xs)), build(leaves(std::move(f))) {}
  GradCase(std::vector<Tensor> xs, Builder b) : inputs(std::move(xs)), build(std::move(b)) {}
  std::vector<Tensor> inputs;
  Builder build;
};

struct GradOp {
  std::string name;
  std::function<GradCase(Rng&)> draw;
};

/// Every differentiable operation, both losses and the full model composite.
const std::vector<GradOp>& gradient_catalogue();

// ---- oracles ----------------------------------------------------------------

/// Plain double-loop supervised contrastive loss over unit rows of z.
double supcon_reference(const std::vector<std::vector<double>>& z, const std::vector<int>& labels, double temperature);

/// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

std::vector<std::vector<double>> random_unit_rows(Rng& rng, std::size_t n, std::size_t d);
Tensor to_tensor(const std::vector<std::vector<double>>& rows);

Image random_image(Rng& rng, std::size_t height, std::size_t width);

}  // namespace dascl::testing
