#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dascl/tensor.hpp"

namespace dascl {

enum class OptimizerKind { SgdMomentum, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// SGD with momentum (v <- mu v + g; p <- p - lr v) or Adam with bias correction.
/// Moment buffers are created on the first step and shape-checked afterwards.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads);

  std::size_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
};

}  // namespace dascl
