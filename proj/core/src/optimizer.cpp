#include "dascl/optimizer.hpp"

#include <cmath>

#include "dascl/error.hpp"

namespace dascl {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd" || name == "sgd-momentum") return OptimizerKind::SgdMomentum;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0)) throw ContractError("optimizer: learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("optimizer: momentum must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ContractError("optimizer: betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ContractError("optimizer: epsilon must be positive");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size()) throw ContractError("optimizer: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape())
      throw ContractError("optimizer: gradient shape " + shape_string(grads[i]->shape()) + " does not match " +
                          shape_string(params[i]->shape()));
  }
  if (steps_ == 0) {
    first_.clear();
    second_.clear();
    for (const Tensor* p : params) {
      first_.push_back(Tensor::zeros(p->shape()));
      if (config_.kind == OptimizerKind::Adam) second_.push_back(Tensor::zeros(p->shape()));
    }
  } else if (first_.size() != params.size()) {
    throw ContractError("optimizer: parameter count changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (first_[i].shape() != params[i]->shape()) throw ContractError("optimizer: buffer shape mismatch");
  }
  ++steps_;

  if (config_.kind == OptimizerKind::SgdMomentum) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->data();
      auto g = grads[i]->data();
      auto v = first_[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = config_.momentum * v[j] + g[j];
        p[j] -= config_.lr * v[j];
      }
    }
    return;
  }

  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i]->data();
    auto m = first_[i].data();
    auto v = second_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace dascl
