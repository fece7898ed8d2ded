#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "dascl/tensor.hpp"

namespace dascl {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Result of a backward pass: gradients for every parameter leaf on the tape.
class Gradients {
 public:
  /// Gradient for a parameter leaf. Throws ContractError for non-parameters.
  const Tensor& of(const Var& param) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
/// so the node list is already topologically sorted; backward walks it once
/// in reverse. A fresh tape is built for every forward pass.
class Tape {
 public:
  /// Accumulates into the gradient buffers of the inputs. Entries of `input_grads`
  /// are null for inputs that do not require gradients. Node values live in a
  /// deque, so closures may hold pointers to input values.
  using BackwardFn = std::function<void(const Tensor& out_value, const Tensor& out_grad,
                                        std::span<Tensor* const> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient (inputs, targets).
  Var constant(Tensor value);
  /// Tracked leaf; reported by backward().
  Var parameter(Tensor value);
  /// Records an op. `backward` is dropped when no input requires gradients.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse pass from a single-element loss.
  Gradients backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_parameter = false;
  };

  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All inputs must live on the same tape.
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// Elementwise; either operand may be a single-element tensor (scalar broadcast).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
/// x[n,d] + bias[1,d] broadcast over rows.
Var add_row_bias(const Var& x, const Var& bias);
/// max(x, 0); derivative at 0 is 0.
Var relu(const Var& x);
Var exp(const Var& x);
/// Requires strictly positive inputs (DomainError otherwise).
Var log(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
Var transpose(const Var& x);
Var concat_rows(std::span<const Var> parts);
/// Rows of x selected by `indices` (repeats allowed).
Var gather_rows(const Var& x, std::span<const std::size_t> indices);
/// out[i] = x[i, columns[i]], shape [n, 1].
Var pick_per_row(const Var& x, std::span<const std::size_t> columns);
/// Row-wise log-softmax of a matrix (max-shifted).
Var log_softmax(const Var& x);
/// Each row divided by max(||row||_2, eps).
Var l2_normalize_rows(const Var& x, double eps = 1e-12);

}  // namespace dascl
