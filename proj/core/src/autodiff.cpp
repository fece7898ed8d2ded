#include "dascl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dascl/error.hpp"

namespace dascl {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->nodes_[id_].value;
}

bool Var::requires_grad() const { return tape_ != nullptr && tape_->nodes_[id_].requires_grad; }

const Tensor& Gradients::of(const Var& param) const {
  const auto it = grads_.find(param.id());
  if (it == grads_.end()) throw ContractError("no gradient recorded: Var is not a parameter of this tape");
  return it->second;
}

void Tape::check_owned(const Var& v) const {
  if (&v.tape() != this || v.id() >= nodes_.size()) throw ContractError("Var belongs to a different tape");
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) {
  check_owned(loss);
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor::filled(loss.shape(), 1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || grads[id].empty()) continue;
    input_grads.clear();
    for (const std::size_t in : node.inputs) {
      if (!nodes_[in].requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (grads[in].empty()) grads[in] = Tensor::zeros(nodes_[in].value.shape());
      input_grads.push_back(&grads[in]);
    }
    node.backward(node.value, grads[id], input_grads);
    // Intermediate gradients are no longer needed once propagated.
    if (!node.is_parameter) grads[id] = Tensor();
  }

  Gradients out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].is_parameter) continue;
    out.grads_.emplace(id, grads[id].empty() ? Tensor::zeros(nodes_[id].value.shape()) : std::move(grads[id]));
  }
  return out;
}

namespace {

Tape& common_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) throw ContractError("operands must share a tape");
  return a.tape();
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

// Output shape for a scalar-broadcast binary op.
const Shape& broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar(b)) return a.shape();
  if (is_scalar(a)) return b.shape();
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                   shape_string(b.shape()));
}

// Adds `g` (shaped like the output) into `target`, summing when target is a broadcast scalar.
template <typename F>
void accumulate(Tensor* target, const Tensor& g, F&& factor) {
  if (target == nullptr) return;
  if (target->size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) (*target)[i] += g[i] * factor(i);
  } else {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * factor(i);
    (*target)[0] += acc;
  }
}

template <typename F>
Tensor elementwise(const Tensor& a, const Tensor& b, const Shape& shape, F&& f) {
  const std::size_t n = shape_size(shape);
  std::vector<double> out(n);
  const bool sa = a.size() != n;
  const bool sb = b.size() != n;
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a[sa ? 0 : i], b[sb ? 0 : i]);
  return Tensor(shape, std::move(out));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = dascl::matmul(av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  return tape.record(std::move(out), {a, b},
                     [pa = &av, pb = &bv, m, k, n](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                       if (gi[0] != nullptr) kernels::matmul_grad_a(g.data(), pb->data(), gi[0]->data(), m, k, n);
                       if (gi[1] != nullptr) kernels::matmul_grad_b(pa->data(), g.data(), gi[1]->data(), m, k, n);
                     });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Shape& shape = broadcast_shape(a.value(), b.value(), "add");
  Tensor out = elementwise(a.value(), b.value(), shape, [](double x, double y) { return x + y; });
  return tape.record(std::move(out), {a, b}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
    accumulate(gi[0], g, [](std::size_t) { return 1.0; });
    accumulate(gi[1], g, [](std::size_t) { return 1.0; });
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Shape& shape = broadcast_shape(a.value(), b.value(), "sub");
  Tensor out = elementwise(a.value(), b.value(), shape, [](double x, double y) { return x - y; });
  return tape.record(std::move(out), {a, b}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
    accumulate(gi[0], g, [](std::size_t) { return 1.0; });
    accumulate(gi[1], g, [](std::size_t) { return -1.0; });
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape& shape = broadcast_shape(av, bv, "mul");
  Tensor out = elementwise(av, bv, shape, [](double x, double y) { return x * y; });
  return tape.record(std::move(out), {a, b},
                     [pa = &av, pb = &bv](const Tensor& o, const Tensor& g, std::span<Tensor* const> gi) {
                       const bool sa = pa->size() != o.size();
                       const bool sb = pb->size() != o.size();
                       accumulate(gi[0], g, [&](std::size_t i) { return (*pb)[sb ? 0 : i]; });
                       accumulate(gi[1], g, [&](std::size_t i) { return (*pa)[sa ? 0 : i]; });
                     });
}

Var scale(const Var& a, double c) {
  const Tensor& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
  return a.tape().record(Tensor(av.shape(), std::move(out)), {a},
                         [c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * c;
                         });
}

Var add_row_bias(const Var& x, const Var& bias) {
  Tape& tape = common_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_row_bias");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (bv.size() != d) {
    throw ShapeError("add_row_bias: bias " + shape_string(bv.shape()) + " does not match " + shape_string(xv.shape()));
  }
  std::vector<double> out(xv.values());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bv[j];
  return tape.record(Tensor(xv.shape(), std::move(out)), {x, bias},
                     [n, d](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                       if (gi[0] != nullptr)
                         for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                       if (gi[1] != nullptr)
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d; ++j) (*gi[1])[j] += g[i * d + j];
                     });
}

Var relu(const Var& x) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 || std::isnan(xv[i]) ? xv[i] : 0.0;
  return x.tape().record(Tensor(xv.shape(), std::move(out)), {x},
                         [px = &xv](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if ((*px)[i] > 0.0) (*gi[0])[i] += g[i];
                         });
}

Var exp(const Var& x) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::exp(xv[i]);
  return x.tape().record(Tensor(xv.shape(), std::move(out)), {x},
                         [](const Tensor& o, const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * o[i];
                         });
}

Var log(const Var& x) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (!(xv[i] > 0.0)) throw DomainError("log: non-positive input " + std::to_string(xv[i]));
    out[i] = std::log(xv[i]);
  }
  return x.tape().record(Tensor(xv.shape(), std::move(out)), {x},
                         [px = &xv](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] / (*px)[i];
                         });
}

Var sum(const Var& x) {
  const Tensor& xv = x.value();
  double acc = 0.0;
  for (const double v : xv.data()) acc += v;
  return x.tape().record(Tensor::scalar(acc), {x}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
    for (double& v : gi[0]->data()) v += g[0];
  });
}

Var mean(const Var& x) {
  const Tensor& xv = x.value();
  double acc = 0.0;
  for (const double v : xv.data()) acc += v;
  const double n = static_cast<double>(xv.size());
  return x.tape().record(Tensor::scalar(acc / n), {x},
                         [n](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           for (double& v : gi[0]->data()) v += g[0] / n;
                         });
}

Var transpose(const Var& x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "transpose");
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return x.tape().record(Tensor({c, r}, std::move(out)), {x},
                         [r, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) (*gi[0])[i * c + j] += g[j * r + i];
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Tape& tape = parts.front().tape();
  const Tensor& first = parts.front().value();
  require_matrix(first, "concat_rows");
  const std::size_t cols = first.cols();
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    common_tape(parts.front(), p);
    const Tensor& v = p.value();
    require_matrix(v, "concat_rows");
    if (v.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    offsets.push_back(out.size());
    out.insert(out.end(), v.data().begin(), v.data().end());
    rows += v.rows();
  }
  return tape.record(Tensor({rows, cols}, std::move(out)), std::vector<Var>(parts.begin(), parts.end()),
                     [offsets](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                       for (std::size_t k = 0; k < gi.size(); ++k) {
                         if (gi[k] == nullptr) continue;
                         for (std::size_t i = 0; i < gi[k]->size(); ++i) (*gi[k])[i] += g[offsets[k] + i];
                       }
                     });
}

Var gather_rows(const Var& x, std::span<const std::size_t> indices) {
  const Tensor& xv = x.value();
  require_matrix(xv, "gather_rows");
  if (indices.empty()) throw ContractError("gather_rows: no indices");
  const std::size_t c = xv.cols();
  std::vector<double> out;
  out.reserve(indices.size() * c);
  for (const std::size_t r : indices) {
    if (r >= xv.rows()) throw IndexError("gather_rows: index " + std::to_string(r) + " out of range");
    out.insert(out.end(), xv.data().begin() + static_cast<std::ptrdiff_t>(r * c),
               xv.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor value({idx.size(), c}, std::move(out));
  return x.tape().record(std::move(value), {x},
                         [idx = std::move(idx), c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t k = 0; k < idx.size(); ++k)
                             for (std::size_t j = 0; j < c; ++j) (*gi[0])[idx[k] * c + j] += g[k * c + j];
                         });
}

Var pick_per_row(const Var& x, std::span<const std::size_t> columns) {
  const Tensor& xv = x.value();
  require_matrix(xv, "pick_per_row");
  const std::size_t n = xv.rows(), c = xv.cols();
  if (columns.size() != n) throw ShapeError("pick_per_row: need one column index per row");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (columns[i] >= c) throw IndexError("pick_per_row: column " + std::to_string(columns[i]) + " out of range");
    out[i] = xv[i * c + columns[i]];
  }
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  return x.tape().record(Tensor({n, 1}, std::move(out)), {x},
                         [cols = std::move(cols), c](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < cols.size(); ++i) (*gi[0])[i * c + cols[i]] += g[i];
                         });
}

Var log_softmax(const Var& x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "log_softmax");
  const std::size_t n = xv.rows(), c = xv.cols();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += std::exp(row[j] - mx);
    const double lse = mx + std::log(acc);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  return x.tape().record(Tensor(xv.shape(), std::move(out)), {x},
                         [n, c](const Tensor& o, const Tensor& g, std::span<Tensor* const> gi) {
                           // d/dx_j = g_j - softmax_j * sum_k g_k
                           for (std::size_t i = 0; i < n; ++i) {
                             double gsum = 0.0;
                             for (std::size_t j = 0; j < c; ++j) gsum += g[i * c + j];
                             for (std::size_t j = 0; j < c; ++j)
                               (*gi[0])[i * c + j] += g[i * c + j] - std::exp(o[i * c + j]) * gsum;
                           }
                         });
}

Var l2_normalize_rows(const Var& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("l2_normalize_rows: eps must be positive");
  const Tensor& xv = x.value();
  require_matrix(xv, "l2_normalize_rows");
  const std::size_t n = xv.rows(), d = xv.cols();
  std::vector<double> out(xv.size());
  std::vector<double> denom(n);
  std::vector<bool> clamped(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += xv[i * d + j] * xv[i * d + j];
    const double norm = std::sqrt(sq);
    clamped[i] = norm < eps;
    denom[i] = clamped[i] ? eps : norm;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] / denom[i];
  }
  return x.tape().record(
      Tensor(xv.shape(), std::move(out)), {x},
      [n, d, denom = std::move(denom), clamped = std::move(clamped)](const Tensor& o, const Tensor& g,
                                                                     std::span<Tensor* const> gi) {
        for (std::size_t i = 0; i < n; ++i) {
          if (clamped[i]) {
            for (std::size_t j = 0; j < d; ++j) (*gi[0])[i * d + j] += g[i * d + j] / denom[i];
            continue;
          }
          // y = x/|x|: dx = (g - y (y.g)) / |x|
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += o[i * d + j] * g[i * d + j];
          for (std::size_t j = 0; j < d; ++j) (*gi[0])[i * d + j] += (g[i * d + j] - o[i * d + j] * dot) / denom[i];
        }
      });
}

}  // namespace dascl
