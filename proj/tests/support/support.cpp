#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "dascl/losses.hpp"
#include "dascl/model.hpp"

namespace dascl::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("dascl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Builder leaves(GraphFn f) {
  return [f = std::move(f)](Tape& tape, const std::vector<Tensor>& xs) {
    Built b;
    for (const Tensor& x : xs) b.wrt.push_back(tape.parameter(x));
    b.loss = f(tape, b.wrt);
    return b;
  };
}

GradCheck check_gradients(const Builder& build, const std::vector<Tensor>& inputs, double h) {
  Tape tape;
  const Built built = build(tape, inputs);
  const Gradients grads = tape.backward(built.loss);
  const std::vector<Var>& vars = built.wrt;

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape t;
    return build(t, xs).loss.value().item();
  };

  GradCheck out;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = grads.of(vars[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i][j];
      probe[i][j] = x0 + h;
      const double up = evaluate(probe);
      probe[i][j] = x0 - h;
      const double down = evaluate(probe);
      probe[i][j] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), 1e-4});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[j] - numeric) / denom);
      ++out.entries;
    }
  }
  return out;
}

namespace {

Tensor draw(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so relu's kink is never within a step.
Tensor draw_off_zero(Rng& rng, Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.sign() * rng.uniform(0.05, 1.0);
  return t;
}

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Reduces a tensor-valued op to a scalar through fixed random weights.
Var weighted_sum(Tape& tape, const Var& x, std::uint64_t seed) {
  return sum(mul(x, tape.constant(Tensor::randn(x.shape(), seed))));
}

std::vector<int> draw_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(rng.below(classes));
  return labels;
}

std::vector<GradOp> build_catalogue() {
  std::vector<GradOp> ops;
  auto unary = [&](std::string name, std::function<Var(const Var&)> op, std::function<Tensor(Rng&, Shape)> gen) {
    ops.push_back({std::move(name), [op, gen](Rng& rng) {
                     const Shape shape{dim(rng, 1, 4), dim(rng, 1, 5)};
                     const std::uint64_t w = rng.next_u64();
                     return GradCase{{gen(rng, shape)}, [op, w](Tape& t, std::span<const Var> v) {
                                       return weighted_sum(t, op(v[0]), w);
                                     }};
                   }});
  };
  auto uniform = [](Rng& rng, Shape s) { return draw(rng, std::move(s)); };
  auto binary = [&](std::string name, std::function<Var(const Var&, const Var&)> op) {
    ops.push_back({name, [op](Rng& rng) {
                     const Shape shape{dim(rng, 1, 4), dim(rng, 1, 5)};
                     // Every third instance broadcasts a scalar operand.
                     const bool scalar_b = rng.below(3) == 0;
                     const std::uint64_t w = rng.next_u64();
                     return GradCase{{draw(rng, shape), draw(rng, scalar_b ? Shape{1} : shape)},
                                     [op, w](Tape& t, std::span<const Var> v) { return weighted_sum(t, op(v[0], v[1]), w); }};
                   }});
  };

  ops.push_back({"matmul", [](Rng& rng) {
                   const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 5), n = dim(rng, 1, 4);
                   const std::uint64_t w = rng.next_u64();
                   return GradCase{{draw(rng, {m, k}), draw(rng, {k, n})}, [w](Tape& t, std::span<const Var> v) {
                                     return weighted_sum(t, matmul(v[0], v[1]), w);
                                   }};
                 }});
  binary("add", [](const Var& a, const Var& b) { return add(a, b); });
  binary("sub", [](const Var& a, const Var& b) { return sub(a, b); });
  binary("mul", [](const Var& a, const Var& b) { return mul(a, b); });
  unary("scale", [](const Var& x) { return scale(x, -1.7); }, uniform);
  ops.push_back({"add_row_bias", [](Rng& rng) {
                   const std::size_t n = dim(rng, 1, 5), d = dim(rng, 1, 5);
                   const std::uint64_t w = rng.next_u64();
                   return GradCase{{draw(rng, {n, d}), draw(rng, {1, d})}, [w](Tape& t, std::span<const Var> v) {
                                     return weighted_sum(t, add_row_bias(v[0], v[1]), w);
                                   }};
                 }});
  unary("relu", [](const Var& x) { return relu(x); }, draw_off_zero);
  unary("exp", [](const Var& x) { return exp(x); }, uniform);
  unary("log", [](const Var& x) { return log(x); }, [](Rng& rng, Shape s) { return draw(rng, std::move(s), 0.2, 2.0); });
  ops.push_back({"sum", [](Rng& rng) {
                   return GradCase{{draw(rng, {dim(rng, 1, 4), dim(rng, 1, 4)})},
                                   [](Tape&, std::span<const Var> v) { return sum(v[0]); }};
                 }});
  ops.push_back({"mean", [](Rng& rng) {
                   return GradCase{{draw(rng, {dim(rng, 1, 4), dim(rng, 1, 4)})},
                                   [](Tape&, std::span<const Var> v) { return mean(v[0]); }};
                 }});
  unary("transpose", [](const Var& x) { return transpose(x); }, uniform);
  ops.push_back({"concat_rows", [](Rng& rng) {
                   const std::size_t d = dim(rng, 1, 4);
                   const std::uint64_t w = rng.next_u64();
                   return GradCase{{draw(rng, {dim(rng, 1, 3), d}), draw(rng, {dim(rng, 1, 3), d})},
                                   [w](Tape& t, std::span<const Var> v) {
                                     const Var parts[] = {v[0], v[1], v[0]};
                                     return weighted_sum(t, concat_rows(parts), w);
                                   }};
                 }});
  ops.push_back({"gather_rows", [](Rng& rng) {
                   const std::size_t n = dim(rng, 1, 4);
                   std::vector<std::size_t> idx(dim(rng, 1, 6));
                   for (auto& i : idx) i = rng.below(n);
                   const std::uint64_t w = rng.next_u64();
                   return GradCase{{draw(rng, {n, dim(rng, 1, 4)})}, [idx, w](Tape& t, std::span<const Var> v) {
                                     return weighted_sum(t, gather_rows(v[0], idx), w);
                                   }};
                 }});
  ops.push_back({"pick_per_row", [](Rng& rng) {
                   const std::size_t n = dim(rng, 1, 5), c = dim(rng, 2, 5);
                   std::vector<std::size_t> cols(n);
                   for (auto& i : cols) i = rng.below(c);
                   const std::uint64_t w = rng.next_u64();
                   return GradCase{{draw(rng, {n, c})}, [cols, w](Tape& t, std::span<const Var> v) {
                                     return weighted_sum(t, pick_per_row(v[0], cols), w);
                                   }};
                 }});
  unary("log_softmax", [](const Var& x) { return log_softmax(x); },
        [](Rng& rng, Shape s) { return draw(rng, std::move(s), -3.0, 3.0); });
  unary("l2_normalize_rows", [](const Var& x) { return l2_normalize_rows(x); }, draw_off_zero);
  ops.push_back({"cross_entropy", [](Rng& rng) {
                   const std::size_t n = dim(rng, 1, 6), c = dim(rng, 2, 5);
                   const std::vector<int> labels = draw_labels(rng, n, c);
                   return GradCase{{draw(rng, {n, c}, -3.0, 3.0)}, [labels](Tape&, std::span<const Var> v) {
                                     return cross_entropy(v[0], labels);
                                   }};
                 }});
  ops.push_back({"supcon_loss", [](Rng& rng) {
                   // Raw rows are normalized inside the graph so perturbations stay on the sphere.
                   const std::size_t n = dim(rng, 3, 8), d = dim(rng, 2, 6);
                   std::vector<int> labels = draw_labels(rng, n, 3);
                   labels[1] = labels[0];
                   const double taus[] = {0.1, 0.5, 1.0};
                   const double tau = taus[rng.below(3)];
                   return GradCase{{draw_off_zero(rng, {n, d})}, [labels, tau](Tape&, std::span<const Var> v) {
                                     return supcon_loss(l2_normalize_rows(v[0]), labels, tau);
                                   }};
                 }});
  ops.push_back({"combined_loss", [](Rng& rng) {
                   const std::size_t n = dim(rng, 3, 6), c = dim(rng, 2, 4), d = dim(rng, 2, 4);
                   std::vector<int> labels = draw_labels(rng, n, c);
                   labels[1] = labels[0];
                   const SupConConfig cfg{0.5, rng.uniform(0.1, 2.0)};
                   return GradCase{{draw(rng, {n, c}, -2.0, 2.0), draw_off_zero(rng, {n, d})},
                                   [labels, cfg](Tape&, std::span<const Var> v) {
                                     return combined_loss(v[0], l2_normalize_rows(v[1]), labels, cfg);
                                   }};
                 }});
  ops.push_back({"model_composite", [](Rng& rng) {
                   ModelConfig mc;
                   mc.input_dim = dim(rng, 2, 5);
                   mc.hidden_dims = {dim(rng, 2, 4)};
                   mc.embed_dim = dim(rng, 2, 4);
                   mc.proj_dim = dim(rng, 2, 3);
                   mc.num_classes = dim(rng, 2, 3);
                   const ModelBundle model = init_model(mc, rng.next_u64());
                   const std::size_t n = dim(rng, 3, 6);
                   std::vector<int> labels = draw_labels(rng, n, mc.num_classes);
                   labels[1] = labels[0];
                   std::vector<Tensor> inputs;
                   for (const Tensor* p : model.parameters()) inputs.push_back(*p);
                   // Biases start at zero; move them off so relu kinks are not hit exactly.
                   for (Tensor& t : inputs)
                     for (std::size_t i = 0; i < t.size(); ++i) t[i] += rng.uniform(-0.1, 0.1);
                   const Tensor x = draw(rng, {n, mc.input_dim});
                   return GradCase{inputs, Builder([model, labels, x](Tape& t, const std::vector<Tensor>& ps) {
                                     ModelBundle m = model;
                                     const auto slots = m.parameters();
                                     for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = ps[i];
                                     const ModelGraph g(t, m);
                                     const Var h = g.features(t.constant(x));
                                     const Var loss = combined_loss(g.logits(h), g.projection(h), labels, SupConConfig{0.5, 1.0});
                                     return Built{loss, g.params()};
                                   })};
                 }});
  return ops;
}

}  // namespace

const std::vector<GradOp>& gradient_catalogue() {
  static const std::vector<GradOp> ops = build_catalogue();
  return ops;
}

double supcon_reference(const std::vector<std::vector<double>>& z, const std::vector<int>& labels, double temperature) {
  const std::size_t n = z.size();
  auto dot = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < z[i].size(); ++k) s += z[i][k] * z[j][k];
    return s;
  };
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    std::size_t positives = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      denom += std::exp(dot(i, a) / temperature);
      if (labels[a] == labels[i]) ++positives;
    }
    if (positives == 0) continue;
    double li = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || labels[p] != labels[i]) continue;
      li -= std::log(std::exp(dot(i, p) / temperature) / denom);
    }
    total += li / static_cast<double>(positives);
    ++anchors;
  }
  return anchors == 0 ? 0.0 : total / static_cast<double>(anchors);
}

double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      ++pairs;
    }
  }
  return wins / static_cast<double>(pairs);
}

std::vector<std::vector<double>> random_unit_rows(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : r) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm < 1e-6);
    norm = std::sqrt(norm);
    for (double& v : r) v /= norm;
  }
  return rows;
}

Tensor to_tensor(const std::vector<std::vector<double>>& rows) { return Tensor::matrix(rows); }

Image random_image(Rng& rng, std::size_t height, std::size_t width) {
  Image img{height, width, std::vector<double>(height * width)};
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

}  // namespace dascl::testing
