#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "fineas/errors.hpp"
#include "fineas/rng.hpp"

// Minimal dense-tensor engine with reverse-mode gradient accumulation.
//
// Tensors are handles to graph nodes; every op records the closure needed
// for its backward pass. The scalar type is a template parameter: models
// train in float, gradient checks instantiate double. Statistical
// reductions (means, sums, layernorm moments, pooling) accumulate in
// double regardless of the storage type; matmul accumulates in the
// storage type, as BLAS kernels do.
//
// All loops run in fixed row-major order, so results are deterministic
// for a given seed and platform.

namespace fineas::num {

template <class T>
struct Node;

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated by backward() when needed
  bool requires_grad = false;
  bool is_param = false;  // parameter leaf: grads accumulate across backward calls
  std::string name;
  std::vector<NodePtr<T>> parents;
  std::function<void(Node<T>&)> backward_fn;
};

inline int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream out;
  out << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out << ',';
    out << s[i];
  }
  out << ')';
  return out.str();
}

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr<T> node) : node_(std::move(node)) {}

  static Tensor param(std::vector<int> shape, std::vector<T> values,
                      std::string name) {
    auto n = std::make_shared<Node<T>>();
    if (numel(shape) != static_cast<int64_t>(values.size())) {
      raise(Errc::ShapeMismatch, "param '" + name + "': " + shape_str(shape) +
                                     " vs " + std::to_string(values.size()) +
                                     " values");
    }
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = true;
    n->is_param = true;
    n->name = std::move(name);
    return Tensor(std::move(n));
  }

  static Tensor constant(std::vector<int> shape, std::vector<T> values) {
    auto n = std::make_shared<Node<T>>();
    if (numel(shape) != static_cast<int64_t>(values.size())) {
      raise(Errc::ShapeMismatch, "constant: " + shape_str(shape) + " vs " +
                                     std::to_string(values.size()) + " values");
    }
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor zeros(std::vector<int> shape) {
    const auto n = numel(shape);
    return constant(std::move(shape), std::vector<T>(n, T(0)));
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
  const std::vector<T>& values() const { return node_->value; }
  std::vector<T>& mutable_values() { return node_->value; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }

  void set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    node_->is_param = flag;
  }

  void zero_grad() {
    if (!node_->grad.empty()) {
      std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }
  }

  NodePtr<T> node() const { return node_; }

 private:
  NodePtr<T> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

template <class T>
NodePtr<T> make_op(std::vector<int> shape, std::vector<NodePtr<T>> parents,
                   const char* op_name) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value.resize(static_cast<size_t>(numel(n->shape)));
  n->parents = std::move(parents);
  for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
  n->name = op_name;
  return n;
}

template <class T>
void check_finite(const std::vector<T>& v, const char* op_name) {
  for (const T x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      raise(Errc::NonFiniteValue, std::string(op_name) + " produced " +
                                      (std::isnan(static_cast<double>(x))
                                           ? "NaN"
                                           : "Inf"));
    }
  }
}

template <class T>
std::vector<T>& grad_buf(Node<T>& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

inline bool is_suffix(const std::vector<int>& small,
                      const std::vector<int>& big) {
  if (small.size() > big.size()) return false;
  const size_t off = big.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i]) return false;
  }
  return true;
}

// C(m,n) += A(m,k) * B(k,n), accumulation in T.
template <class T>
void gemm_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * k;
    T* crow = c + static_cast<int64_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const T av = arow[l];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<int64_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m,n) += A(m,k) * B(n,k)^T
template <class T>
void gemm_bt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * k;
    T* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<int64_t>(j) * k;
      T acc = T(0);
      for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

// C(k,n) += A(m,k)^T * B(m,n)
template <class T>
void gemm_at_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * k;
    const T* brow = b + static_cast<int64_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const T av = arow[l];
      if (av == T(0)) continue;
      T* crow = c + static_cast<int64_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------- matmul

// Supported shapes: (m,k)x(k,n), (b,m,k)x(b,k,n), (b,m,k)x(k,n).
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto fail = [&]() {
    raise(Errc::ShapeMismatch,
          "matmul: " + shape_str(sa) + " x " + shape_str(sb));
  };

  int batch = 1, m = 0, k = 0, n = 0;
  bool batched_b = false;
  std::vector<int> out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0];
    k = sa[1];
    if (sb[0] != k) fail();
    n = sb[1];
    out_shape = {m, n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    if (sa[0] != sb[0] || sb[1] != sa[2]) fail();
    batch = sa[0];
    m = sa[1];
    k = sa[2];
    n = sb[2];
    batched_b = true;
    out_shape = {batch, m, n};
  } else if (sa.size() == 3 && sb.size() == 2) {
    if (sb[0] != sa[2]) fail();
    batch = sa[0];
    m = sa[1];
    k = sa[2];
    n = sb[1];
    out_shape = {batch, m, n};
  } else {
    fail();
  }

  auto node = detail::make_op<T>(out_shape, {a.node(), b.node()}, "matmul");
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  T* pc = node->value.data();
  std::fill(node->value.begin(), node->value.end(), T(0));
  for (int bi = 0; bi < batch; ++bi) {
    detail::gemm_acc(pa + static_cast<int64_t>(bi) * m * k,
                     pb + (batched_b ? static_cast<int64_t>(bi) * k * n : 0),
                     pc + static_cast<int64_t>(bi) * m * n, m, k, n);
  }
  detail::check_finite(node->value, "matmul");

  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  node->backward_fn = [an, bn, batch, m, k, n, batched_b](Node<T>& self) {
    const T* dc = self.grad.data();
    if (an->requires_grad) {
      T* da = detail::grad_buf(*an).data();
      for (int bi = 0; bi < batch; ++bi) {
        detail::gemm_bt_acc(
            dc + static_cast<int64_t>(bi) * m * n,
            bn->value.data() + (batched_b ? static_cast<int64_t>(bi) * k * n : 0),
            da + static_cast<int64_t>(bi) * m * k, m, n, k);
      }
    }
    if (bn->requires_grad) {
      T* db = detail::grad_buf(*bn).data();
      for (int bi = 0; bi < batch; ++bi) {
        detail::gemm_at_acc(
            an->value.data() + static_cast<int64_t>(bi) * m * k,
            dc + static_cast<int64_t>(bi) * m * n,
            db + (batched_b ? static_cast<int64_t>(bi) * k * n : 0), m, k, n);
      }
    }
  };
  return Tensor<T>(node);
}

// ------------------------------------------------------- transpose_last2

template <class T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
  const auto& sa = a.shape();
  if (sa.size() < 2) {
    raise(Errc::ShapeMismatch, "transpose_last2 needs rank >= 2, got " +
                                   shape_str(sa));
  }
  std::vector<int> out_shape = sa;
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  const int rows = sa[sa.size() - 2];
  const int cols = sa[sa.size() - 1];
  const int64_t batch = numel(sa) / (static_cast<int64_t>(rows) * cols);

  auto node = detail::make_op<T>(out_shape, {a.node()}, "transpose_last2");
  const T* src = a.values().data();
  T* dst = node->value.data();
  for (int64_t bi = 0; bi < batch; ++bi) {
    const T* s = src + bi * rows * cols;
    T* d = dst + bi * rows * cols;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        d[static_cast<int64_t>(j) * rows + i] = s[static_cast<int64_t>(i) * cols + j];
      }
    }
  }

  Node<T>* an = a.node().get();
  node->backward_fn = [an, batch, rows, cols](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = detail::grad_buf(*an).data();
    const T* dg = self.grad.data();
    for (int64_t bi = 0; bi < batch; ++bi) {
      const T* g = dg + bi * rows * cols;
      T* d = da + bi * rows * cols;
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
          d[static_cast<int64_t>(i) * cols + j] += g[static_cast<int64_t>(j) * rows + i];
        }
      }
    }
  };
  return Tensor<T>(node);
}

// ------------------------------------------------- add / sub / mul / scale

namespace detail {

enum class Elementwise { Add, Sub, Mul };

template <class T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, Elementwise op,
                    const char* name) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool same = sa == sb;
  const bool suffix = !same && is_suffix(sb, sa);
  if (!same && !suffix) {
    raise(Errc::ShapeMismatch,
          std::string(name) + ": " + shape_str(sa) + " vs " + shape_str(sb));
  }
  if (op == Elementwise::Sub && !same) {
    raise(Errc::ShapeMismatch, "sub requires identical shapes");
  }

  auto node = make_op<T>(sa, {a.node(), b.node()}, name);
  const int64_t total = numel(sa);
  const int64_t span = numel(sb);
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  T* pc = node->value.data();
  for (int64_t i = 0; i < total; ++i) {
    const T bv = pb[i % span];
    switch (op) {
      case Elementwise::Add: pc[i] = pa[i] + bv; break;
      case Elementwise::Sub: pc[i] = pa[i] - bv; break;
      case Elementwise::Mul: pc[i] = pa[i] * bv; break;
    }
  }
  check_finite(node->value, name);

  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  node->backward_fn = [an, bn, op, total, span](Node<T>& self) {
    const T* dg = self.grad.data();
    if (an->requires_grad) {
      T* da = grad_buf(*an).data();
      const T* pb2 = bn->value.data();
      for (int64_t i = 0; i < total; ++i) {
        switch (op) {
          case Elementwise::Add:
          case Elementwise::Sub: da[i] += dg[i]; break;
          case Elementwise::Mul: da[i] += dg[i] * pb2[i % span]; break;
        }
      }
    }
    if (bn->requires_grad) {
      T* db = grad_buf(*bn).data();
      const T* pa2 = an->value.data();
      for (int64_t i = 0; i < total; ++i) {
        switch (op) {
          case Elementwise::Add: db[i % span] += dg[i]; break;
          case Elementwise::Sub: db[i % span] -= dg[i]; break;
          case Elementwise::Mul: db[i % span] += dg[i] * pa2[i]; break;
        }
      }
    }
  };
  return Tensor<T>(node);
}

}  // namespace detail

// add/mul broadcast the right operand when its shape is a suffix of the
// left's (bias rows, positional tables); sub requires identical shapes.
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(a, b, detail::Elementwise::Add, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(a, b, detail::Elementwise::Sub, "sub");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(a, b, detail::Elementwise::Mul, "mul");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, double c) {
  auto node = detail::make_op<T>(a.shape(), {a.node()}, "scale");
  const T* pa = a.values().data();
  T* pc = node->value.data();
  const int64_t total = a.size();
  for (int64_t i = 0; i < total; ++i) pc[i] = static_cast<T>(c * pa[i]);
  detail::check_finite(node->value, "scale");
  Node<T>* an = a.node().get();
  node->backward_fn = [an, c, total](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = detail::grad_buf(*an).data();
    const T* dg = self.grad.data();
    for (int64_t i = 0; i < total; ++i) da[i] += static_cast<T>(c) * dg[i];
  };
  return Tensor<T>(node);
}

// -------------------------------------------------------- pointwise maps

namespace detail {

template <class T, class Fwd, class Bwd>
Tensor<T> unary_op(const Tensor<T>& a, const char* name, Fwd fwd, Bwd bwd) {
  auto node = make_op<T>(a.shape(), {a.node()}, name);
  const T* pa = a.values().data();
  T* pc = node->value.data();
  const int64_t total = a.size();
  for (int64_t i = 0; i < total; ++i) pc[i] = fwd(pa[i]);
  check_finite(node->value, name);
  Node<T>* an = a.node().get();
  node->backward_fn = [an, bwd, total](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = grad_buf(*an).data();
    const T* dg = self.grad.data();
    const T* x = an->value.data();
    const T* y = self.value.data();
    for (int64_t i = 0; i < total; ++i) da[i] += dg[i] * bwd(x[i], y[i]);
  };
  return Tensor<T>(node);
}

}  // namespace detail

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary_op(
      a, "tanh", [](T x) { return static_cast<T>(std::tanh(static_cast<double>(x))); },
      [](T, T y) { return static_cast<T>(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_op(
      a, "sigmoid",
      [](T x) {
        return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
      },
      [](T, T y) { return y * (static_cast<T>(1) - y); });
}

// Exact-erf GELU; smooth everywhere, which keeps central finite
// differences honest.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return detail::unary_op(
      a, "gelu",
      [=](T x) {
        const double xd = static_cast<double>(x);
        return static_cast<T>(0.5 * xd * (1.0 + std::erf(xd * inv_sqrt2)));
      },
      [=](T x, T) {
        const double xd = static_cast<double>(x);
        const double cdf = 0.5 * (1.0 + std::erf(xd * inv_sqrt2));
        return static_cast<T>(cdf + xd * inv_sqrt2pi * std::exp(-0.5 * xd * xd));
      });
}

// ---------------------------------------------------------------- softmax

// Softmax over the last axis. When `mask` is nonempty it must have one
// byte per element of `a`; entries with mask 0 get probability exactly
// 0.0 and take no part in the max or the normalizing sum, which is what
// makes padding invariance bit-exact. A fully masked row falls back to
// the uniform distribution (such rows only arise at padded query
// positions, whose outputs are never read).
template <class T>
Tensor<T> softmax_lastaxis(const Tensor<T>& a,
                           const std::vector<uint8_t>& mask = {}) {
  const auto& sa = a.shape();
  if (sa.empty()) raise(Errc::ShapeMismatch, "softmax on rank-0");
  if (!mask.empty() && static_cast<int64_t>(mask.size()) != a.size()) {
    raise(Errc::ShapeMismatch, "softmax mask size " +
                                   std::to_string(mask.size()) + " vs " +
                                   std::to_string(a.size()));
  }
  const int n = sa.back();
  const int64_t rows = a.size() / n;

  auto node = detail::make_op<T>(sa, {a.node()}, "softmax");
  const T* pa = a.values().data();
  T* pc = node->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = pa + r * n;
    T* y = pc + r * n;
    const uint8_t* m = mask.empty() ? nullptr : mask.data() + r * n;
    double max_v = -std::numeric_limits<double>::infinity();
    int valid = 0;
    for (int j = 0; j < n; ++j) {
      if (m && !m[j]) continue;
      ++valid;
      max_v = std::max(max_v, static_cast<double>(x[j]));
    }
    if (valid == 0) {
      const T u = static_cast<T>(1.0 / n);
      for (int j = 0; j < n; ++j) y[j] = u;
      continue;
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (m && !m[j]) {
        y[j] = T(0);
      } else {
        const double e = std::exp(static_cast<double>(x[j]) - max_v);
        y[j] = static_cast<T>(e);
        sum += e;
      }
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) y[j] = static_cast<T>(y[j] * inv);
  }
  detail::check_finite(node->value, "softmax");

  Node<T>* an = a.node().get();
  node->backward_fn = [an, rows, n](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = detail::grad_buf(*an).data();
    const T* dg = self.grad.data();
    const T* y = self.value.data();
    for (int64_t r = 0; r < rows; ++r) {
      const T* yr = y + r * n;
      const T* gr = dg + r * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += static_cast<double>(yr[j]) * gr[j];
      T* dr = da + r * n;
      for (int j = 0; j < n; ++j) {
        dr[j] += static_cast<T>(yr[j] * (static_cast<double>(gr[j]) - dot));
      }
    }
  };
  return Tensor<T>(node);
}

// ------------------------------------------------------------- reductions

template <class T>
Tensor<T> mean_axis(const Tensor<T>& a, int axis) {
  const auto& sa = a.shape();
  if (axis < 0 || axis >= static_cast<int>(sa.size())) {
    raise(Errc::ShapeMismatch, "mean_axis: axis " + std::to_string(axis) +
                                   " out of range for " + shape_str(sa));
  }
  std::vector<int> out_shape;
  for (int i = 0; i < static_cast<int>(sa.size()); ++i) {
    if (i != axis) out_shape.push_back(sa[i]);
  }
  if (out_shape.empty()) out_shape = {1};

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sa[i];
  for (int i = axis + 1; i < static_cast<int>(sa.size()); ++i) inner *= sa[i];
  const int dim = sa[axis];

  auto node = detail::make_op<T>(out_shape, {a.node()}, "mean_axis");
  const T* pa = a.values().data();
  T* pc = node->value.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      double acc = 0.0;
      for (int d = 0; d < dim; ++d) {
        acc += static_cast<double>(pa[(o * dim + d) * inner + in]);
      }
      pc[o * inner + in] = static_cast<T>(acc / dim);
    }
  }
  detail::check_finite(node->value, "mean_axis");

  Node<T>* an = a.node().get();
  node->backward_fn = [an, outer, inner, dim](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = detail::grad_buf(*an).data();
    const T* dg = self.grad.data();
    const T invd = static_cast<T>(1.0 / dim);
    for (int64_t o = 0; o < outer; ++o) {
      for (int d = 0; d < dim; ++d) {
        for (int64_t in = 0; in < inner; ++in) {
          da[(o * dim + d) * inner + in] += dg[o * inner + in] * invd;
        }
      }
    }
  };
  return Tensor<T>(node);
}

namespace detail {

template <class T>
Tensor<T> reduce_all(const Tensor<T>& a, bool mean, const char* name) {
  auto node = make_op<T>({1}, {a.node()}, name);
  const T* pa = a.values().data();
  const int64_t total = a.size();
  double acc = 0.0;
  for (int64_t i = 0; i < total; ++i) acc += static_cast<double>(pa[i]);
  node->value[0] = static_cast<T>(mean ? acc / static_cast<double>(total) : acc);
  check_finite(node->value, name);
  Node<T>* an = a.node().get();
  node->backward_fn = [an, mean, total](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = grad_buf(*an).data();
    const T g = self.grad[0];
    const T w = mean ? static_cast<T>(static_cast<double>(g) / total) : g;
    for (int64_t i = 0; i < total; ++i) da[i] += w;
  };
  return Tensor<T>(node);
}

}  // namespace detail

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  return detail::reduce_all(a, false, "sum_all");
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return detail::reduce_all(a, true, "mean_all");
}

// ---------------------------------------------------------------- dropout

// Inverted dropout. With train=false or p=0 this returns the input tensor
// itself and draws nothing from the RNG; otherwise it draws exactly one
// uniform per element in row-major order (the documented draw order).
template <class T>
Tensor<T> dropout(const Tensor<T>& a, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    raise(Errc::ConfigError, "dropout p must be in [0, 1)");
  }
  if (!train || p == 0.0) return a;

  auto node = detail::make_op<T>(a.shape(), {a.node()}, "dropout");
  const int64_t total = a.size();
  std::vector<T> mask(static_cast<size_t>(total));
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (int64_t i = 0; i < total; ++i) {
    mask[i] = rng.uniform_real() >= p ? keep_scale : T(0);
  }
  const T* pa = a.values().data();
  T* pc = node->value.data();
  for (int64_t i = 0; i < total; ++i) pc[i] = pa[i] * mask[i];

  Node<T>* an = a.node().get();
  node->backward_fn = [an, mask = std::move(mask), total](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = detail::grad_buf(*an).data();
    const T* dg = self.grad.data();
    for (int64_t i = 0; i < total; ++i) da[i] += dg[i] * mask[i];
  };
  return Tensor<T>(node);
}

// ------------------------------------------------------------ concat last

template <class T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) raise(Errc::ShapeMismatch, "concat of zero tensors");
  const auto& s0 = parts[0].shape();
  std::vector<int> out_shape = s0;
  int last = 0;
  std::vector<NodePtr<T>> parent_nodes;
  for (const auto& p : parts) {
    const auto& sp = p.shape();
    if (sp.size() != s0.size()) {
      raise(Errc::ShapeMismatch, "concat rank mismatch");
    }
    for (size_t i = 0; i + 1 < sp.size(); ++i) {
      if (sp[i] != s0[i]) {
        raise(Errc::ShapeMismatch, "concat: " + shape_str(s0) + " vs " +
                                       shape_str(sp));
      }
    }
    last += sp.back();
    parent_nodes.push_back(p.node());
  }
  out_shape.back() = last;

  auto node = detail::make_op<T>(out_shape, parent_nodes, "concat");
  const int64_t rows = numel(out_shape) / last;
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p.shape().back());

  T* pc = node->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      const int w = widths[pi];
      const T* src = parts[pi].values().data() + r * w;
      std::copy(src, src + w, pc + r * last + off);
      off += w;
    }
  }

  node->backward_fn = [rows, last, widths](Node<T>& self) {
    const T* dg = self.grad.data();
    int64_t off = 0;
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      Node<T>* pn = self.parents[pi].get();
      const int w = widths[pi];
      if (pn->requires_grad) {
        T* dp = detail::grad_buf(*pn).data();
        for (int64_t r = 0; r < rows; ++r) {
          const T* g = dg + r * last + off;
          T* d = dp + r * w;
          for (int j = 0; j < w; ++j) d[j] += g[j];
        }
      }
      off += w;
    }
  };
  return Tensor<T>(node);
}

template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_last(std::vector<Tensor<T>>{a, b});
}

// ----------------------------------------------------------------- slice

template <class T>
Tensor<T> slice_axis(const Tensor<T>& a, int axis, int start, int len) {
  const auto& sa = a.shape();
  if (axis < 0 || axis >= static_cast<int>(sa.size()) || start < 0 ||
      len < 1 || start + len > sa[axis]) {
    raise(Errc::ShapeMismatch, "slice_axis(" + std::to_string(axis) + "," +
                                   std::to_string(start) + "," +
                                   std::to_string(len) + ") on " +
                                   shape_str(sa));
  }
  std::vector<int> out_shape = sa;
  out_shape[axis] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sa[i];
  for (int i = axis + 1; i < static_cast<int>(sa.size()); ++i) inner *= sa[i];
  const int dim = sa[axis];

  auto node = detail::make_op<T>(out_shape, {a.node()}, "slice");
  const T* pa = a.values().data();
  T* pc = node->value.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int d = 0; d < len; ++d) {
      const T* src = pa + (o * dim + start + d) * inner;
      std::copy(src, src + inner, pc + (o * len + d) * inner);
    }
  }

  Node<T>* an = a.node().get();
  node->backward_fn = [an, outer, inner, dim, start, len](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = detail::grad_buf(*an).data();
    const T* dg = self.grad.data();
    for (int64_t o = 0; o < outer; ++o) {
      for (int d = 0; d < len; ++d) {
        const T* g = dg + (o * len + d) * inner;
        T* dst = da + (o * dim + start + d) * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
      }
    }
  };
  return Tensor<T>(node);
}

// ---------------------------------------------------------------- reshape

template <class T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> new_shape) {
  if (numel(new_shape) != a.size()) {
    raise(Errc::ShapeMismatch, "reshape " + shape_str(a.shape()) + " -> " +
                                   shape_str(new_shape));
  }
  auto node = detail::make_op<T>(std::move(new_shape), {a.node()}, "reshape");
  node->value = a.values();
  Node<T>* an = a.node().get();
  node->backward_fn = [an](Node<T>& self) {
    if (!an->requires_grad) return;
    T* da = detail::grad_buf(*an).data();
    const T* dg = self.grad.data();
    const int64_t total = static_cast<int64_t>(self.value.size());
    for (int64_t i = 0; i < total; ++i) da[i] += dg[i];
  };
  return Tensor<T>(node);
}

// ------------------------------------------------------- embedding gather

// out[(lead), :] = table[ids[lead], :]. ids are data, not graph nodes;
// backward scatter-adds rows into the table gradient.
template <class T>
Tensor<T> embedding_gather(const Tensor<T>& table, const std::vector<int>& ids,
                           std::vector<int> id_shape) {
  const auto& st = table.shape();
  if (st.size() != 2) {
    raise(Errc::ShapeMismatch, "embedding table must be rank 2, got " +
                                   shape_str(st));
  }
  if (numel(id_shape) != static_cast<int64_t>(ids.size())) {
    raise(Errc::ShapeMismatch, "id_shape does not match id count");
  }
  const int vocab = st[0];
  const int dim = st[1];
  for (const int id : ids) {
    if (id < 0 || id >= vocab) {
      raise(Errc::IdOutOfRange, "token id " + std::to_string(id) +
                                    " not in [0, " + std::to_string(vocab) +
                                    ")");
    }
  }
  std::vector<int> out_shape = std::move(id_shape);
  out_shape.push_back(dim);

  auto node = detail::make_op<T>(out_shape, {table.node()}, "gather");
  const T* pt = table.values().data();
  T* pc = node->value.data();
  for (size_t i = 0; i < ids.size(); ++i) {
    const T* src = pt + static_cast<int64_t>(ids[i]) * dim;
    std::copy(src, src + dim, pc + static_cast<int64_t>(i) * dim);
  }

  Node<T>* tn = table.node().get();
  node->backward_fn = [tn, ids, dim](Node<T>& self) {
    if (!tn->requires_grad) return;
    T* dt = detail::grad_buf(*tn).data();
    const T* dg = self.grad.data();
    for (size_t i = 0; i < ids.size(); ++i) {
      const T* g = dg + static_cast<int64_t>(i) * dim;
      T* dst = dt + static_cast<int64_t>(ids[i]) * dim;
      for (int j = 0; j < dim; ++j) dst[j] += g[j];
    }
  };
  return Tensor<T>(node);
}

// -------------------------------------------------------------- layernorm

// Normalizes over the last axis with population variance, then applies
// gain and bias (both shape (D)).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, double eps = 1e-5) {
  const auto& sx = x.shape();
  if (sx.empty()) raise(Errc::ShapeMismatch, "layer_norm on rank-0");
  const int dim = sx.back();
  if (gain.shape() != std::vector<int>{dim} ||
      bias.shape() != std::vector<int>{dim}) {
    raise(Errc::ShapeMismatch, "layer_norm gain/bias must be (" +
                                   std::to_string(dim) + ")");
  }
  const int64_t rows = x.size() / dim;

  auto node = detail::make_op<T>(sx, {x.node(), gain.node(), bias.node()},
                                 "layer_norm");
  std::vector<T> inv_sigma(static_cast<size_t>(rows));
  std::vector<T> x_hat(static_cast<size_t>(rows) * dim);
  const T* px = x.values().data();
  const T* pg = gain.values().data();
  const T* pb = bias.values().data();
  T* pc = node->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = px + r * dim;
    double mu = 0.0;
    for (int j = 0; j < dim; ++j) mu += static_cast<double>(xr[j]);
    mu /= dim;
    double var = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = static_cast<double>(xr[j]) - mu;
      var += d * d;
    }
    var /= dim;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = static_cast<T>(inv);
    T* hr = x_hat.data() + r * dim;
    T* yr = pc + r * dim;
    for (int j = 0; j < dim; ++j) {
      const T h = static_cast<T>((static_cast<double>(xr[j]) - mu) * inv);
      hr[j] = h;
      yr[j] = h * pg[j] + pb[j];
    }
  }
  detail::check_finite(node->value, "layer_norm");

  Node<T>* xn = x.node().get();
  Node<T>* gn = gain.node().get();
  Node<T>* bn = bias.node().get();
  node->backward_fn = [xn, gn, bn, rows, dim, inv_sigma = std::move(inv_sigma),
                       x_hat = std::move(x_hat)](Node<T>& self) {
    const T* dg = self.grad.data();
    const T* pg = gn->value.data();
    if (gn->requires_grad) {
      T* dgain = detail::grad_buf(*gn).data();
      for (int64_t r = 0; r < rows; ++r) {
        const T* g = dg + r * dim;
        const T* h = x_hat.data() + r * dim;
        for (int j = 0; j < dim; ++j) dgain[j] += g[j] * h[j];
      }
    }
    if (bn->requires_grad) {
      T* dbias = detail::grad_buf(*bn).data();
      for (int64_t r = 0; r < rows; ++r) {
        const T* g = dg + r * dim;
        for (int j = 0; j < dim; ++j) dbias[j] += g[j];
      }
    }
    if (xn->requires_grad) {
      T* dx = detail::grad_buf(*xn).data();
      for (int64_t r = 0; r < rows; ++r) {
        const T* g = dg + r * dim;
        const T* h = x_hat.data() + r * dim;
        double mean_dxhat = 0.0, mean_dxhat_h = 0.0;
        for (int j = 0; j < dim; ++j) {
          const double dxh = static_cast<double>(g[j]) * pg[j];
          mean_dxhat += dxh;
          mean_dxhat_h += dxh * h[j];
        }
        mean_dxhat /= dim;
        mean_dxhat_h /= dim;
        const double inv = static_cast<double>(inv_sigma[r]);
        T* d = dx + r * dim;
        for (int j = 0; j < dim; ++j) {
          const double dxh = static_cast<double>(g[j]) * pg[j];
          d[j] += static_cast<T>(inv * (dxh - mean_dxhat - h[j] * mean_dxhat_h));
        }
      }
    }
  };
  return Tensor<T>(node);
}

// ------------------------------------------------------ masked mean pool

// out[b, :] = mean over the first lengths[b] positions of h[b, :, :].
// Padded positions never enter the sum, so the result is bit-exact
// regardless of how much padding follows.
template <class T>
Tensor<T> masked_mean_pool(const Tensor<T>& h, const std::vector<int>& lengths) {
  const auto& sh = h.shape();
  if (sh.size() != 3) {
    raise(Errc::ShapeMismatch, "masked_mean_pool needs (batch, seq, dim)");
  }
  const int batch = sh[0], seq = sh[1], dim = sh[2];
  if (static_cast<int>(lengths.size()) != batch) {
    raise(Errc::ShapeMismatch, "lengths size vs batch");
  }
  for (int b = 0; b < batch; ++b) {
    if (lengths[b] < 1) {
      raise(Errc::AllPadRow, "row " + std::to_string(b) + " has length 0");
    }
    if (lengths[b] > seq) {
      raise(Errc::ShapeMismatch, "length exceeds sequence length");
    }
  }

  auto node = detail::make_op<T>({batch, dim}, {h.node()}, "masked_mean_pool");
  const T* ph = h.values().data();
  T* pc = node->value.data();
  for (int b = 0; b < batch; ++b) {
    const int len = lengths[b];
    for (int j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (int t = 0; t < len; ++t) {
        acc += static_cast<double>(ph[(static_cast<int64_t>(b) * seq + t) * dim + j]);
      }
      pc[static_cast<int64_t>(b) * dim + j] = static_cast<T>(acc / len);
    }
  }
  detail::check_finite(node->value, "masked_mean_pool");

  Node<T>* hn = h.node().get();
  node->backward_fn = [hn, lengths, batch, seq, dim](Node<T>& self) {
    if (!hn->requires_grad) return;
    T* dh = detail::grad_buf(*hn).data();
    const T* dg = self.grad.data();
    for (int b = 0; b < batch; ++b) {
      const int len = lengths[b];
      const T w = static_cast<T>(1.0 / len);
      for (int t = 0; t < len; ++t) {
        T* d = dh + (static_cast<int64_t>(b) * seq + t) * dim;
        const T* g = dg + static_cast<int64_t>(b) * dim;
        for (int j = 0; j < dim; ++j) d[j] += g[j] * w;
      }
    }
  };
  return Tensor<T>(node);
}

// -------------------------------------------------------------- stack time

// Stacks per-step (batch, dim) tensors into (batch, steps, dim).
template <class T>
Tensor<T> stack_time(const std::vector<Tensor<T>>& steps) {
  if (steps.empty()) raise(Errc::ShapeMismatch, "stack_time of zero tensors");
  const auto& s0 = steps[0].shape();
  if (s0.size() != 2) raise(Errc::ShapeMismatch, "stack_time needs rank-2 steps");
  const int batch = s0[0], dim = s0[1];
  std::vector<NodePtr<T>> parents;
  for (const auto& s : steps) {
    if (s.shape() != s0) raise(Errc::ShapeMismatch, "stack_time step shapes differ");
    parents.push_back(s.node());
  }
  const int seq = static_cast<int>(steps.size());

  auto node = detail::make_op<T>({batch, seq, dim}, parents, "stack_time");
  T* pc = node->value.data();
  for (int t = 0; t < seq; ++t) {
    const T* src = steps[t].values().data();
    for (int b = 0; b < batch; ++b) {
      std::copy(src + static_cast<int64_t>(b) * dim,
                src + static_cast<int64_t>(b + 1) * dim,
                pc + (static_cast<int64_t>(b) * seq + t) * dim);
    }
  }

  node->backward_fn = [batch, seq, dim](Node<T>& self) {
    const T* dg = self.grad.data();
    for (int t = 0; t < seq; ++t) {
      Node<T>* pn = self.parents[t].get();
      if (!pn->requires_grad) continue;
      T* d = detail::grad_buf(*pn).data();
      for (int b = 0; b < batch; ++b) {
        const T* g = dg + (static_cast<int64_t>(b) * seq + t) * dim;
        for (int j = 0; j < dim; ++j) d[static_cast<int64_t>(b) * dim + j] += g[j];
      }
    }
  };
  return Tensor<T>(node);
}

// ---------------------------------------------------------------- backward

// Reverse-mode sweep from a scalar loss. Gradients of parameter leaves
// accumulate across calls (the caller zeroes between optimizer steps);
// interior gradients are fresh per call.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    raise(Errc::NotScalarLoss,
          "loss has shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; recursion depth on recurrent graphs can
  // reach thousands of nodes.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* parent = node->parents[idx].get();
      ++idx;
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (n->is_param) {
      if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), T(0));
    } else {
      n->grad.assign(n->value.size(), T(0));
    }
  }

  Node<T>* root = loss.node().get();
  root->grad[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace fineas::num
