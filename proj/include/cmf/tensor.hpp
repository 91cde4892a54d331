#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cmf/error.hpp"

namespace cmf {

using Shape = std::vector<std::size_t>;

namespace detail {

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates into parents' grads

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Reverse-mode tracking is on by default; NoGradGuard switches it off for
// plain evaluation (finite differences, inference).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense row-major tensor of 64-bit floats. Value-semantics handle over a
// shared node; ops build a fresh graph every forward pass, while leaf nodes
// (parameters) live as long as some Tensor refers to them.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape) { return full(shape, 0.0); }

  static Tensor full(const Shape& shape, double value) {
    validate_shape(shape);
    auto n = std::make_shared<detail::Node>();
    n->shape = shape;
    n->data.assign(detail::shape_size(shape), value);
    return Tensor(std::move(n));
  }

  static Tensor from_data(const Shape& shape, std::vector<double> data) {
    validate_shape(shape);
    if (detail::shape_size(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + detail::shape_str(shape));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = shape;
    n->data = std::move(data);
    return Tensor(std::move(n));
  }

  static Tensor scalar(double value) { return from_data({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return node_->shape[0]; }
  std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }

  double& at(std::size_t i, std::size_t j) { return node_->data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return node_->data[i * cols() + j]; }

  double item() const {
    if (size() != 1) {
      throw ContractError("item() requires a scalar tensor, got shape " +
                          detail::shape_str(shape()));
    }
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }

  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    if (v) node_->ensure_grad();
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }

  const std::vector<double>& grad() const {
    if (node_->grad.empty()) {
      throw ContractError("gradient not populated; call backward() first");
    }
    return node_->grad;
  }

  std::vector<double>& grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Reverse sweep from a scalar. Leaf gradients accumulate across calls;
  // interior gradients are local to each sweep.
  void backward() const {
    if (size() != 1) {
      throw ContractError("backward() requires a scalar loss, got shape " +
                          detail::shape_str(shape()));
    }
    std::vector<detail::Node*> topo;
    std::unordered_set<detail::Node*> seen;
    // Iterative post-order DFS over recorded parents.
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        detail::Node* p = node->parents[next++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        topo.push_back(node);
        stack.pop_back();
      }
    }
    for (detail::Node* n : topo) {
      if (n->backward) n->grad.assign(n->data.size(), 0.0);  // interior: fresh per sweep
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      if ((*it)->backward) (*it)->backward(**it);
    }
  }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must not be empty");
    for (std::size_t e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " +
                                   detail::shape_str(shape));
    }
  }

  std::shared_ptr<detail::Node> node_;
};

// Named parameter handles in a stable order; shared by optimizers,
// checkpointing, and the finite-difference checker.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

// Builds an op result node, wiring parents and the backward rule only when
// gradients are being tracked.
inline Tensor make_op(const Shape& shape, std::vector<double> data,
                      const std::vector<Tensor>& parents,
                      std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->data = std::move(data);
  bool track = grad_mode();
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p.node()->requires_grad;
    track = any;
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

inline void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + " requires a 2-D tensor, got " +
                     shape_str(t.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul inner dimensions disagree: " +
                     detail::shape_str(a.shape()) + " x " +
                     detail::shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double av = pa[i * k + l];
      const double* pbrow = pb + l * n;
      double* prow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) prow[j] += av * pbrow[j];
    }
  }
  return detail::make_op({m, n}, std::move(out), {a, b},
                         [m, k, n](detail::Node& node) {
    auto& pa = node.parents[0];
    auto& pb = node.parents[1];
    const double* dc = node.grad.data();
    if (pa->requires_grad) {
      pa->ensure_grad();
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          double acc = 0.0;
          const double* dcrow = dc + i * n;
          const double* brow = pb->data.data() + l * n;
          for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
          pa->grad[i * k + l] += acc;
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa->data.data() + i * k;
        const double* dcrow = dc + i * n;
        for (std::size_t l = 0; l < k; ++l) {
          const double av = arow[l];
          double* grow = pb->grad.data() + l * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += av * dcrow[j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& x) {
  detail::require_2d(x, "transpose");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.data()[i * n + j];
  return detail::make_op({n, m}, std::move(out), {x},
                         [m, n](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        p->grad[i * n + j] += node.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

// Numerically stable softmax along `axis` of a 1-D or 2-D tensor.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.ndim() > 2) {
    throw ShapeError("softmax supports 1-D or 2-D tensors, got " +
                     detail::shape_str(x.shape()));
  }
  if (axis >= x.ndim()) {
    throw ShapeError("softmax axis " + std::to_string(axis) +
                     " out of range for shape " + detail::shape_str(x.shape()));
  }
  const std::size_t rows = x.ndim() == 2 ? x.shape()[0] : 1;
  const std::size_t cols = x.ndim() == 2 ? x.shape()[1] : x.shape()[0];
  // Slice iteration: for axis == last, slices are rows; for axis == 0 of a
  // 2-D tensor, slices run down columns.
  const bool along_cols = (x.ndim() == 2 && axis == 0);
  const std::size_t n_slices = along_cols ? cols : rows;
  const std::size_t slice_len = along_cols ? rows : cols;
  const std::size_t stride = along_cols ? cols : 1;

  std::vector<double> out(x.size());
  const double* px = x.data().data();
  for (std::size_t s = 0; s < n_slices; ++s) {
    const std::size_t base = along_cols ? s : s * cols;
    double mx = px[base];
    for (std::size_t i = 1; i < slice_len; ++i)
      mx = std::max(mx, px[base + i * stride]);
    double denom = 0.0;
    for (std::size_t i = 0; i < slice_len; ++i) {
      double e = std::exp(px[base + i * stride] - mx);
      out[base + i * stride] = e;
      denom += e;
    }
    for (std::size_t i = 0; i < slice_len; ++i) out[base + i * stride] /= denom;
  }
  std::vector<double> saved = out;
  return detail::make_op(x.shape(), std::move(out), {x},
                         [n_slices, slice_len, stride, along_cols, cols,
                          y = std::move(saved)](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t s = 0; s < n_slices; ++s) {
      const std::size_t base = along_cols ? s : s * cols;
      double dot = 0.0;
      for (std::size_t i = 0; i < slice_len; ++i) {
        const std::size_t idx = base + i * stride;
        dot += node.grad[idx] * y[idx];
      }
      for (std::size_t i = 0; i < slice_len; ++i) {
        const std::size_t idx = base + i * stride;
        p->grad[idx] += y[idx] * (node.grad[idx] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise / structural ops
// ---------------------------------------------------------------------------

// Elementwise addition. The single broadcast form allowed is matrix + bias
// vector over the trailing axis.
inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return detail::make_op(a.shape(), std::move(out), {a, b},
                           [](detail::Node& node) {
      for (int side = 0; side < 2; ++side) {
        auto& p = node.parents[side];
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) p->grad[i] += node.grad[i];
      }
    });
  }
  if (a.ndim() == 2 && b.ndim() == 1 && a.shape()[1] == b.shape()[0]) {
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out[i * n + j] = a.data()[i * n + j] + b.data()[j];
    return detail::make_op(a.shape(), std::move(out), {a, b},
                           [m, n](detail::Node& node) {
      auto& pa = node.parents[0];
      auto& pb = node.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) pa->grad[i] += node.grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) pb->grad[j] += node.grad[i * n + j];
      }
    });
  }
  throw ShapeError("add shapes incompatible: " + detail::shape_str(a.shape()) +
                   " vs " + detail::shape_str(b.shape()));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("sub shapes incompatible: " + detail::shape_str(a.shape()) +
                     " vs " + detail::shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_op(a.shape(), std::move(out), {a, b},
                         [](detail::Node& node) {
    auto& pa = node.parents[0];
    auto& pb = node.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < node.grad.size(); ++i) pa->grad[i] += node.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < node.grad.size(); ++i) pb->grad[i] -= node.grad[i];
    }
  });
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul shapes incompatible: " + detail::shape_str(a.shape()) +
                     " vs " + detail::shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_op(a.shape(), std::move(out), {a, b},
                         [](detail::Node& node) {
    auto& pa = node.parents[0];
    auto& pb = node.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < node.grad.size(); ++i)
        pa->grad[i] += node.grad[i] * pb->data[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < node.grad.size(); ++i)
        pb->grad[i] += node.grad[i] * pa->data[i];
    }
  });
}

inline Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * c;
  return detail::make_op(x.shape(), std::move(out), {x},
                         [c](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i) p->grad[i] += c * node.grad[i];
  });
}

inline Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  std::vector<double> saved = out;
  return detail::make_op(x.shape(), std::move(out), {x},
                         [y = std::move(saved)](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      p->grad[i] += node.grad[i] * (1.0 - y[i] * y[i]);
  });
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  std::vector<double> saved = out;
  return detail::make_op(x.shape(), std::move(out), {x},
                         [y = std::move(saved)](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      p->grad[i] += node.grad[i] * y[i] * (1.0 - y[i]);
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return detail::make_op(x.shape(), std::move(out), {x},
                         [](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      if (p->data[i] > 0.0) p->grad[i] += node.grad[i];
  });
}

// Concatenation of 2-D tensors along axis 0 (rows) or 1 (columns).
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat requires at least one tensor");
  if (axis > 1) throw ShapeError("concat axis must be 0 or 1");
  for (const auto& p : parts) detail::require_2d(p, "concat");
  const std::size_t other = 1 - axis;
  const std::size_t fixed = parts[0].shape()[other];
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.shape()[other] != fixed) {
      throw ShapeError("concat extents disagree on axis " + std::to_string(other) +
                       ": " + detail::shape_str(parts[0].shape()) + " vs " +
                       detail::shape_str(p.shape()));
    }
    total += p.shape()[axis];
  }
  Shape out_shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> out(total * fixed);
  if (axis == 0) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.data().begin(), p.data().end(), out.begin() + off);
      off += p.size();
    }
  } else {
    const std::size_t m = fixed;
    std::size_t col_off = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.shape()[1];
      for (std::size_t i = 0; i < m; ++i)
        std::copy(p.data().begin() + i * pc, p.data().begin() + (i + 1) * pc,
                  out.begin() + i * total + col_off);
      col_off += pc;
    }
  }
  std::vector<std::size_t> extents;
  for (const auto& p : parts) extents.push_back(p.shape()[axis]);
  return detail::make_op(out_shape, std::move(out), parts,
                         [axis, fixed, total, extents](detail::Node& node) {
    if (axis == 0) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < node.parents.size(); ++k) {
        auto& p = node.parents[k];
        const std::size_t len = extents[k] * fixed;
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < len; ++i) p->grad[i] += node.grad[off + i];
        }
        off += len;
      }
    } else {
      std::size_t col_off = 0;
      for (std::size_t k = 0; k < node.parents.size(); ++k) {
        auto& p = node.parents[k];
        const std::size_t pc = extents[k];
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < fixed; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              p->grad[i * pc + j] += node.grad[i * total + col_off + j];
        }
        col_off += pc;
      }
    }
  });
}

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  return concat(std::vector<Tensor>{a, b}, axis);
}

inline Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  detail::require_2d(x, "slice_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (r0 >= r1 || r1 > m) {
    throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") invalid for " + detail::shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin() + r0 * n, x.data().begin() + r1 * n);
  return detail::make_op({r1 - r0, n}, std::move(out), {x},
                         [r0, n](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      p->grad[r0 * n + i] += node.grad[i];
  });
}

inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  detail::require_2d(x, "slice_cols");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (c0 >= c1 || c1 > n) {
    throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") invalid for " + detail::shape_str(x.shape()));
  }
  const std::size_t w = c1 - c0;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(x.data().begin() + i * n + c0, x.data().begin() + i * n + c1,
              out.begin() + i * w);
  return detail::make_op({m, w}, std::move(out), {x},
                         [c0, n, w, m](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j)
        p->grad[i * n + c0 + j] += node.grad[i * w + j];
  });
}

inline Tensor row(const Tensor& x, std::size_t i) { return slice_rows(x, i, i + 1); }

inline Tensor sum(const Tensor& x) {
  double acc = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return detail::make_op({1}, {acc}, {x}, [](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (double& g : p->grad) g += node.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double acc = std::accumulate(x.data().begin(), x.data().end(), 0.0) * inv;
  return detail::make_op({1}, {acc}, {x}, [inv](detail::Node& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (double& g : p->grad) g += inv * node.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Small data helpers (no gradients involved)
// ---------------------------------------------------------------------------

inline bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

inline std::size_t argmax_row(const Tensor& t, std::size_t r) {
  const std::size_t n = t.cols();
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (t.at(r, j) > t.at(r, best)) best = j;
  return best;
}

}  // namespace cmf
