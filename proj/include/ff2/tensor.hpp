#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ff2/errors.hpp"
#include "ff2/rng.hpp"

namespace ff2 {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

// One node of the computation graph. Leaves (parameters, constants) have no
// backward_fn; op outputs record their parents and how to push gradients
// back to them. Gradient accumulation is additive, so a tensor consumed by
// several ops receives the sum of all path gradients.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // same length as values iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool leaf() const { return !backward_fn; }
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats participating in a reverse-mode
// differentiation graph. Copies share storage (value-semantic handle).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return make(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    Tensor t = make(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
  }

  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("from_values: shape " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    Tensor t = make(std::move(shape), requires_grad);
    t.node_->values = std::move(values);
    return t;
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_values({1}, {value}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false) {
    Tensor t = make(std::move(shape), requires_grad);
    for (double& v : t.values()) v = rng.normal(0.0, stddev);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return node_->values.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }

  double value() const {
    if (size() != 1) {
      throw ContractError("value() requires a scalar, got " +
                          shape_str(shape()));
    }
    return node_->values[0];
  }

  void zero_grad() {
    if (node_ && node_->requires_grad) {
      std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
  }

  // Reverse-mode sweep from a scalar. Populates grad for every
  // requires_grad ancestor; leaf gradients accumulate across calls,
  // interior gradients are scratch space reset on every call.
  void backward() const {
    if (!node_ || size() != 1) {
      throw ContractError("backward requires a scalar loss, got " +
                          (node_ ? shape_str(shape()) : std::string("null")));
    }
    if (!node_->requires_grad) return;

    std::vector<detail::Node*> order = topo_order();
    for (detail::Node* n : order) {
      if (!n->leaf() && n->requires_grad) {
        std::fill(n->grad.begin(), n->grad.end(), 0.0);
      }
    }
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (!n->leaf() && n->requires_grad) n->backward_fn(*n);
    }
  }

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node)
      : node_(std::move(node)) {}

  static Tensor make(Shape shape, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->values.assign(shape_numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->values.size(), 0.0);
    return Tensor(std::move(n));
  }

  // Post-order DFS: parents precede consumers, each node visited once.
  std::vector<detail::Node*> topo_order() const {
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        stack.back().second = idx + 1;
        detail::Node* p = n->parents[idx].get();
        if (p && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }

  friend Tensor op_result(Shape shape, const std::vector<Tensor>& parents,
                          std::function<void(detail::Node&)> backward_fn);

  std::shared_ptr<detail::Node> node_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Builds an op output: requires_grad if any parent does, in which case the
// parent links and backward_fn are attached (otherwise the graph is pruned).
inline Tensor op_result(Shape shape, const std::vector<Tensor>& parents,
                        std::function<void(detail::Node&)> backward_fn) {
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || p.requires_grad();
  Tensor out = Tensor::make(std::move(shape), rg);
  if (rg) {
    for (const Tensor& p : parents) out.node_->parents.push_back(p.node_ptr());
    out.node_->backward_fn = std::move(backward_fn);
  }
  return out;
}

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline void check_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = op_result(a.shape(), {a, b}, [](detail::Node& o) {
    for (int s = 0; s < 2; ++s) {
      detail::Node& p = *o.parents[static_cast<std::size_t>(s)];
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
    }
  });
  const std::size_t n = out.size();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = op_result(a.shape(), {a, b}, [](detail::Node& o) {
    detail::Node& pa = *o.parents[0];
    detail::Node& pb = *o.parents[1];
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += o.grad[i];
      if (pb.requires_grad) pb.grad[i] -= o.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = a.values()[i] - b.values()[i];
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = op_result(a.shape(), {a, b}, [](detail::Node& o) {
    detail::Node& pa = *o.parents[0];
    detail::Node& pb = *o.parents[1];
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += o.grad[i] * pb.values[i];
      if (pb.requires_grad) pb.grad[i] += o.grad[i] * pa.values[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = a.values()[i] * b.values()[i];
  }
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor out = op_result(a.shape(), {a}, [c](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += c * o.grad[i];
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = c * a.values()[i];
  }
  return out;
}

// x[n x d] + v[d], broadcast over rows.
inline Tensor add_rows(const Tensor& x, const Tensor& v) {
  detail::check_rank(x, 2, "add_rows");
  detail::check_rank(v, 1, "add_rows");
  if (x.dim(1) != v.dim(0)) {
    throw ShapeError("add_rows: width mismatch " + shape_str(x.shape()) +
                     " vs " + shape_str(v.shape()));
  }
  const int n = x.dim(0), d = x.dim(1);
  Tensor out = op_result(x.shape(), {x, v}, [n, d](detail::Node& o) {
    detail::Node& px = *o.parents[0];
    detail::Node& pv = *o.parents[1];
    for (int i = 0; i < n; ++i) {
      const std::size_t row = static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) {
        if (px.requires_grad) px.grad[row + j] += o.grad[row + j];
        if (pv.requires_grad) pv.grad[static_cast<std::size_t>(j)] += o.grad[row + j];
      }
    }
  });
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * d + j;
      out.values()[k] = x.values()[k] + v.values()[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

// x[B x m x n] + y[m x n], broadcast over the leading axis.
inline Tensor add_bcast_batch(const Tensor& x, const Tensor& y) {
  detail::check_rank(x, 3, "add_bcast_batch");
  detail::check_rank(y, 2, "add_bcast_batch");
  if (x.dim(1) != y.dim(0) || x.dim(2) != y.dim(1)) {
    throw ShapeError("add_bcast_batch: " + shape_str(x.shape()) + " vs " +
                     shape_str(y.shape()));
  }
  const std::size_t batch = static_cast<std::size_t>(x.dim(0));
  const std::size_t inner = y.size();
  Tensor out = op_result(x.shape(), {x, y}, [batch, inner](detail::Node& o) {
    detail::Node& px = *o.parents[0];
    detail::Node& py = *o.parents[1];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = b * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        if (px.requires_grad) px.grad[base + i] += o.grad[base + i];
        if (py.requires_grad) py.grad[i] += o.grad[base + i];
      }
    }
  });
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < inner; ++i) {
      out.values()[b * inner + i] = x.values()[b * inner + i] + y.values()[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

namespace detail {

inline void gemm(const double* a, const double* b, double* c, int m, int k,
                 int n) {
  // c[m x n] += a[m x k] * b[k x n]
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

inline void gemm_nt(const double* a, const double* b, double* c, int m, int k,
                    int n) {
  // c[m x n] += a[m x k] * b[n x k]^T
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

inline void gemm_tn(const double* a, const double* b, double* c, int m, int k,
                    int n) {
  // c[m x n] += a[k x m]^T * b[k x n]
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<std::size_t>(p) * m;
    const double* brow = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double aip = arow[i];
      if (aip == 0.0) continue;
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace detail

// a[m x k] * b[k x n] -> [m x n]. dA = dC B^T, dB = A^T dC.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_rank(a, 2, "matmul");
  detail::check_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = op_result({m, n}, {a, b}, [m, k, n](detail::Node& o) {
    detail::Node& pa = *o.parents[0];
    detail::Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      detail::gemm_nt(o.grad.data(), pb.values.data(), pa.grad.data(), m, n, k);
    }
    if (pb.requires_grad) {
      detail::gemm_tn(pa.values.data(), o.grad.data(), pb.grad.data(), k, m, n);
    }
  });
  detail::gemm(a.values().data(), b.values().data(), out.values().data(), m, k,
               n);
  return out;
}

// Batched a[B x m x k] * b[B x k x n] -> [B x m x n].
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  detail::check_rank(a, 3, "bmm");
  detail::check_rank(b, 3, "bmm");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor out =
      op_result({batch, m, n}, {a, b}, [batch, m, k, n](detail::Node& o) {
        detail::Node& pa = *o.parents[0];
        detail::Node& pb = *o.parents[1];
        for (int bi = 0; bi < batch; ++bi) {
          const std::size_t oa = static_cast<std::size_t>(bi) * m * k;
          const std::size_t ob = static_cast<std::size_t>(bi) * k * n;
          const std::size_t oc = static_cast<std::size_t>(bi) * m * n;
          if (pa.requires_grad) {
            detail::gemm_nt(o.grad.data() + oc, pb.values.data() + ob,
                            pa.grad.data() + oa, m, n, k);
          }
          if (pb.requires_grad) {
            detail::gemm_tn(pa.values.data() + oa, o.grad.data() + oc,
                            pb.grad.data() + ob, k, m, n);
          }
        }
      });
  for (int bi = 0; bi < batch; ++bi) {
    detail::gemm(a.values().data() + static_cast<std::size_t>(bi) * m * k,
                 b.values().data() + static_cast<std::size_t>(bi) * k * n,
                 out.values().data() + static_cast<std::size_t>(bi) * m * n, m,
                 k, n);
  }
  return out;
}

// Batched a[B x m x k] * b[B x n x k]^T -> [B x m x n].
inline Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  detail::check_rank(a, 3, "bmm_nt");
  detail::check_rank(b, 3, "bmm_nt");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw ShapeError("bmm_nt: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  Tensor out =
      op_result({batch, m, n}, {a, b}, [batch, m, k, n](detail::Node& o) {
        detail::Node& pa = *o.parents[0];
        detail::Node& pb = *o.parents[1];
        for (int bi = 0; bi < batch; ++bi) {
          const std::size_t oa = static_cast<std::size_t>(bi) * m * k;
          const std::size_t ob = static_cast<std::size_t>(bi) * n * k;
          const std::size_t oc = static_cast<std::size_t>(bi) * m * n;
          // dA += dC * B ; dB += dC^T * A
          if (pa.requires_grad) {
            detail::gemm(o.grad.data() + oc, pb.values.data() + ob,
                         pa.grad.data() + oa, m, n, k);
          }
          if (pb.requires_grad) {
            detail::gemm_tn(o.grad.data() + oc, pa.values.data() + oa,
                            pb.grad.data() + ob, n, m, k);
          }
        }
      });
  for (int bi = 0; bi < batch; ++bi) {
    detail::gemm_nt(a.values().data() + static_cast<std::size_t>(bi) * m * k,
                    b.values().data() + static_cast<std::size_t>(bi) * n * k,
                    out.values().data() + static_cast<std::size_t>(bi) * m * n,
                    m, k, n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization
// ---------------------------------------------------------------------------

// Numerically stable softmax over the trailing dimension (row-max
// subtraction). Rows sum to 1 for all finite inputs.
inline Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax: rank must be >= 1");
  for (double v : x.values()) {
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
  }
  const int width = x.dim(x.rank() - 1);
  const std::size_t rows = x.size() / static_cast<std::size_t>(width);
  Tensor out = op_result(x.shape(), {x}, [rows, width](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * static_cast<std::size_t>(width);
      double dot = 0.0;
      for (int j = 0; j < width; ++j) {
        dot += o.grad[base + j] * o.values[base + j];
      }
      for (int j = 0; j < width; ++j) {
        p.grad[base + j] += o.values[base + j] * (o.grad[base + j] - dot);
      }
    }
  });
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * static_cast<std::size_t>(width);
    double mx = x.values()[base];
    for (int j = 1; j < width; ++j) mx = std::max(mx, x.values()[base + j]);
    double sum = 0.0;
    for (int j = 0; j < width; ++j) {
      const double e = std::exp(x.values()[base + j] - mx);
      out.values()[base + j] = e;
      sum += e;
    }
    for (int j = 0; j < width; ++j) out.values()[base + j] /= sum;
  }
  return out;
}

inline Tensor softmax_rows(const Tensor& x) {
  detail::check_rank(x, 2, "softmax_rows");
  return softmax_lastdim(x);
}

// Per-row standardization with affine gain/bias: y = gain * (x - mu) / sqrt(var + eps) + bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain,
                         const Tensor& bias, double eps = 1e-5) {
  detail::check_rank(x, 2, "layer_norm");
  detail::check_rank(gain, 1, "layer_norm");
  detail::check_rank(bias, 1, "layer_norm");
  const int n = x.dim(0), d = x.dim(1);
  if (gain.dim(0) != d || bias.dim(0) != d) {
    throw ShapeError("layer_norm: gain/bias width mismatch");
  }
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
  Tensor out = op_result(x.shape(), {x, gain, bias}, [n, d, eps](detail::Node& o) {
    detail::Node& px = *o.parents[0];
    detail::Node& pg = *o.parents[1];
    detail::Node& pb = *o.parents[2];
    std::vector<double> xh(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * d;
      double mu = 0.0;
      for (int j = 0; j < d; ++j) mu += px.values[base + j];
      mu /= d;
      double var = 0.0;
      for (int j = 0; j < d; ++j) {
        const double c = px.values[base + j] - mu;
        var += c * c;
      }
      var /= d;
      const double inv = 1.0 / std::sqrt(var + eps);
      for (int j = 0; j < d; ++j) xh[static_cast<std::size_t>(j)] = (px.values[base + j] - mu) * inv;
      double sum1 = 0.0, sum2 = 0.0;
      for (int j = 0; j < d; ++j) {
        const double dxh = o.grad[base + j] * pg.values[static_cast<std::size_t>(j)];
        sum1 += dxh;
        sum2 += dxh * xh[static_cast<std::size_t>(j)];
      }
      for (int j = 0; j < d; ++j) {
        const double dxh = o.grad[base + j] * pg.values[static_cast<std::size_t>(j)];
        if (px.requires_grad) {
          px.grad[base + j] +=
              inv * (dxh - sum1 / d - xh[static_cast<std::size_t>(j)] * sum2 / d);
        }
        if (pg.requires_grad) {
          pg.grad[static_cast<std::size_t>(j)] += o.grad[base + j] * xh[static_cast<std::size_t>(j)];
        }
        if (pb.requires_grad) pb.grad[static_cast<std::size_t>(j)] += o.grad[base + j];
      }
    }
  });
  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += x.values()[base + j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = x.values()[base + j] - mu;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) {
      out.values()[base + j] =
          gain.values()[static_cast<std::size_t>(j)] * (x.values()[base + j] - mu) * inv +
          bias.values()[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

// Smooth GELU, exact erf form: 0.5 x (1 + erf(x / sqrt(2))).
inline Tensor gelu(const Tensor& x) {
  Tensor out = op_result(x.shape(), {x}, [](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double v = p.values[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      p.grad[i] += o.grad[i] * (cdf + v * pdf);
    }
  });
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    out.values()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return out;
}

// Inverted dropout: zero with probability rate, scale survivors by
// 1/(1-rate). Identity (and no RNG consumption) in eval mode or at rate 0.
inline Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  std::vector<double> mask(x.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out = op_result(x.shape(), {x}, [mask](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      p.grad[i] += o.grad[i] * mask[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = x.values()[i] * mask[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  }
  Tensor out = op_result(std::move(shape), {x}, [](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
  });
  out.values() = x.values();
  return out;
}

// Row gather: out[i] = table[ids[i]]. Backward scatter-adds into the table.
inline Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  detail::check_rank(table, 2, "embedding_rows");
  const int vocab = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw DataError("embedding_rows: token id " + std::to_string(id) +
                      " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  const int n = static_cast<int>(ids.size());
  Tensor out = op_result({n, d}, {table}, [ids, n, d](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (int i = 0; i < n; ++i) {
      const std::size_t src = static_cast<std::size_t>(i) * d;
      const std::size_t dst = static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d;
      for (int j = 0; j < d; ++j) p.grad[dst + j] += o.grad[src + j];
    }
  });
  for (int i = 0; i < n; ++i) {
    const std::size_t src = static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d;
    const std::size_t dst = static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) out.values()[dst + j] = table.values()[src + j];
  }
  return out;
}

// [n x D] -> [H x n x D/H]: slice the feature axis into per-head blocks.
inline Tensor split_heads(const Tensor& x, int heads) {
  detail::check_rank(x, 2, "split_heads");
  const int n = x.dim(0), d = x.dim(1);
  if (heads < 1 || d % heads != 0) {
    throw ShapeError("split_heads: width " + std::to_string(d) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  const int dh = d / heads;
  Tensor out = op_result({heads, n, dh}, {x}, [heads, n, d, dh](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < n; ++i) {
        const std::size_t src = (static_cast<std::size_t>(h) * n + i) * dh;
        const std::size_t dst = static_cast<std::size_t>(i) * d + static_cast<std::size_t>(h) * dh;
        for (int t = 0; t < dh; ++t) p.grad[dst + t] += o.grad[src + t];
      }
    }
  });
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < n; ++i) {
      const std::size_t dst = (static_cast<std::size_t>(h) * n + i) * dh;
      const std::size_t src = static_cast<std::size_t>(i) * d + static_cast<std::size_t>(h) * dh;
      for (int t = 0; t < dh; ++t) out.values()[dst + t] = x.values()[src + t];
    }
  }
  return out;
}

// [H x n x dh] -> [n x H*dh]: concatenate heads back along the feature axis.
inline Tensor merge_cols(const Tensor& x) {
  detail::check_rank(x, 3, "merge_cols");
  const int heads = x.dim(0), n = x.dim(1), dh = x.dim(2);
  const int d = heads * dh;
  Tensor out = op_result({n, d}, {x}, [heads, n, dh, d](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < n; ++i) {
        const std::size_t dst = (static_cast<std::size_t>(h) * n + i) * dh;
        const std::size_t src = static_cast<std::size_t>(i) * d + static_cast<std::size_t>(h) * dh;
        for (int t = 0; t < dh; ++t) p.grad[dst + t] += o.grad[src + t];
      }
    }
  });
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < n; ++i) {
      const std::size_t src = (static_cast<std::size_t>(h) * n + i) * dh;
      const std::size_t dst = static_cast<std::size_t>(i) * d + static_cast<std::size_t>(h) * dh;
      for (int t = 0; t < dh; ++t) out.values()[dst + t] = x.values()[src + t];
    }
  }
  return out;
}

// [n x da] ++ [n x db] -> [n x (da+db)] along the feature axis.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::check_rank(a, 2, "concat_cols");
  detail::check_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_cols: row counts disagree, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const int n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor out = op_result({n, da + db}, {a, b}, [n, da, db](detail::Node& o) {
    detail::Node& pa = *o.parents[0];
    detail::Node& pb = *o.parents[1];
    const int d = da + db;
    for (int i = 0; i < n; ++i) {
      const std::size_t row = static_cast<std::size_t>(i) * d;
      if (pa.requires_grad) {
        for (int j = 0; j < da; ++j) {
          pa.grad[static_cast<std::size_t>(i) * da + j] += o.grad[row + j];
        }
      }
      if (pb.requires_grad) {
        for (int j = 0; j < db; ++j) {
          pb.grad[static_cast<std::size_t>(i) * db + j] += o.grad[row + da + j];
        }
      }
    }
  });
  const int d = da + db;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < da; ++j) {
      out.values()[static_cast<std::size_t>(i) * d + j] =
          a.values()[static_cast<std::size_t>(i) * da + j];
    }
    for (int j = 0; j < db; ++j) {
      out.values()[static_cast<std::size_t>(i) * d + da + j] =
          b.values()[static_cast<std::size_t>(i) * db + j];
    }
  }
  return out;
}

inline Tensor sum(const Tensor& x) {
  Tensor out = op_result({1}, {x}, [](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (double& g : p.grad) g += o.grad[0];
  });
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values()[0] = acc;
  return out;
}

// ---------------------------------------------------------------------------
// Fused classification losses
// ---------------------------------------------------------------------------

namespace detail {

inline void check_mask_labels(const Tensor& logits,
                              const std::vector<int>& labels,
                              const std::vector<std::uint8_t>& mask,
                              const char* op) {
  check_rank(logits, 2, op);
  const std::size_t n = static_cast<std::size_t>(logits.dim(0));
  if (labels.size() != n || mask.size() != n) {
    throw ShapeError(std::string(op) + ": labels/mask length mismatch");
  }
  const int k = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] && (labels[i] < 0 || labels[i] >= k)) {
      throw DataError(std::string(op) + ": label " + std::to_string(labels[i]) +
                      " out of range [0, " + std::to_string(k) + ")");
    }
  }
}

inline std::size_t count_mask(const std::vector<std::uint8_t>& mask,
                              const char* op) {
  std::size_t c = 0;
  for (std::uint8_t m : mask) c += m ? 1 : 0;
  if (c == 0) throw ContractError(std::string(op) + ": no unmasked tokens");
  return c;
}

// Row log-sum-exp, max-subtracted.
inline double row_lse(const double* row, int k) {
  double mx = row[0];
  for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
  double s = 0.0;
  for (int j = 0; j < k; ++j) s += std::exp(row[j] - mx);
  return mx + std::log(s);
}

}  // namespace detail

// Mean over unmasked rows of -log softmax(logits)[label].
inline Tensor masked_cross_entropy(const Tensor& logits,
                                   const std::vector<int>& labels,
                                   const std::vector<std::uint8_t>& mask) {
  detail::check_mask_labels(logits, labels, mask, "cross_entropy");
  const std::size_t cnt = detail::count_mask(mask, "cross_entropy");
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor out = op_result({1}, {logits}, [labels, mask, cnt, n, k](detail::Node& o) {
    detail::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    const double g = o.grad[0] / static_cast<double>(cnt);
    for (int i = 0; i < n; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const double* row = p.values.data() + static_cast<std::size_t>(i) * k;
      double* grow = p.grad.data() + static_cast<std::size_t>(i) * k;
      const double lse = detail::row_lse(row, k);
      for (int j = 0; j < k; ++j) {
        const double pj = std::exp(row[j] - lse);
        grow[j] += g * (pj - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
      }
    }
  });
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double* row = logits.values().data() + static_cast<std::size_t>(i) * k;
    loss += detail::row_lse(row, k) - row[labels[static_cast<std::size_t>(i)]];
  }
  out.values()[0] = loss / static_cast<double>(cnt);
  return out;
}

// Mean over unmasked rows of 0.5 * (KL(pa||pb) + KL(pb||pa)) where
// pa = softmax(a), pb = softmax(b). Nonnegative; zero iff the distributions
// agree row-wise.
inline Tensor masked_symmetric_kl(const Tensor& a, const Tensor& b,
                                  const std::vector<std::uint8_t>& mask) {
  detail::check_same_shape(a, b, "symmetric_kl");
  detail::check_rank(a, 2, "symmetric_kl");
  if (mask.size() != static_cast<std::size_t>(a.dim(0))) {
    throw ShapeError("symmetric_kl: mask length mismatch");
  }
  const std::size_t cnt = detail::count_mask(mask, "symmetric_kl");
  const int n = a.dim(0), k = a.dim(1);
  Tensor out = op_result({1}, {a, b}, [mask, cnt, n, k](detail::Node& o) {
    detail::Node& pa = *o.parents[0];
    detail::Node& pb = *o.parents[1];
    const double g = 0.5 * o.grad[0] / static_cast<double>(cnt);
    std::vector<double> la(static_cast<std::size_t>(k)), lb(static_cast<std::size_t>(k));
    std::vector<double> qa(static_cast<std::size_t>(k)), qb(static_cast<std::size_t>(k));
    for (int i = 0; i < n; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const std::size_t base = static_cast<std::size_t>(i) * k;
      const double lsea = detail::row_lse(pa.values.data() + base, k);
      const double lseb = detail::row_lse(pb.values.data() + base, k);
      double kl_ab = 0.0, kl_ba = 0.0;
      for (int j = 0; j < k; ++j) {
        la[static_cast<std::size_t>(j)] = pa.values[base + j] - lsea;
        lb[static_cast<std::size_t>(j)] = pb.values[base + j] - lseb;
        qa[static_cast<std::size_t>(j)] = std::exp(la[static_cast<std::size_t>(j)]);
        qb[static_cast<std::size_t>(j)] = std::exp(lb[static_cast<std::size_t>(j)]);
        kl_ab += qa[static_cast<std::size_t>(j)] * (la[static_cast<std::size_t>(j)] - lb[static_cast<std::size_t>(j)]);
        kl_ba += qb[static_cast<std::size_t>(j)] * (lb[static_cast<std::size_t>(j)] - la[static_cast<std::size_t>(j)]);
      }
      for (int j = 0; j < k; ++j) {
        const std::size_t jj = static_cast<std::size_t>(j);
        if (pa.requires_grad) {
          pa.grad[base + j] += g * (qa[jj] * ((la[jj] - lb[jj]) - kl_ab) + (qa[jj] - qb[jj]));
        }
        if (pb.requires_grad) {
          pb.grad[base + j] += g * (qb[jj] * ((lb[jj] - la[jj]) - kl_ba) + (qb[jj] - qa[jj]));
        }
      }
    }
  });
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const std::size_t base = static_cast<std::size_t>(i) * k;
    const double lsea = detail::row_lse(a.values().data() + base, k);
    const double lseb = detail::row_lse(b.values().data() + base, k);
    double kl_ab = 0.0, kl_ba = 0.0;
    for (int j = 0; j < k; ++j) {
      const double laj = a.values()[base + j] - lsea;
      const double lbj = b.values()[base + j] - lseb;
      kl_ab += std::exp(laj) * (laj - lbj);
      kl_ba += std::exp(lbj) * (lbj - laj);
    }
    total += 0.5 * (kl_ab + kl_ba);
  }
  out.values()[0] = total / static_cast<double>(cnt);
  return out;
}

}  // namespace ff2
