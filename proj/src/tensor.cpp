// SPDX-License-Identifier: Apache-2.0
#include "kinediff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "kinediff/errors.hpp"
#include "kinediff/parallel.hpp"

namespace kinediff {

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

NodeRef make_node(std::vector<std::int64_t> shape, std::vector<double> value,
                  bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  if (n->size() != static_cast<std::int64_t>(n->value.size()))
    throw DimensionError("tensor data length " + std::to_string(n->value.size()) +
                         " does not match shape " + shape_str(n->shape));
  return n;
}

bool any_requires(const std::initializer_list<Tensor>& ts) {
  for (const auto& t : ts)
    if (t.requires_grad()) return true;
  return false;
}

// Builds the result node; records parents and backfn only when some parent
// needs gradients, so inference-only paths carry no tape.
Tensor make_op(std::vector<std::int64_t> shape, std::vector<double> value,
               std::initializer_list<Tensor> parents,
               std::function<void(TensorNode&)> backfn) {
  const bool req = any_requires(parents);
  auto n = make_node(std::move(shape), std::move(value), req);
  if (req) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backfn = std::move(backfn);
  }
  return Tensor(n);
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double v, bool requires_grad) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return Tensor(make_node(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from(std::vector<std::int64_t> shape, std::vector<double> data,
                    bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v) { return from({1, 1}, {v}); }

Tensor Tensor::row(const std::vector<double>& v, bool requires_grad) {
  return from({1, static_cast<std::int64_t>(v.size())}, v, requires_grad);
}

std::int64_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return shape()[0];
}

std::int64_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return shape()[1];
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty())
    throw ContractError("gradient absent: tensor not on the backward path");
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  require_rank2(*this, "at");
  return node_->value[static_cast<std::size_t>(r * cols() + c)];
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  if (!loss.requires_grad()) return;  // detached from every leaf

  // Iterative post-order topo sort.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior (op-produced) grads are scratch per pass; only leaves keep
  // accumulating across repeated backward calls.
  for (TensorNode* n : order)
    if (n->backfn) n->grad.clear();

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backfn && !n->grad.empty()) n->backfn(*n);
  }
}

// ---------------------------------------------------------------- kernels

namespace kern {

void gemm_nn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate) {
  parallel_for(
      0, m,
      [&](std::int64_t i) {
        double* ci = c + i * n;
        if (!accumulate)
          for (std::int64_t j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = a + i * k;
        for (std::int64_t kk = 0; kk < k; ++kk) {
          const double av = ai[kk];
          const double* bk = b + kk * n;
          for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
      },
      8);
}

void gemm_nt(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate) {
  parallel_for(
      0, m,
      [&](std::int64_t i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
          const double* bj = b + j * k;
          double s = 0.0;
          for (std::int64_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
          if (accumulate)
            ci[j] += s;
          else
            ci[j] = s;
        }
      },
      8);
}

void gemm_tn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate) {
  parallel_for(
      0, k,
      [&](std::int64_t kk) {
        double* ck = c + kk * n;
        if (!accumulate)
          for (std::int64_t j = 0; j < n; ++j) ck[j] = 0.0;
        for (std::int64_t i = 0; i < m; ++i) {
          const double av = a[i * k + kk];
          const double* bi = b + i * n;
          for (std::int64_t j = 0; j < n; ++j) ck[j] += av * bi[j];
        }
      },
      8);
}

}  // namespace kern

// ---------------------------------------------------------------- ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::int64_t m = a.shape()[0], k = a.shape()[1];
  const std::int64_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  kern::gemm_nn(a.data(), b.data(), out.data(), m, k, n, false);
  auto an = a.node(), bn = b.node();
  return make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      kern::gemm_nt(self.grad.data(), bn->value.data(), an->grad.data(), m, n, k, true);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      kern::gemm_tn(an->value.data(), self.grad.data(), bn->grad.data(), m, k, n, true);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::int64_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(m * n));
  const double* src = a.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  auto an = a.node();
  return make_op({n, m}, std::move(out), {a}, [an, m, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[j * m + i];
  });
}

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd_factor) {
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* x = a.data();
  parallel_for(0, n, [&](std::int64_t i) { out[i] = fwd(x[i]); }, 4096);
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, bwd_factor, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i)
      an->grad[i] += self.grad[i] * bwd_factor(an->value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double *x = a.data(), *y = b.data();
  parallel_for(0, n, [&](std::int64_t i) { out[i] = x[i] + y[i]; }, 4096);
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn, n](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double *x = a.data(), *y = b.data();
  parallel_for(0, n, [&](std::int64_t i) { out[i] = x[i] - y[i]; }, 4096);
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn, n](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) bn->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double *x = a.data(), *y = b.data();
  parallel_for(0, n, [&](std::int64_t i) { out[i] = x[i] * y[i]; }, 4096);
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn, n](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return c * x; },
                  [c](double, double) { return c; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return x + c; },
                  [](double, double) { return 1.0; });
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  require_rank2(a, "add_rowvec");
  require_rank2(b, "add_rowvec");
  const std::int64_t m = a.shape()[0], n = a.shape()[1];
  if (b.shape()[0] != 1 || b.shape()[1] != n)
    throw DimensionError("add_rowvec: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  const double *x = a.data(), *y = b.data();
  parallel_for(0, m, [&](std::int64_t i) {
    for (std::int64_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + y[j];
  });
  auto an = a.node(), bn = b.node();
  return make_op({m, n}, std::move(out), {a, b}, [an, bn, m, n](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::int64_t i = 0; i < m * n; ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) bn->grad[j] += self.grad[i * n + j];
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
  // log(1 + e^x) with overflow-safe branch
  return unary_op(a,
                  [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
                  [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor abs_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::fabs(x); },
                  [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary_op(a, [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  const double s = blocked_sum(a.data(), a.size());
  auto an = a.node();
  const std::int64_t n = a.size();
  return make_op({1, 1}, {s}, {a}, [an, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0];
    for (std::int64_t i = 0; i < n; ++i) an->grad[i] += g;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_sq(const Tensor& a) {
  const std::int64_t n = a.size();
  const double* x = a.data();
  std::vector<double> sq(static_cast<std::size_t>(n));
  parallel_for(0, n, [&](std::int64_t i) { sq[i] = x[i] * x[i]; }, 4096);
  const double s = blocked_sum(sq.data(), n);
  auto an = a.node();
  return make_op({1, 1}, {s}, {a}, [an, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0];
    for (std::int64_t i = 0; i < n; ++i) an->grad[i] += g * 2.0 * an->value[i];
  });
}

Tensor max_over_rows(const Tensor& a) {
  require_rank2(a, "max_over_rows");
  const std::int64_t m = a.shape()[0], n = a.shape()[1];
  if (m < 1) throw ContractError("max_over_rows: empty input");
  std::vector<double> out(static_cast<std::size_t>(n));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(n);
  const double* x = a.data();
  parallel_for(0, n, [&](std::int64_t j) {
    double best = x[j];
    std::int64_t bi = 0;
    for (std::int64_t i = 1; i < m; ++i) {
      const double v = x[i * n + j];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    out[j] = best;
    (*argmax)[j] = bi;
  }, 64);
  auto an = a.node();
  return make_op({1, n}, std::move(out), {a}, [an, argmax, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::int64_t j = 0; j < n; ++j)
      an->grad[(*argmax)[j] * n + j] += self.grad[j];
  });
}

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  const std::int64_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(m * n));
  const double* x = a.data();
  parallel_for(0, m, [&](std::int64_t i) {
    const double* xi = x + i * n;
    double mx = xi[0];
    for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < n; ++j) z += std::exp(xi[j] - mx);
    for (std::int64_t j = 0; j < n; ++j) out[i * n + j] = std::exp(xi[j] - mx) / z;
  }, 64);
  auto an = a.node();
  return make_op({m, n}, std::move(out), {a}, [an, m, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::int64_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* g = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
      for (std::int64_t j = 0; j < n; ++j)
        an->grad[i * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  const std::int64_t m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  if (b.shape()[0] != m)
    throw DimensionError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * (p + q)));
  const double *x = a.data(), *y = b.data();
  for (std::int64_t i = 0; i < m; ++i) {
    std::copy(x + i * p, x + (i + 1) * p, out.begin() + i * (p + q));
    std::copy(y + i * q, y + (i + 1) * q, out.begin() + i * (p + q) + p);
  }
  auto an = a.node(), bn = b.node();
  return make_op({m, p + q}, std::move(out), {a, b}, [an, bn, m, p, q](TensorNode& self) {
    for (std::int64_t i = 0; i < m; ++i) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::int64_t j = 0; j < p; ++j)
          an->grad[i * p + j] += self.grad[i * (p + q) + j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::int64_t j = 0; j < q; ++j)
          bn->grad[i * q + j] += self.grad[i * (p + q) + p + j];
      }
    }
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_rows");
  require_rank2(b, "concat_rows");
  const std::int64_t ma = a.shape()[0], mb = b.shape()[0], n = a.shape()[1];
  if (b.shape()[1] != n)
    throw DimensionError("concat_rows: col mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>((ma + mb) * n));
  out.insert(out.end(), a.data(), a.data() + ma * n);
  out.insert(out.end(), b.data(), b.data() + mb * n);
  auto an = a.node(), bn = b.node();
  return make_op({ma + mb, n}, std::move(out), {a, b}, [an, bn, ma, mb, n](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::int64_t i = 0; i < ma * n; ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::int64_t i = 0; i < mb * n; ++i) bn->grad[i] += self.grad[ma * n + i];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t c1) {
  require_rank2(a, "slice_cols");
  const std::int64_t m = a.shape()[0], n = a.shape()[1];
  if (c0 < 0 || c1 > n || c0 >= c1)
    throw DimensionError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of range for " + shape_str(a.shape()));
  const std::int64_t w = c1 - c0;
  std::vector<double> out(static_cast<std::size_t>(m * w));
  const double* x = a.data();
  for (std::int64_t i = 0; i < m; ++i)
    std::copy(x + i * n + c0, x + i * n + c1, out.begin() + i * w);
  auto an = a.node();
  return make_op({m, w}, std::move(out), {a}, [an, m, n, c0, w](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < w; ++j)
        an->grad[i * n + c0 + j] += self.grad[i * w + j];
  });
}

Tensor repeat_row(const Tensor& a, std::int64_t m) {
  require_rank2(a, "repeat_row");
  if (a.shape()[0] != 1)
    throw DimensionError("repeat_row: expected [1 x n], got " + shape_str(a.shape()));
  const std::int64_t n = a.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(m * n));
  const double* x = a.data();
  parallel_for(0, m, [&](std::int64_t i) { std::copy(x, x + n, out.begin() + i * n); });
  auto an = a.node();
  return make_op({m, n}, std::move(out), {a}, [an, m, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) an->grad[j] += self.grad[i * n + j];
  });
}

Tensor mean_row_l2(const Tensor& a) {
  require_rank2(a, "mean_row_l2");
  const std::int64_t m = a.shape()[0], n = a.shape()[1];
  const double* x = a.data();
  std::vector<double> norms(static_cast<std::size_t>(m));
  parallel_for(0, m, [&](std::int64_t i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < n; ++j) s += x[i * n + j] * x[i * n + j];
    norms[i] = std::sqrt(s);
  }, 64);
  const double val = blocked_sum(norms.data(), m) / static_cast<double>(m);
  auto an = a.node();
  auto saved = std::make_shared<std::vector<double>>(std::move(norms));
  return make_op({1, 1}, {val}, {a}, [an, saved, m, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(m);
    for (std::int64_t i = 0; i < m; ++i) {
      const double nrm = (*saved)[i];
      if (nrm < 1e-300) continue;
      for (std::int64_t j = 0; j < n; ++j)
        an->grad[i * n + j] += g * an->value[i * n + j] / nrm;
    }
  });
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels) {
  require_rank2(logits, "cross_entropy_with_logits");
  const std::int64_t m = logits.shape()[0], k = logits.shape()[1];
  if (static_cast<std::int64_t>(labels.size()) != m)
    throw DimensionError("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                         " labels for " + shape_str(logits.shape()));
  for (int lbl : labels)
    if (lbl < 0 || lbl >= k)
      throw ContractError("cross_entropy_with_logits: label " + std::to_string(lbl) +
                          " out of range [0," + std::to_string(k) + ")");
  const double* x = logits.data();
  std::vector<double> losses(static_cast<std::size_t>(m));
  parallel_for(0, m, [&](std::int64_t i) {
    const double* xi = x + i * k;
    double mx = xi[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(xi[j] - mx);
    losses[i] = std::log(z) + mx - xi[labels[i]];
  }, 64);
  const double val = blocked_sum(losses.data(), m) / static_cast<double>(m);
  auto an = logits.node();
  auto lbl = std::make_shared<std::vector<int>>(labels);
  return make_op({1, 1}, {val}, {logits}, [an, lbl, m, k](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(m);
    for (std::int64_t i = 0; i < m; ++i) {
      const double* xi = an->value.data() + i * k;
      double mx = xi[0];
      for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, xi[j]);
      double z = 0.0;
      for (std::int64_t j = 0; j < k; ++j) z += std::exp(xi[j] - mx);
      for (std::int64_t j = 0; j < k; ++j) {
        double p = std::exp(xi[j] - mx) / z;
        if (j == (*lbl)[i]) p -= 1.0;
        an->grad[i * k + j] += g * p;
      }
    }
  });
}

Tensor detach(const Tensor& a) {
  return Tensor::from(a.shape(), a.values(), false);
}

Tensor reshape(const Tensor& a, std::vector<std::int64_t> new_shape) {
  std::int64_t n = 1;
  for (auto d : new_shape) n *= d;
  if (n != a.size())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
  auto an = a.node();
  const std::int64_t count = a.size();
  return make_op(std::move(new_shape), a.values(), {a}, [an, count](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::int64_t i = 0; i < count; ++i) an->grad[i] += self.grad[i];
  });
}

}  // namespace kinediff
