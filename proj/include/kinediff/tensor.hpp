// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace kinediff {

// Dense 64-bit real tensor with a reverse-mode tape. Values are immutable
// once an op has consumed them; leaves expose mutable_data() so optimizers
// can update parameters between steps. The tape is a DAG of shared nodes,
// confined to one logical thread per training step.

struct TensorNode;
using NodeRef = std::shared_ptr<TensorNode>;

struct TensorNode {
  std::vector<std::int64_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily; empty until touched by backward
  bool requires_grad = false;
  std::vector<NodeRef> parents;
  // Accumulates d(loss)/d(parent) into each parent's grad given this->grad.
  std::function<void(TensorNode&)> backfn;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodeRef n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::int64_t> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<std::int64_t> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row(const std::vector<double>& v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::int64_t>& shape() const { return node_->shape; }
  std::int64_t size() const { return node_->size(); }
  std::int64_t rows() const;
  std::int64_t cols() const;
  bool requires_grad() const { return node_->requires_grad; }

  const double* data() const { return node_->value.data(); }
  const std::vector<double>& values() const { return node_->value; }
  // Leaf-parameter update hook; never call on tensors already on a tape.
  double* mutable_data() { return node_->value.data(); }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() { node_->grad.clear(); }

  double item() const;
  double at(std::int64_t r, std::int64_t c) const;

  NodeRef node() const { return node_; }

 private:
  NodeRef node_;
};

// Populates grad for every requires_grad node reachable from loss.
// Repeated calls without zero_grad accumulate. Throws ContractError when
// loss is not scalar.
void backward(const Tensor& loss);

// --- ops (shape checked; DimensionError names both shapes) ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& a, const Tensor& b);  // a[m x n] + b[1 x n]
Tensor relu(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_sq(const Tensor& a);
Tensor max_over_rows(const Tensor& a);            // [m x n] -> [1 x n]
Tensor softmax_rows(const Tensor& a);             // per-row softmax
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t c1);
Tensor repeat_row(const Tensor& a, std::int64_t m);  // [1 x n] -> [m x n]
Tensor mean_row_l2(const Tensor& a);              // mean_i ||row_i||_2
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels);
Tensor detach(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<std::int64_t> new_shape);

// --- raw kernels shared by forward/backward paths (OpenMP inside) ---
namespace kern {
// c [m x n] += or = a [m x k] * b [k x n]
void gemm_nn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate);
// c [m x n] += a [m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate);
// c [k x n] += a [m x k]^T * b [m x n]
void gemm_tn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate);
}  // namespace kern

std::string shape_str(const std::vector<std::int64_t>& s);

}  // namespace kinediff
