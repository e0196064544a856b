// hierctc/tensor.h

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef HIERCTC_TENSOR_H_
#define HIERCTC_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hierctc/util.h"

namespace hierctc {

// Dense double-precision tensor participating in a reverse-mode
// differentiation graph. Graph construction and backward() are
// single-threaded per graph; a frozen graph may be read concurrently.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized on first use
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;
  bool needs_grad = false;
  bool is_param = false;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool param = false);
  static Tensor zeros(std::vector<int> shape, bool param = false);
  static Tensor full(std::vector<int> shape, double value, bool param = false);
  static Tensor scalar(double value);
  // Uniform in [lo, hi); the usual parameter init is
  // uniform(shape, -1/sqrt(fan_in), 1/sqrt(fan_in), rng, true).
  static Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng,
                        bool param = false);

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int dim(int i) const { return n_->shape[i]; }
  int rows() const { return n_->shape[0]; }
  int cols() const { return n_->shape[1]; }
  std::int64_t size() const { return n_->size(); }

  std::vector<double>& data() { return n_->data; }
  const std::vector<double>& data() const { return n_->data; }
  // Gradient buffer; allocated (zero) on demand.
  std::vector<double>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const std::vector<double>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }

  double value() const;                 // scalar tensors only
  double at(int r, int c) const;        // rank-2 read access
  bool is_param() const { return n_->is_param; }
  void zero_grad() {
    n_->ensure_grad();
    std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }
  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

// Boolean attention mask, true = position may be attended to.
struct AttentionMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> allow;

  static AttentionMask causal(int n);
  bool at(int r, int c) const { return allow[static_cast<size_t>(r) * cols + c] != 0; }
};

// Graph-building operations. Shapes are validated; mismatches throw
// std::invalid_argument naming both shapes.
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor add_row(const Tensor& m, const Tensor& bias);      // [R x C] + [C]
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor gelu(const Tensor& a);                             // exact erf form
Tensor matmul(const Tensor& a, const Tensor& b);          // [m x k][k x n]
// Numerically stabilized log softmax over the last axis (rank 1 or 2).
// Non-finite input is a numeric error.
Tensor log_softmax(const Tensor& x);
// Per-slice normalization over the last axis with affine transform.
// epsilon fixed at 1e-5.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
// softmax(q k^T / sqrt(d)) v with optional mask; a fully masked row is
// an error.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask* mask = nullptr);
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor slice_cols(const Tensor& m, int begin, int end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& a);                              // -> scalar
// Sum over positions of -log_probs[i, targets[i]].
Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& targets);

// Reverse-mode sweep from a scalar loss. Gradients of leaves accumulate
// across calls; intermediate node gradients are reset per sweep.
void backward(const Tensor& loss);

// Max over all parameter coordinates of
// |analytic - numeric| / max(1, |numeric|), central differences.
double grad_check(const std::function<Tensor()>& f,
                  const std::vector<Tensor>& params, double step = 1e-6);

std::string shape_str(const std::vector<int>& shape);

}  // namespace hierctc

#endif  // HIERCTC_TENSOR_H_
