// tensor.cc

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

#include "hierctc/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hierctc {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kLnEps = 1e-5;  // layer_norm epsilon

NodePtr make_node(std::vector<int> shape, std::vector<double> data,
                  std::vector<NodePtr> parents,
                  std::function<void(TensorNode&)> bwd) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->parents = std::move(parents);
  n->backward_fn = std::move(bwd);
  for (const auto& p : n->parents) {
    if (p->needs_grad || p->is_param) n->needs_grad = true;
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// c += a.b, a is m x k, b is k x n
void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// da += dc.b^T, dc is m x n, b is k x n, da is m x k
void mm_bt_acc(const double* dc, const double* b, double* da, int m, int n,
               int k) {
  for (int i = 0; i < m; ++i) {
    const double* dcrow = dc + static_cast<size_t>(i) * n;
    double* darow = da + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      darow[p] += acc;
    }
  }
}

// db += a^T.dc, a is m x k, dc is m x n, db is k x n
void mm_at_acc(const double* a, const double* dc, double* db, int m, int k,
               int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* dcrow = dc + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* dbrow = db + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

// Treats rank-1 [n] as a single slice, rank-2 [r x c] as r slices.
void last_axis_view(const Tensor& x, int* slices, int* width,
                    const char* op) {
  if (x.rank() == 1) {
    *slices = 1;
    *width = x.dim(0);
  } else if (x.rank() == 2) {
    *slices = x.dim(0);
    *width = x.dim(1);
  } else {
    throw std::invalid_argument(std::string(op) + ": rank 1 or 2 expected, got " +
                                shape_str(x.shape()));
  }
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream ss;
  ss << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) ss << "x";
    ss << shape[i];
  }
  ss << "]";
  return ss.str();
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values,
                    bool param) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension in " + shape_str(shape));
    n *= d;
  }
  if (n != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("Tensor: data length " +
                                std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto node = make_node(std::move(shape), std::move(values), {}, nullptr);
  node->is_param = param;
  node->needs_grad = param;
  return Tensor(node);
}

Tensor Tensor::zeros(std::vector<int> shape, bool param) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return from(std::move(shape), std::vector<double>(n, 0.0), param);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool param) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return from(std::move(shape), std::vector<double>(n, value), param);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::uniform(std::vector<int> shape, double lo, double hi, Rng& rng,
                       bool param) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return from(std::move(shape), std::move(v), param);
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("Tensor::value: tensor is not scalar, shape " +
                                shape_str(shape()));
  }
  return n_->data[0];
}

double Tensor::at(int r, int c) const {
  return n_->data[static_cast<size_t>(r) * cols() + c];
}

AttentionMask AttentionMask::causal(int n) {
  AttentionMask m;
  m.rows = n;
  m.cols = n;
  m.allow.assign(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) m.allow[static_cast<size_t>(i) * n + j] = 1;
  return m;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto node = make_node(a.shape(), std::move(out), {a.node(), b.node()},
                        [](TensorNode& self) {
                          for (auto& p : self.parents) {
                            if (!p->needs_grad) continue;
                            p->ensure_grad();
                            for (size_t i = 0; i < self.grad.size(); ++i)
                              p->grad[i] += self.grad[i];
                          }
                        });
  return Tensor(node);
}

Tensor add_row(const Tensor& m, const Tensor& bias) {
  if (m.rank() != 2 || bias.rank() != 1 || m.cols() != bias.dim(0)) {
    throw std::invalid_argument("add_row: shape mismatch " + shape_str(m.shape()) +
                                " vs " + shape_str(bias.shape()));
  }
  const int r = m.rows(), c = m.cols();
  std::vector<double> out(m.data());
  const auto& bd = bias.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] += bd[j];
  auto node = make_node(
      m.shape(), std::move(out), {m.node(), bias.node()},
      [r, c](TensorNode& self) {
        auto& mp = self.parents[0];
        auto& bp = self.parents[1];
        if (mp->needs_grad) {
          mp->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) mp->grad[i] += self.grad[i];
        }
        if (bp->needs_grad) {
          bp->ensure_grad();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              bp->grad[j] += self.grad[static_cast<size_t>(i) * c + j];
        }
      });
  return Tensor(node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  auto node = make_node(a.shape(), std::move(out), {a.node(), b.node()},
                        [](TensorNode& self) {
                          auto& pa = self.parents[0];
                          auto& pb = self.parents[1];
                          if (pa->needs_grad) {
                            pa->ensure_grad();
                            for (size_t i = 0; i < self.grad.size(); ++i)
                              pa->grad[i] += self.grad[i] * pb->data[i];
                          }
                          if (pb->needs_grad) {
                            pb->ensure_grad();
                            for (size_t i = 0; i < self.grad.size(); ++i)
                              pb->grad[i] += self.grad[i] * pa->data[i];
                          }
                        });
  return Tensor(node);
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data());
  for (auto& x : out) x *= s;
  auto node = make_node(a.shape(), std::move(out), {a.node()},
                        [s](TensorNode& self) {
                          auto& p = self.parents[0];
                          if (!p->needs_grad) return;
                          p->ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            p->grad[i] += s * self.grad[i];
                        });
  return Tensor(node);
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.data());
  for (auto& x : out) x = std::exp(x);
  auto node = make_node(a.shape(), std::move(out), {a.node()},
                        [](TensorNode& self) {
                          auto& p = self.parents[0];
                          if (!p->needs_grad) return;
                          p->ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            p->grad[i] += self.grad[i] * self.data[i];
                        });
  return Tensor(node);
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.data());
  for (auto& x : out) x = 0.5 * x * (1.0 + std::erf(x / kSqrt2));
  auto node = make_node(a.shape(), std::move(out), {a.node()},
                        [](TensorNode& self) {
                          auto& p = self.parents[0];
                          if (!p->needs_grad) return;
                          p->ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i) {
                            const double x = p->data[i];
                            const double cdf = 0.5 * (1.0 + std::erf(x / kSqrt2));
                            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                            p->grad[i] += self.grad[i] * (cdf + x * pdf);
                          }
                        });
  return Tensor(node);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  mm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto node = make_node(
      {m, n}, std::move(out), {a.node(), b.node()},
      [m, k, n](TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->needs_grad) {
          pa->ensure_grad();
          mm_bt_acc(self.grad.data(), pb->data.data(), pa->grad.data(), m, n, k);
        }
        if (pb->needs_grad) {
          pb->ensure_grad();
          mm_at_acc(pa->data.data(), self.grad.data(), pb->grad.data(), m, k, n);
        }
      });
  return Tensor(node);
}

Tensor log_softmax(const Tensor& x) {
  int slices = 0, width = 0;
  last_axis_view(x, &slices, &width, "log_softmax");
  if (width < 1) throw std::invalid_argument("log_softmax: empty axis");
  for (double v : x.data()) {
    if (!std::isfinite(v))
      throw std::runtime_error("log_softmax: non-finite input");
  }
  std::vector<double> out(x.data());
  for (int s = 0; s < slices; ++s) {
    double* row = out.data() + static_cast<size_t>(s) * width;
    double mx = row[0];
    for (int j = 1; j < width; ++j) mx = std::max(mx, row[j]);
    double acc = 0.0;
    for (int j = 0; j < width; ++j) acc += std::exp(row[j] - mx);
    const double lse = mx + std::log(acc);
    for (int j = 0; j < width; ++j) row[j] -= lse;
  }
  auto node = make_node(
      x.shape(), std::move(out), {x.node()},
      [slices, width](TensorNode& self) {
        auto& p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        for (int s = 0; s < slices; ++s) {
          const size_t off = static_cast<size_t>(s) * width;
          double gsum = 0.0;
          for (int j = 0; j < width; ++j) gsum += self.grad[off + j];
          for (int j = 0; j < width; ++j)
            p->grad[off + j] +=
                self.grad[off + j] - std::exp(self.data[off + j]) * gsum;
        }
      });
  return Tensor(node);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  int slices = 0, width = 0;
  last_axis_view(x, &slices, &width, "layer_norm");
  if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != width ||
      bias.dim(0) != width) {
    throw std::invalid_argument("layer_norm: shape mismatch " +
                                shape_str(x.shape()) + " vs gain " +
                                shape_str(gain.shape()) + ", bias " +
                                shape_str(bias.shape()));
  }
  std::vector<double> out(x.data().size());
  const auto& xd = x.data();
  const auto& gd = gain.data();
  const auto& bd = bias.data();
  for (int s = 0; s < slices; ++s) {
    const size_t off = static_cast<size_t>(s) * width;
    double mean = 0.0;
    for (int j = 0; j < width; ++j) mean += xd[off + j];
    mean /= width;
    double var = 0.0;
    for (int j = 0; j < width; ++j) {
      const double d = xd[off + j] - mean;
      var += d * d;
    }
    var /= width;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    for (int j = 0; j < width; ++j)
      out[off + j] = gd[j] * ((xd[off + j] - mean) * inv) + bd[j];
  }
  auto node = make_node(
      x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [slices, width](TensorNode& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        if (px->needs_grad) px->ensure_grad();
        if (pg->needs_grad) pg->ensure_grad();
        if (pb->needs_grad) pb->ensure_grad();
        std::vector<double> xhat(width), dxhat(width);
        for (int s = 0; s < slices; ++s) {
          const size_t off = static_cast<size_t>(s) * width;
          double mean = 0.0;
          for (int j = 0; j < width; ++j) mean += px->data[off + j];
          mean /= width;
          double var = 0.0;
          for (int j = 0; j < width; ++j) {
            const double d = px->data[off + j] - mean;
            var += d * d;
          }
          var /= width;
          const double inv = 1.0 / std::sqrt(var + kLnEps);
          for (int j = 0; j < width; ++j) {
            xhat[j] = (px->data[off + j] - mean) * inv;
            dxhat[j] = self.grad[off + j] * pg->data[j];
          }
          if (pg->needs_grad)
            for (int j = 0; j < width; ++j)
              pg->grad[j] += self.grad[off + j] * xhat[j];
          if (pb->needs_grad)
            for (int j = 0; j < width; ++j) pb->grad[j] += self.grad[off + j];
          if (!px->needs_grad) continue;
          double dvar = 0.0, dxhat_sum = 0.0;
          for (int j = 0; j < width; ++j) {
            dvar += dxhat[j] * (px->data[off + j] - mean);
            dxhat_sum += dxhat[j];
          }
          dvar *= -0.5 * inv * inv * inv;
          const double dmean = -inv * dxhat_sum;
          for (int j = 0; j < width; ++j) {
            px->grad[off + j] += dxhat[j] * inv +
                                 dvar * 2.0 * (px->data[off + j] - mean) / width +
                                 dmean / width;
          }
        }
      });
  return Tensor(node);
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask* mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() ||
      k.rows() != v.rows()) {
    throw std::invalid_argument("scaled_dot_attention: shape mismatch q" +
                                shape_str(q.shape()) + " k" + shape_str(k.shape()) +
                                " v" + shape_str(v.shape()));
  }
  const int m = q.rows(), dk = q.cols(), n = k.rows(), dv = v.cols();
  if (mask && (mask->rows != m || mask->cols != n)) {
    throw std::invalid_argument("scaled_dot_attention: mask shape mismatch");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  // softmax(q k^T / sqrt(dk)) rows, computed in place
  std::vector<double> w(static_cast<size_t>(m) * n, 0.0);
  const auto& qd = q.data();
  const auto& kd = k.data();
  for (int i = 0; i < m; ++i) {
    double* wrow = w.data() + static_cast<size_t>(i) * n;
    double mx = kLogZero;
    for (int j = 0; j < n; ++j) {
      if (mask && !mask->at(i, j)) {
        wrow[j] = kLogZero;
        continue;
      }
      double dot = 0.0;
      for (int a = 0; a < dk; ++a)
        dot += qd[static_cast<size_t>(i) * dk + a] * kd[static_cast<size_t>(j) * dk + a];
      wrow[j] = dot * inv_sqrt;
      mx = std::max(mx, wrow[j]);
    }
    if (mx == kLogZero)
      throw std::invalid_argument("scaled_dot_attention: fully masked row " +
                                  std::to_string(i));
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      wrow[j] = (wrow[j] == kLogZero) ? 0.0 : std::exp(wrow[j] - mx);
      acc += wrow[j];
    }
    for (int j = 0; j < n; ++j) wrow[j] /= acc;
  }

  std::vector<double> out(static_cast<size_t>(m) * dv, 0.0);
  mm_acc(w.data(), v.data().data(), out.data(), m, n, dv);

  auto node = make_node(
      {m, dv}, std::move(out), {q.node(), k.node(), v.node()},
      [m, n, dk, dv, inv_sqrt, w = std::move(w)](TensorNode& self) {
        auto& pq = self.parents[0];
        auto& pk = self.parents[1];
        auto& pv = self.parents[2];
        if (pv->needs_grad) {
          pv->ensure_grad();
          mm_at_acc(w.data(), self.grad.data(), pv->grad.data(), m, n, dv);
        }
        if (!pq->needs_grad && !pk->needs_grad) return;
        // dW = dOut v^T, then per-row softmax backward into dS
        std::vector<double> ds(static_cast<size_t>(m) * n, 0.0);
        mm_bt_acc(self.grad.data(), pv->data.data(), ds.data(), m, dv, n);
        for (int i = 0; i < m; ++i) {
          double* dsrow = ds.data() + static_cast<size_t>(i) * n;
          const double* wrow = w.data() + static_cast<size_t>(i) * n;
          double sigma = 0.0;
          for (int j = 0; j < n; ++j) sigma += dsrow[j] * wrow[j];
          for (int j = 0; j < n; ++j) dsrow[j] = wrow[j] * (dsrow[j] - sigma);
        }
        if (pq->needs_grad) {
          pq->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double g = ds[static_cast<size_t>(i) * n + j] * inv_sqrt;
              for (int a = 0; a < dk; ++a)
                pq->grad[static_cast<size_t>(i) * dk + a] +=
                    g * pk->data[static_cast<size_t>(j) * dk + a];
            }
        }
        if (pk->needs_grad) {
          pk->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double g = ds[static_cast<size_t>(i) * n + j] * inv_sqrt;
              for (int a = 0; a < dk; ++a)
                pk->grad[static_cast<size_t>(j) * dk + a] +=
                    g * pq->data[static_cast<size_t>(i) * dk + a];
            }
        }
      });
  return Tensor(node);
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw std::invalid_argument("gather_rows: table must be rank 2");
  const int c = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= table.rows())
      throw std::invalid_argument("gather_rows: id " + std::to_string(id) +
                                  " out of range [0, " +
                                  std::to_string(table.rows()) + ")");
  }
  const int r = static_cast<int>(ids.size());
  if (r == 0) throw std::invalid_argument("gather_rows: empty id list");
  std::vector<double> out(static_cast<size_t>(r) * c);
  for (int i = 0; i < r; ++i)
    std::copy_n(table.data().begin() + static_cast<size_t>(ids[i]) * c, c,
                out.begin() + static_cast<size_t>(i) * c);
  auto node = make_node({r, c}, std::move(out), {table.node()},
                        [ids, c](TensorNode& self) {
                          auto& p = self.parents[0];
                          if (!p->needs_grad) return;
                          p->ensure_grad();
                          for (size_t i = 0; i < ids.size(); ++i)
                            for (int j = 0; j < c; ++j)
                              p->grad[static_cast<size_t>(ids[i]) * c + j] +=
                                  self.grad[i * c + j];
                        });
  return Tensor(node);
}

Tensor slice_cols(const Tensor& m, int begin, int end) {
  if (m.rank() != 2 || begin < 0 || end > m.cols() || begin >= end)
    throw std::invalid_argument("slice_cols: invalid range [" +
                                std::to_string(begin) + ", " + std::to_string(end) +
                                ") for " + shape_str(m.shape()));
  const int r = m.rows(), c = m.cols(), w = end - begin;
  std::vector<double> out(static_cast<size_t>(r) * w);
  for (int i = 0; i < r; ++i)
    std::copy_n(m.data().begin() + static_cast<size_t>(i) * c + begin, w,
                out.begin() + static_cast<size_t>(i) * w);
  auto node = make_node({r, w}, std::move(out), {m.node()},
                        [r, c, w, begin](TensorNode& self) {
                          auto& p = self.parents[0];
                          if (!p->needs_grad) return;
                          p->ensure_grad();
                          for (int i = 0; i < r; ++i)
                            for (int j = 0; j < w; ++j)
                              p->grad[static_cast<size_t>(i) * c + begin + j] +=
                                  self.grad[static_cast<size_t>(i) * w + j];
                        });
  return Tensor(node);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int r = parts[0].rows();
  int total = 0;
  std::vector<NodePtr> parents;
  std::vector<int> widths;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != r)
      throw std::invalid_argument("concat_cols: row mismatch " +
                                  shape_str(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
    parents.push_back(p.node());
  }
  std::vector<double> out(static_cast<size_t>(r) * total);
  int off = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const int w = widths[pi];
    for (int i = 0; i < r; ++i)
      std::copy_n(parts[pi].data().begin() + static_cast<size_t>(i) * w, w,
                  out.begin() + static_cast<size_t>(i) * total + off);
    off += w;
  }
  auto node = make_node({r, total}, std::move(out), std::move(parents),
                        [r, total, widths](TensorNode& self) {
                          int off2 = 0;
                          for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                            auto& p = self.parents[pi];
                            const int w = widths[pi];
                            if (p->needs_grad) {
                              p->ensure_grad();
                              for (int i = 0; i < r; ++i)
                                for (int j = 0; j < w; ++j)
                                  p->grad[static_cast<size_t>(i) * w + j] +=
                                      self.grad[static_cast<size_t>(i) * total +
                                                off2 + j];
                            }
                            off2 += w;
                          }
                        });
  return Tensor(node);
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  auto node = make_node({1}, {acc}, {a.node()}, [](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->needs_grad) return;
    p->ensure_grad();
    for (auto& g : p->grad) g += self.grad[0];
  });
  return Tensor(node);
}

Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& targets) {
  if (log_probs.rank() != 2 ||
      static_cast<int>(targets.size()) != log_probs.rows())
    throw std::invalid_argument("nll_loss: need one target per row of " +
                                shape_str(log_probs.shape()));
  const int c = log_probs.cols();
  double acc = 0.0;
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= c)
      throw std::invalid_argument("nll_loss: target id out of range");
    acc -= log_probs.data()[i * c + targets[i]];
  }
  auto node = make_node({1}, {acc}, {log_probs.node()},
                        [targets, c](TensorNode& self) {
                          auto& p = self.parents[0];
                          if (!p->needs_grad) return;
                          p->ensure_grad();
                          for (size_t i = 0; i < targets.size(); ++i)
                            p->grad[i * c + targets[i]] -= self.grad[0];
                        });
  return Tensor(node);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");

  // Iterative post-order over parents; each node visited exactly once.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* child = f.n->parents[f.next++].get();
      if (seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  // Only leaf gradients persist across sweeps; intermediates are
  // recomputed from scratch so repeated backward calls accumulate
  // correctly into leaves.
  for (TensorNode* n : order) {
    if (!n->parents.empty()) {
      n->ensure_grad();
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->needs_grad) n->backward_fn(*n);
  }
}

double grad_check(const std::function<Tensor()>& f,
                  const std::vector<Tensor>& params, double step) {
  for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
  Tensor loss = f();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& d = const_cast<Tensor&>(params[pi]).data();
    for (size_t i = 0; i < d.size(); ++i) {
      const double keep = d[i];
      d[i] = keep + step;
      const double up = f().value();
      d[i] = keep - step;
      const double down = f().value();
      d[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = std::abs(analytic[pi][i] - numeric) /
                         std::max(1.0, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace hierctc
