// Copyright 2026 The mmtdelib Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mmt {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Row-major boolean matrix; true marks an attendable (query, key) pair.
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(Index rows, Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

namespace detail {
inline thread_local int no_grad_depth = 0;
}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

// While alive, ops on this thread record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

/// Handle to a 2-D array participating in a reverse-mode differentiation
/// graph. Copies share the underlying node. Vectors are 1xN, scalars 1x1.
template <typename Scalar>
class Tensor {
 public:
  using Mat = Matrix<Scalar>;
  using scalar_type = Scalar;

  Tensor() = default;

  explicit Tensor(Mat value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return Tensor(Mat::Zero(rows, cols), requires_grad);
  }

  static Tensor scalar(Scalar v) { return Tensor(Mat::Constant(1, 1, v)); }

  bool defined() const { return static_cast<bool>(node_); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::string shape() const { return shape_string(rows(), cols()); }

  const Mat& value() const { return node_->value; }
  Mat& value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() != 0; }
  const Mat& grad() const { return node_->grad; }
  Mat& grad() { return node_->grad; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape());
    return node_->value(0, 0);
  }

  Tensor detach() const { return Tensor(node_->value); }

  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

namespace detail {

template <typename Scalar, typename Backward>
Tensor<Scalar> record(Matrix<Scalar> value, std::initializer_list<Tensor<Scalar>> inputs,
                      Backward&& fn) {
  Tensor<Scalar> out(std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& t : inputs) {
    if (t.requires_grad()) node.parents.push_back(t.node());
  }
  node.backward = std::forward<Backward>(fn);
  return out;
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

}  // namespace detail

/// Runs reverse-mode accumulation from a scalar loss. Leaf gradients add to
/// whatever is already stored; intermediate gradients are recomputed.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + loss.shape());
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> visited;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<Scalar>* n : order) {
    if (n->backward) n->grad.resize(0, 0);
  }
  loss.node()->accumulate(Matrix<Scalar>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
  for (Node<Scalar>* n : order) {
    if (n->requires_grad && n->grad.size() == 0) {
      n->grad = Matrix<Scalar>::Zero(n->value.rows(), n->value.cols());
    }
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape() + " x " + b.shape());
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::record<Scalar>(a.value() * b.value(), {a, b}, [an, bn](Node<Scalar>& self) {
    if (an->requires_grad) an->accumulate(self.grad * bn->value.transpose());
    if (bn->requires_grad) bn->accumulate(an->value.transpose() * self.grad);
  });
}

/// a * b^T without materializing the transpose in the graph.
template <typename Scalar>
Tensor<Scalar> matmul_transposed(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: widths differ, " + a.shape() + " x " + b.shape() + "^T");
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::record<Scalar>(a.value() * b.value().transpose(), {a, b},
                                [an, bn](Node<Scalar>& self) {
                                  if (an->requires_grad) an->accumulate(self.grad * bn->value);
                                  if (bn->requires_grad) {
                                    bn->accumulate(self.grad.transpose() * an->value);
                                  }
                                });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  auto an = a.node();
  Matrix<Scalar> v = a.value().transpose();
  return detail::record<Scalar>(std::move(v), {a}, [an](Node<Scalar>& self) {
    an->accumulate(self.grad.transpose());
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  auto an = a.node();
  auto bn = b.node();
  return detail::record<Scalar>(a.value() + b.value(), {a, b}, [an, bn](Node<Scalar>& self) {
    an->accumulate(self.grad);
    bn->accumulate(self.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  auto an = a.node();
  auto bn = b.node();
  return detail::record<Scalar>(a.value() - b.value(), {a, b}, [an, bn](Node<Scalar>& self) {
    an->accumulate(self.grad);
    bn->accumulate(-self.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> hadamard(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "hadamard");
  auto an = a.node();
  auto bn = b.node();
  Matrix<Scalar> v = a.value().cwiseProduct(b.value());
  return detail::record<Scalar>(std::move(v), {a, b}, [an, bn](Node<Scalar>& self) {
    if (an->requires_grad) an->accumulate(self.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) bn->accumulate(self.grad.cwiseProduct(an->value));
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  auto an = a.node();
  return detail::record<Scalar>(a.value() * factor, {a}, [an, factor](Node<Scalar>& self) {
    an->accumulate(self.grad * factor);
  });
}

/// Adds a 1xC row to every row of a.
template <typename Scalar>
Tensor<Scalar> add_row(const Tensor<Scalar>& a, const Tensor<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: expected [1x" + std::to_string(a.cols()) + "] row, got " +
                     row.shape());
  }
  auto an = a.node();
  auto rn = row.node();
  Matrix<Scalar> v = a.value().rowwise() + row.value().row(0);
  return detail::record<Scalar>(std::move(v), {a, row}, [an, rn](Node<Scalar>& self) {
    an->accumulate(self.grad);
    if (rn->requires_grad) rn->accumulate(self.grad.colwise().sum());
  });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  auto an = a.node();
  Matrix<Scalar> v = a.value().cwiseMax(Scalar(0));
  return detail::record<Scalar>(std::move(v), {a}, [an](Node<Scalar>& self) {
    an->accumulate(self.grad.cwiseProduct(
        (an->value.array() > Scalar(0)).template cast<Scalar>().matrix()));
  });
}

/// Multiplies by a fixed 0/(1/(1-p)) mask drawn from `rng`. Identity when p == 0.
template <typename Scalar, typename Rng>
Tensor<Scalar> dropout(const Tensor<Scalar>& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  Matrix<Scalar> mask(a.rows(), a.cols());
  const Scalar keep = Scalar(1.0 / (1.0 - p));
  for (Index i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask.data()[i] = u < p ? Scalar(0) : keep;
  }
  auto an = a.node();
  Matrix<Scalar> v = a.value().cwiseProduct(mask);
  return detail::record<Scalar>(std::move(v), {a},
                                [an, mask = std::move(mask)](Node<Scalar>& self) {
                                  an->accumulate(self.grad.cwiseProduct(mask));
                                });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  auto an = a.node();
  return detail::record<Scalar>(Matrix<Scalar>::Constant(1, 1, a.value().sum()), {a},
                                [an](Node<Scalar>& self) {
                                  an->accumulate(Matrix<Scalar>::Constant(
                                      an->value.rows(), an->value.cols(), self.grad(0, 0)));
                                });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.size()));
}

template <typename Scalar>
Tensor<Scalar> concat_cols(std::span<const Tensor<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + parts.front().shape() + " vs " + p.shape());
    }
    cols += p.cols();
  }
  Matrix<Scalar> v(rows, cols);
  std::vector<std::shared_ptr<Node<Scalar>>> nodes;
  Index offset = 0;
  bool any = false;
  for (const auto& p : parts) {
    v.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    nodes.push_back(p.node());
    any = any || p.requires_grad();
  }
  Tensor<Scalar> out(std::move(v));
  if (!grad_enabled() || !any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& n : nodes) {
    if (n->requires_grad) node.parents.push_back(n);
  }
  node.backward = [nodes](Node<Scalar>& self) {
    Index off = 0;
    for (const auto& n : nodes) {
      const Index c = n->value.cols();
      if (n->requires_grad) n->accumulate(self.grad.middleCols(off, c));
      off += c;
    }
  };
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Tensor<Scalar> parts[] = {a, b};
  return concat_cols<Scalar>(std::span<const Tensor<Scalar>>(parts));
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of range for " + a.shape());
  }
  auto an = a.node();
  Matrix<Scalar> v = a.value().middleCols(start, count);
  return detail::record<Scalar>(std::move(v), {a}, [an, start, count](Node<Scalar>& self) {
    Matrix<Scalar> g = Matrix<Scalar>::Zero(an->value.rows(), an->value.cols());
    g.middleCols(start, count) = self.grad;
    an->accumulate(g);
  });
}

/// Gathers rows of `table`; repeated ids scatter-add in the backward pass.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table, std::span<const int> ids) {
  Matrix<Scalar> v(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(table.rows()) + " rows");
    }
    v.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  auto tn = table.node();
  std::vector<int> idx(ids.begin(), ids.end());
  return detail::record<Scalar>(std::move(v), {table},
                                [tn, idx = std::move(idx)](Node<Scalar>& self) {
                                  Matrix<Scalar> g =
                                      Matrix<Scalar>::Zero(tn->value.rows(), tn->value.cols());
                                  for (std::size_t i = 0; i < idx.size(); ++i) {
                                    g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
                                  }
                                  tn->accumulate(g);
                                });
}

// ---------------------------------------------------------------------------
// Normalizers

namespace detail {

// Backward of a row-wise softmax given its output y.
template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const Matrix<Scalar>& y, const Matrix<Scalar>& g) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = y.cwiseProduct(g).rowwise().sum();
  return y.cwiseProduct(g - dot.replicate(1, g.cols()));
}

template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& x) {
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

}  // namespace detail

/// Softmax along `axis` (1: within each row, 0: within each column).
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis = 1) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  if ((axis == 1 ? x.cols() : x.rows()) == 0) throw ShapeError("softmax: empty axis in " + x.shape());
  if (axis == 0) return transpose(softmax(transpose(x), 1));
  auto xn = x.node();
  return detail::record<Scalar>(detail::softmax_rows_value<Scalar>(x.value()), {x},
                                [xn](Node<Scalar>& self) {
                                  xn->accumulate(
                                      detail::softmax_rows_backward<Scalar>(self.value, self.grad));
                                });
}

/// Row-wise softmax restricted to allowed entries. Disallowed entries are
/// exactly zero. A row with nothing allowed is all-zero when `padded_rows`
/// marks it, and an error otherwise.
template <typename Scalar>
Tensor<Scalar> masked_softmax(const Tensor<Scalar>& x, const BoolMatrix& allowed,
                              std::span<const bool> padded_rows = {}) {
  if (allowed.rows() != x.rows() || allowed.cols() != x.cols()) {
    throw ShapeError("masked_softmax: mask " + shape_string(allowed.rows(), allowed.cols()) +
                     " does not match scores " + x.shape());
  }
  if (x.cols() == 0) throw ShapeError("masked_softmax: empty axis");
  constexpr Scalar kMasked = Scalar(-1e9);
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    if (!allowed.row(r).any()) {
      const bool padded = static_cast<std::size_t>(r) < padded_rows.size() && padded_rows[r];
      if (!padded) {
        throw std::invalid_argument("masked_softmax: query row " + std::to_string(r) +
                                    " has no attendable key and is not marked as padding");
      }
      y.row(r).setZero();
      continue;
    }
    Scalar m = std::numeric_limits<Scalar>::lowest();
    for (Index c = 0; c < x.cols(); ++c) {
      const Scalar s = allowed(r, c) ? x.value()(r, c) : kMasked;
      y(r, c) = s;
      m = std::max(m, s);
    }
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    for (Index c = 0; c < x.cols(); ++c) {
      if (!allowed(r, c)) y(r, c) = Scalar(0);
    }
    y.row(r) /= y.row(r).sum();
  }
  auto xn = x.node();
  return detail::record<Scalar>(std::move(y), {x}, [xn](Node<Scalar>& self) {
    xn->accumulate(detail::softmax_rows_backward<Scalar>(self.value, self.grad));
  });
}

template <typename Scalar>
Tensor<Scalar> log_softmax(const Tensor<Scalar>& x) {
  if (x.cols() == 0) throw ShapeError("log_softmax: empty axis");
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.value().row(r).maxCoeff();
    const Scalar lse = m + std::log((x.value().row(r).array() - m).exp().sum());
    y.row(r) = (x.value().row(r).array() - lse).matrix();
  }
  auto xn = x.node();
  return detail::record<Scalar>(std::move(y), {x}, [xn](Node<Scalar>& self) {
    Matrix<Scalar> p = self.value.array().exp().matrix();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gs = self.grad.rowwise().sum();
    xn->accumulate(self.grad - p.cwiseProduct(gs.replicate(1, p.cols())));
  });
}

/// Per-row normalization to zero mean and unit variance over the last
/// dimension, then gamma * xhat + beta. Constant rows normalize to zero.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps = Scalar(1e-6)) {
  const Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ShapeError("layer_norm: gamma " + gamma.shape() + " / beta " + beta.shape() +
                     " must be [1x" + std::to_string(d) + "]");
  }
  if (d == 0) throw ShapeError("layer_norm: empty rows");
  Matrix<Scalar> xhat(x.rows(), d);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const auto row = x.value().row(r);
    if ((row.array() == row(0)).all()) {
      xhat.row(r).setZero();
      inv_std(r) = Scalar(0);
      continue;
    }
    const Scalar mu = row.mean();
    const Scalar var = (row.array() - mu).square().mean();
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = ((row.array() - mu) * inv_std(r)).matrix();
  }
  Matrix<Scalar> y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return detail::record<Scalar>(
      std::move(y), {x, gamma, beta},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<Scalar>& self) {
        const Matrix<Scalar>& g = self.grad;
        if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (bn->requires_grad) bn->accumulate(g.colwise().sum());
        if (xn->requires_grad) {
          Matrix<Scalar> gx = (g.array().rowwise() * gn->value.row(0).array()).matrix();
          const Scalar n = static_cast<Scalar>(gx.cols());
          for (Index r = 0; r < gx.rows(); ++r) {
            const Scalar mean_g = gx.row(r).sum() / n;
            const Scalar mean_gx = gx.row(r).dot(xhat.row(r)) / n;
            gx.row(r) = ((gx.row(r).array() - mean_g - xhat.row(r).array() * mean_gx) *
                         inv_std(r))
                            .matrix();
          }
          xn->accumulate(gx);
        }
      });
}

// ---------------------------------------------------------------------------
// Loss

/// Mean negative log-likelihood of `targets` under row-wise softmax(logits),
/// over rows where `pad` is false. No label smoothing.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> targets,
                             std::span<const bool> pad = {}) {
  if (static_cast<Index>(targets.size()) != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     logits.shape());
  }
  if (!pad.empty() && pad.size() != targets.size()) {
    throw ShapeError("cross_entropy: pad mask length differs from targets");
  }
  std::vector<Index> rows;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (pad.empty() || !pad[i]) {
      if (targets[i] < 0 || targets[i] >= logits.cols()) {
        throw std::out_of_range("cross_entropy: target id " + std::to_string(targets[i]) +
                                " outside vocabulary of " + std::to_string(logits.cols()));
      }
      rows.push_back(static_cast<Index>(i));
    }
  }
  if (rows.empty()) throw std::invalid_argument("cross_entropy: every position is padding");

  Matrix<Scalar> probs = Matrix<Scalar>::Zero(logits.rows(), logits.cols());
  Scalar total = 0;
  for (Index r : rows) {
    const auto row = logits.value().row(r);
    const Scalar m = row.maxCoeff();
    const Scalar lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(targets[r]);
    probs.row(r) = (row.array() - lse).exp().matrix();
  }
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(rows.size());
  auto ln = logits.node();
  std::vector<int> tgt(targets.begin(), targets.end());
  return detail::record<Scalar>(
      Matrix<Scalar>::Constant(1, 1, total * inv_n), {logits},
      [ln, probs = std::move(probs), rows = std::move(rows), tgt = std::move(tgt),
       inv_n](Node<Scalar>& self) {
        Matrix<Scalar> g = probs;
        for (Index r : rows) g(r, tgt[r]) -= Scalar(1);
        ln->accumulate(g * (inv_n * self.grad(0, 0)));
      });
}

/// Casts values (not graph) between precisions.
template <typename To, typename From>
Matrix<To> cast_matrix(const Matrix<From>& m) {
  return m.template cast<To>();
}

}  // namespace mmt
