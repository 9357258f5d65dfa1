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

#include "mmt/optim.hpp"
#include "mmt/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mmt {

using BoolVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

inline std::span<const bool> as_span(const BoolVector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Which (query, key) pairs may attend. Queries flagged in `padded_queries`
/// may have no attendable key; their output rows are zero.
struct AttentionMask {
  BoolMatrix allowed;
  BoolVector padded_queries;

  Index query_len() const { return allowed.rows(); }
  Index key_len() const { return allowed.cols(); }
};

inline AttentionMask causal_mask(Index len) {
  if (len < 1) throw std::invalid_argument("causal_mask: length must be >= 1");
  AttentionMask mask;
  mask.allowed = BoolMatrix::Constant(len, len, false);
  for (Index i = 0; i < len; ++i) mask.allowed.row(i).head(i + 1).setConstant(true);
  mask.padded_queries = BoolVector::Constant(len, false);
  return mask;
}

/// Every query may see every non-padded key.
inline AttentionMask padding_mask(Index query_len, const BoolVector& key_pad,
                                  const BoolVector& query_pad) {
  AttentionMask mask;
  mask.allowed = BoolMatrix::Constant(query_len, key_pad.size(), true);
  for (Index j = 0; j < key_pad.size(); ++j) {
    if (key_pad(j)) mask.allowed.col(j).setConstant(false);
  }
  mask.padded_queries =
      query_pad.size() == query_len ? query_pad : BoolVector::Constant(query_len, false);
  return mask;
}

/// Causal self-attention mask that also hides padded keys.
inline AttentionMask causal_padding_mask(const BoolVector& pad) {
  AttentionMask mask = causal_mask(pad.size());
  for (Index j = 0; j < pad.size(); ++j) {
    if (pad(j)) mask.allowed.col(j).setConstant(false);
  }
  mask.padded_queries = pad;
  return mask;
}

template <typename Scalar>
struct LayerNormWeights {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
};

/// Query/key/value/output projections. Heads occupy contiguous column blocks
/// of width d_model / heads. Keys and values may come from a wider source.
template <typename Scalar>
struct MhaWeights {
  Tensor<Scalar> wq;  // d_model x d_model
  Tensor<Scalar> wk;  // d_source x d_model
  Tensor<Scalar> wv;  // d_source x d_model
  Tensor<Scalar> wo;  // d_model x d_model
  int heads = 1;

  Index d_model() const { return wq.cols(); }
};

template <typename Scalar>
struct FeedForwardWeights {
  Tensor<Scalar> w1;  // d_model x d_ff
  Tensor<Scalar> b1;  // 1 x d_ff
  Tensor<Scalar> w2;  // d_ff x d_model
  Tensor<Scalar> b2;  // 1 x d_model
};

/// Optional capture of per-head attention weights (query_len x key_len each).
template <typename Scalar>
struct AttentionTrace {
  std::vector<Matrix<Scalar>> heads;
};

/// Seeded, platform-independent parameter initializer.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  template <typename Scalar>
  Matrix<Scalar> xavier_uniform(Index rows, Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix<Scalar> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<Scalar>((2.0 * uniform() - 1.0) * limit);
    }
    return m;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Collects named trainable tensors as they are created.
template <typename Scalar>
class ParameterBuilder {
 public:
  ParameterBuilder(ParameterList<Scalar>& params, Initializer& init)
      : params_(params), init_(init) {}

  Tensor<Scalar> add(const std::string& name, Matrix<Scalar> value) {
    Tensor<Scalar> t(std::move(value), true);
    params_.push_back({name, t});
    return t;
  }

  Tensor<Scalar> xavier(const std::string& name, Index rows, Index cols) {
    return add(name, init_.template xavier_uniform<Scalar>(rows, cols));
  }
  Tensor<Scalar> zeros(const std::string& name, Index rows, Index cols) {
    return add(name, Matrix<Scalar>::Zero(rows, cols));
  }
  Tensor<Scalar> ones(const std::string& name, Index rows, Index cols) {
    return add(name, Matrix<Scalar>::Ones(rows, cols));
  }

  LayerNormWeights<Scalar> layer_norm(const std::string& prefix, Index d) {
    return {ones(prefix + ".gamma", 1, d), zeros(prefix + ".beta", 1, d)};
  }

  MhaWeights<Scalar> attention(const std::string& prefix, Index d_model, Index d_source,
                               int heads) {
    if (heads < 1 || d_model % heads != 0) {
      throw std::invalid_argument("attention '" + prefix + "': d_model " +
                                  std::to_string(d_model) + " not divisible by " +
                                  std::to_string(heads) + " heads");
    }
    MhaWeights<Scalar> w;
    w.wq = xavier(prefix + ".wq", d_model, d_model);
    w.wk = xavier(prefix + ".wk", d_source, d_model);
    w.wv = xavier(prefix + ".wv", d_source, d_model);
    w.wo = xavier(prefix + ".wo", d_model, d_model);
    w.heads = heads;
    return w;
  }

  FeedForwardWeights<Scalar> feed_forward(const std::string& prefix, Index d_model, Index d_ff) {
    return {xavier(prefix + ".w1", d_model, d_ff), zeros(prefix + ".b1", 1, d_ff),
            xavier(prefix + ".w2", d_ff, d_model), zeros(prefix + ".b2", 1, d_model)};
  }

 private:
  ParameterList<Scalar>& params_;
  Initializer& init_;
};

// ---------------------------------------------------------------------------

/// Row lookup, optionally scaled by sqrt(d_emb).
template <typename Scalar>
Tensor<Scalar> embed_tokens(std::span<const int> ids, const Tensor<Scalar>& table, bool scaled) {
  for (int id : ids) {
    if (id < 0 || id >= table.rows()) {
      throw std::out_of_range("embed_tokens: token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(table.rows()));
    }
  }
  Tensor<Scalar> rows = gather_rows(table, ids);
  if (!scaled) return rows;
  return scale(rows, static_cast<Scalar>(std::sqrt(static_cast<double>(table.cols()))));
}

/// Sinusoidal positions: PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(...).
template <typename Scalar>
Matrix<Scalar> positional_encoding(Index len, Index d) {
  if (d <= 0 || d % 2 != 0) {
    throw std::invalid_argument("positional_encoding: width must be even, got " + std::to_string(d));
  }
  Matrix<Scalar> pe(len, d);
  for (Index p = 0; p < len; ++p) {
    for (Index i = 0; i < d / 2; ++i) {
      const double angle =
          static_cast<double>(p) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe(p, 2 * i) = static_cast<Scalar>(std::sin(angle));
      pe(p, 2 * i + 1) = static_cast<Scalar>(std::cos(angle));
    }
  }
  return pe;
}

/// Scaled dot-product attention over `heads` column blocks, concatenated and
/// output-projected. A null mask lets every query see every key.
template <typename Scalar>
Tensor<Scalar> multi_head_attention(const Tensor<Scalar>& queries, const Tensor<Scalar>& keys,
                                    const Tensor<Scalar>& values, const AttentionMask* mask,
                                    const MhaWeights<Scalar>& w,
                                    AttentionTrace<Scalar>* trace = nullptr) {
  if (keys.rows() != values.rows()) {
    throw ShapeError("multi_head_attention: keys " + keys.shape() + " and values " +
                     values.shape() + " differ in length");
  }
  if (mask && (mask->query_len() != queries.rows() || mask->key_len() != keys.rows())) {
    throw ShapeError("multi_head_attention: mask " +
                     shape_string(mask->query_len(), mask->key_len()) + " vs queries " +
                     queries.shape() + ", keys " + keys.shape());
  }
  const Index d_model = w.d_model();
  const Index d_head = d_model / w.heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(d_head));

  Tensor<Scalar> q = matmul(queries, w.wq);
  Tensor<Scalar> k = matmul(keys, w.wk);
  Tensor<Scalar> v = matmul(values, w.wv);

  BoolMatrix all_allowed;
  if (!mask) all_allowed = BoolMatrix::Constant(queries.rows(), keys.rows(), true);
  const BoolMatrix& allowed = mask ? mask->allowed : all_allowed;
  std::span<const bool> padded = mask ? as_span(mask->padded_queries) : std::span<const bool>{};

  std::vector<Tensor<Scalar>> head_out;
  head_out.reserve(static_cast<std::size_t>(w.heads));
  if (trace) trace->heads.clear();
  for (int h = 0; h < w.heads; ++h) {
    const Index off = h * d_head;
    Tensor<Scalar> qh = w.heads == 1 ? q : slice_cols(q, off, d_head);
    Tensor<Scalar> kh = w.heads == 1 ? k : slice_cols(k, off, d_head);
    Tensor<Scalar> vh = w.heads == 1 ? v : slice_cols(v, off, d_head);
    Tensor<Scalar> scores = scale(matmul_transposed(qh, kh), inv_sqrt);
    Tensor<Scalar> weights = masked_softmax(scores, allowed, padded);
    if (trace) trace->heads.push_back(weights.value());
    head_out.push_back(matmul(weights, vh));
  }
  Tensor<Scalar> joined =
      w.heads == 1 ? head_out.front()
                   : concat_cols<Scalar>(std::span<const Tensor<Scalar>>(head_out));
  return matmul(joined, w.wo);
}

/// Position-wise ReLU(x W1 + b1) W2 + b2.
template <typename Scalar>
Tensor<Scalar> feed_forward(const Tensor<Scalar>& x, const FeedForwardWeights<Scalar>& w) {
  if (x.cols() != w.w1.rows() || w.w1.cols() != w.w2.rows() || w.w2.cols() != x.cols()) {
    throw ShapeError("feed_forward: widths " + x.shape() + " -> " + w.w1.shape() + " -> " +
                     w.w2.shape() + " do not chain");
  }
  return add_row(matmul(relu(add_row(matmul(x, w.w1), w.b1)), w.w2), w.b2);
}

template <typename Scalar>
Tensor<Scalar> apply_layer_norm(const Tensor<Scalar>& x, const LayerNormWeights<Scalar>& w) {
  return layer_norm(x, w.gamma, w.beta, Scalar(1e-6));
}

}  // namespace mmt
