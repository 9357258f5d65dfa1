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

#include "mmt/config.hpp"
#include "mmt/multimodal.hpp"
#include "mmt/nn.hpp"
#include "mmt/optim.hpp"
#include "mmt/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mmt {

/// Dropout settings for one forward pass. Evaluation passes leave `rng` null.
struct RunContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  static RunContext eval() { return {}; }

  template <typename Scalar>
  Tensor<Scalar> drop(const Tensor<Scalar>& x) const {
    if (!training || dropout <= 0.0 || rng == nullptr) return x;
    return mmt::dropout(x, dropout, *rng);
  }
};

template <typename Scalar>
struct EncoderMemory {
  Tensor<Scalar> states;  // src_len x d_model
  BoolVector pad_mask;    // true at padded source positions
};

template <typename Scalar>
struct DecoderOutput {
  Tensor<Scalar> logits;  // len x V_tgt
  Tensor<Scalar> hidden;  // len x d_model, final pre-softmax states
};

/// Per-layer attention captured during a decoder pass.
template <typename Scalar>
struct DecoderTrace {
  std::vector<AttentionTrace<Scalar>> draft;
  std::vector<AttentionTrace<Scalar>> visual;
};

template <typename Scalar>
struct AttentionSublayer {
  LayerNormWeights<Scalar> norm;
  MhaWeights<Scalar> attn;
};

template <typename Scalar>
struct EncoderLayer {
  AttentionSublayer<Scalar> self_attn;
  LayerNormWeights<Scalar> ffn_norm;
  FeedForwardWeights<Scalar> ffn;
};

/// Self-attention, encoder attention, then the optional draft and visual
/// attentions, then the feed-forward block. Every sublayer is pre-normed
/// with a residual connection.
template <typename Scalar>
struct DecoderLayer {
  AttentionSublayer<Scalar> self_attn;
  AttentionSublayer<Scalar> source_attn;
  std::optional<AttentionSublayer<Scalar>> draft_attn;
  std::optional<AttentionSublayer<Scalar>> visual_attn;
  LayerNormWeights<Scalar> ffn_norm;
  FeedForwardWeights<Scalar> ffn;
};

template <typename Scalar>
struct DecoderStack {
  std::vector<DecoderLayer<Scalar>> layers;
  LayerNormWeights<Scalar> final_norm;
};

/// Image inputs prepared once per sentence for a model.
template <typename Scalar>
struct PreparedVisual {
  std::optional<Tensor<Scalar>> image_vector;  // 1 x 545, additive path
  std::optional<Tensor<Scalar>> keys;          // rows x d_model, attention path
};

template <typename Scalar>
BoolVector pad_mask_of(std::span<const int> ids) {
  BoolVector pad(static_cast<Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) pad(static_cast<Index>(i)) = ids[i] == token::kPad;
  return pad;
}

/// Runs a decoder stack over already-embedded inputs. The draft sublayer
/// runs only when the layer has one and `draft_memory` is given; likewise for
/// the visual sublayer and `visual_keys`.
template <typename Scalar>
Tensor<Scalar> run_decoder_stack(const DecoderStack<Scalar>& stack, Tensor<Scalar> x,
                                 const BoolVector& tgt_pad, const EncoderMemory<Scalar>& mem,
                                 const Tensor<Scalar>* draft_memory,
                                 const Tensor<Scalar>* visual_keys, const RunContext& ctx,
                                 DecoderTrace<Scalar>* trace = nullptr) {
  const AttentionMask self_mask = causal_padding_mask(tgt_pad);
  const AttentionMask src_mask = padding_mask(x.rows(), mem.pad_mask, tgt_pad);
  if (trace) {
    trace->draft.clear();
    trace->visual.clear();
  }
  for (const auto& layer : stack.layers) {
    Tensor<Scalar> h = apply_layer_norm(x, layer.self_attn.norm);
    x = x + ctx.drop(multi_head_attention(h, h, h, &self_mask, layer.self_attn.attn));

    h = apply_layer_norm(x, layer.source_attn.norm);
    x = x + ctx.drop(
                multi_head_attention(h, mem.states, mem.states, &src_mask, layer.source_attn.attn));

    if (layer.draft_attn && draft_memory) {
      h = apply_layer_norm(x, layer.draft_attn->norm);
      AttentionTrace<Scalar>* t = nullptr;
      if (trace) t = &trace->draft.emplace_back();
      x = x + ctx.drop(multi_head_attention(h, *draft_memory, *draft_memory, nullptr,
                                            layer.draft_attn->attn, t));
    }
    if (layer.visual_attn && visual_keys) {
      h = apply_layer_norm(x, layer.visual_attn->norm);
      AttentionTrace<Scalar>* t = nullptr;
      if (trace) t = &trace->visual.emplace_back();
      x = x + ctx.drop(visual_cross_attention(h, *visual_keys, layer.visual_attn->attn, t));
    }

    h = apply_layer_norm(x, layer.ffn_norm);
    x = x + ctx.drop(feed_forward(h, layer.ffn));
  }
  return apply_layer_norm(x, stack.final_norm);
}

/// Encoder, first-pass decoder and, for deliberation systems, a second-pass
/// decoder attending over the draft. Visual conditioning attaches to the
/// first pass in base systems and to the second pass in deliberation systems.
template <typename Scalar>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Initializer init(seed);
    ParameterBuilder<Scalar> pb(params_, init);
    const Index d = config_.d_model;

    source_embedding = pb.add("src_embed", embedding_init(init, config_.src_vocab, d));
    target_embedding = pb.add("tgt_embed", embedding_init(init, config_.tgt_vocab, d));

    for (int i = 0; i < config_.enc_layers; ++i) {
      const std::string p = "enc." + std::to_string(i);
      EncoderLayer<Scalar> layer;
      layer.self_attn = {pb.layer_norm(p + ".self.norm", d),
                         pb.attention(p + ".self.attn", d, d, config_.heads)};
      layer.ffn_norm = pb.layer_norm(p + ".ffn.norm", d);
      layer.ffn = pb.feed_forward(p + ".ffn", d, config_.d_ff);
      encoder.push_back(std::move(layer));
    }
    encoder_norm = pb.layer_norm("enc.norm", d);

    const bool base = config_.system == SystemKind::Base;
    const bool attends_visual =
        config_.visual == VisualMode::Att || config_.visual == VisualMode::Obj;
    decoder = build_stack(pb, "dec", config_.dec_layers, false, base && attends_visual);
    if (!base) second_pass = build_stack(pb, "delib", config_.delib_layers, true, attends_visual);

    if (config_.visual == VisualMode::Sum) {
      aic_projection = pb.xavier("aic.proj", config_.visual_width, d);
    } else if (attends_visual) {
      visual_projection = pb.xavier("visual.proj", config_.visual_width, d);
    }
  }

  const ModelConfig& config() const { return config_; }
  ParameterList<Scalar>& parameters() { return params_; }
  const ParameterList<Scalar>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.size());
    return n;
  }

  const Tensor<Scalar>* find_parameter(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return &p.tensor;
    }
    return nullptr;
  }
  Tensor<Scalar>* find_parameter(const std::string& name) {
    for (auto& p : params_) {
      if (p.name == name) return &p.tensor;
    }
    return nullptr;
  }

  bool is_deliberation() const { return second_pass.has_value(); }

  // ------------------------------------------------------------------------

  EncoderMemory<Scalar> encode(std::span<const int> src, const RunContext& ctx = {}) const {
    return encode(src, pad_mask_of<Scalar>(src), ctx);
  }

  /// Pad positions are excluded as attention keys; their own rows are
  /// computed but never influence non-pad rows.
  EncoderMemory<Scalar> encode(std::span<const int> src, const BoolVector& pad,
                               const RunContext& ctx) const {
    if (src.empty()) throw std::invalid_argument("encode: empty source sentence");
    if (static_cast<int>(src.size()) > config_.max_len) {
      throw std::invalid_argument("encode: source length " + std::to_string(src.size()) +
                                  " exceeds max_len " + std::to_string(config_.max_len));
    }
    if (pad.size() != static_cast<Index>(src.size())) {
      throw ShapeError("encode: pad mask length differs from source length");
    }
    if (pad.all()) throw std::invalid_argument("encode: source is entirely padding");
    const Index len = static_cast<Index>(src.size());
    Tensor<Scalar> x = embed_tokens(src, source_embedding, true) +
                       Tensor<Scalar>(positional_encoding<Scalar>(len, config_.d_model));
    x = ctx.drop(x);
    const AttentionMask mask = padding_mask(len, pad, pad);
    for (const auto& layer : encoder) {
      Tensor<Scalar> h = apply_layer_norm(x, layer.self_attn.norm);
      x = x + ctx.drop(multi_head_attention(h, h, h, &mask, layer.self_attn.attn));
      h = apply_layer_norm(x, layer.ffn_norm);
      x = x + ctx.drop(feed_forward(h, layer.ffn));
    }
    return {apply_layer_norm(x, encoder_norm), pad};
  }

  /// Turns raw features into the inputs this model's visual mode consumes.
  /// A null pointer, or an empty object list, yields no visual input.
  PreparedVisual<Scalar> prepare_visual(const VisualFeatures* features) const {
    PreparedVisual<Scalar> out;
    if (!features || config_.visual == VisualMode::None) return out;
    if (!feature_matches_mode(*features, config_.visual)) {
      throw std::invalid_argument("visual features do not match visual mode '" +
                                  to_string(config_.visual) + "'");
    }
    validate(*features);
    if (config_.visual == VisualMode::Sum) {
      out.image_vector = visual_rows_tensor<Scalar>(*features);
    } else {
      out.keys = project_visual(*features, *visual_projection);
    }
    return out;
  }

  /// First-pass decoder over a BOS-initial prefix.
  DecoderOutput<Scalar> decode(std::span<const int> prefix, const EncoderMemory<Scalar>& mem,
                               const RunContext& ctx = {},
                               const PreparedVisual<Scalar>* visual = nullptr) const {
    check_prefix(prefix, "decode");
    const bool base = !is_deliberation();
    const PreparedVisual<Scalar> none;
    const PreparedVisual<Scalar>& v = (visual && base) ? *visual : none;
    const EncoderMemory<Scalar> used = v.image_vector ? condition_aic(mem, *v.image_vector, *aic_projection) : mem;
    Tensor<Scalar> hidden = run_decoder_stack<Scalar>(decoder, embed_prefix(prefix, ctx), pad_mask_of<Scalar>(prefix),
                                              used, nullptr, v.keys ? &*v.keys : nullptr, ctx);
    return {matmul_transposed(hidden, target_embedding), hidden};
  }

  /// Second-pass decoder: attends over the encoder memory, the complete
  /// draft memory and, if configured, visual keys.
  Tensor<Scalar> second_pass_decode(std::span<const int> prefix, const EncoderMemory<Scalar>& mem,
                                    const Tensor<Scalar>& draft_memory, const RunContext& ctx = {},
                                    const PreparedVisual<Scalar>* visual = nullptr,
                                    DecoderTrace<Scalar>* trace = nullptr) const {
    if (!second_pass) throw std::logic_error("second_pass_decode: model has no second-pass decoder");
    check_prefix(prefix, "second_pass_decode");
    if (draft_memory.rows() == 0) throw std::invalid_argument("second_pass_decode: empty draft");
    if (draft_memory.cols() != config_.d_model + config_.d_emb) {
      throw ShapeError("second_pass_decode: draft memory " + draft_memory.shape() +
                       " must be d_model + d_emb wide");
    }
    const PreparedVisual<Scalar> none;
    const PreparedVisual<Scalar>& v = visual ? *visual : none;
    const EncoderMemory<Scalar> used = v.image_vector ? condition_aic(mem, *v.image_vector, *aic_projection) : mem;
    Tensor<Scalar> hidden = run_decoder_stack<Scalar>(*second_pass, embed_prefix(prefix, ctx),
                                              pad_mask_of<Scalar>(prefix), used, &draft_memory,
                                              v.keys ? &*v.keys : nullptr, ctx, trace);
    return matmul_transposed(hidden, target_embedding);
  }

  // ------------------------------------------------------------------------

  std::map<std::string, Matrix<float>> export_tensors() const {
    std::map<std::string, Matrix<float>> out;
    for (const auto& p : params_) out.emplace(p.name, p.tensor.value().template cast<float>());
    return out;
  }

  /// Copies values by name. Every parameter must be present with its shape
  /// unless `allow_missing` is set; extra names are an error either way.
  void import_tensors(const std::map<std::string, Matrix<float>>& tensors, bool allow_missing = false) {
    for (const auto& [name, m] : tensors) {
      Tensor<Scalar>* t = find_parameter(name);
      if (!t) throw std::invalid_argument("import_tensors: unknown parameter '" + name + "'");
      if (t->rows() != m.rows() || t->cols() != m.cols()) {
        throw ShapeError("import_tensors: '" + name + "' is " + shape_string(m.rows(), m.cols()) +
                         ", model expects " + t->shape());
      }
      t->value() = m.template cast<Scalar>();
    }
    if (!allow_missing) {
      for (const auto& p : params_) {
        if (!tensors.count(p.name)) {
          throw std::invalid_argument("import_tensors: missing parameter '" + p.name + "'");
        }
      }
    }
  }

  /// Same architecture at another precision, with values cast.
  template <typename Other>
  Model<Other> cast() const {
    Model<Other> out(config_, 0);
    for (auto& p : out.parameters()) {
      p.tensor.value() = find_parameter(p.name)->value().template cast<Other>();
    }
    return out;
  }

  Tensor<Scalar> source_embedding;
  Tensor<Scalar> target_embedding;  // also the output projection of both decoders
  std::vector<EncoderLayer<Scalar>> encoder;
  LayerNormWeights<Scalar> encoder_norm;
  DecoderStack<Scalar> decoder;
  std::optional<DecoderStack<Scalar>> second_pass;
  std::optional<Tensor<Scalar>> aic_projection;
  std::optional<Tensor<Scalar>> visual_projection;

 private:
  static Matrix<Scalar> embedding_init(Initializer& init, Index rows, Index d) {
    // Scaled so that sqrt(d) * row has unit-order entries.
    Matrix<Scalar> m = init.template xavier_uniform<Scalar>(rows, d);
    const double target = 1.0 / std::sqrt(static_cast<double>(d));
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + d));
    m *= static_cast<Scalar>(target * std::sqrt(3.0) / limit);
    return m;
  }

  DecoderStack<Scalar> build_stack(ParameterBuilder<Scalar>& pb, const std::string& prefix,
                                   int layers, bool with_draft, bool with_visual) {
    const Index d = config_.d_model;
    DecoderStack<Scalar> stack;
    for (int i = 0; i < layers; ++i) {
      const std::string p = prefix + "." + std::to_string(i);
      DecoderLayer<Scalar> layer;
      layer.self_attn = {pb.layer_norm(p + ".self.norm", d),
                         pb.attention(p + ".self.attn", d, d, config_.heads)};
      layer.source_attn = {pb.layer_norm(p + ".src.norm", d),
                           pb.attention(p + ".src.attn", d, d, config_.heads)};
      if (with_draft) {
        layer.draft_attn = AttentionSublayer<Scalar>{
            pb.layer_norm(p + ".draft.norm", d),
            pb.attention(p + ".draft.attn", d, d + config_.d_emb, config_.heads)};
      }
      if (with_visual) {
        layer.visual_attn = AttentionSublayer<Scalar>{
            pb.layer_norm(p + ".vis.norm", d), pb.attention(p + ".vis.attn", d, d, config_.heads)};
      }
      layer.ffn_norm = pb.layer_norm(p + ".ffn.norm", d);
      layer.ffn = pb.feed_forward(p + ".ffn", d, config_.d_ff);
      stack.layers.push_back(std::move(layer));
    }
    stack.final_norm = pb.layer_norm(prefix + ".norm", d);
    return stack;
  }

  void check_prefix(std::span<const int> prefix, const char* op) const {
    if (prefix.empty() || prefix.front() != token::kBos) {
      throw std::invalid_argument(std::string(op) + ": prefix must begin with BOS");
    }
    if (static_cast<int>(prefix.size()) > config_.max_len) {
      throw std::invalid_argument(std::string(op) + ": prefix length " + std::to_string(prefix.size()) +
                                  " exceeds max_len " + std::to_string(config_.max_len));
    }
  }

  Tensor<Scalar> embed_prefix(std::span<const int> prefix, const RunContext& ctx) const {
    const Index len = static_cast<Index>(prefix.size());
    return ctx.drop(embed_tokens(prefix, target_embedding, true) +
                    Tensor<Scalar>(positional_encoding<Scalar>(len, config_.d_model)));
  }

  ModelConfig config_;
  ParameterList<Scalar> params_;
};

/// Mean token negative log-likelihood over non-pad targets.
template <typename Scalar>
Tensor<Scalar> cross_entropy_loss(const Tensor<Scalar>& logits, std::span<const int> targets,
                                  const BoolVector& pad) {
  return cross_entropy(logits, targets, as_span(pad));
}

}  // namespace mmt
