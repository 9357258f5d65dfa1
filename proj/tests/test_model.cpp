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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mmt/deliberation.hpp"
#include "mmt/model.hpp"
#include "test_support.hpp"

#include <random>

using namespace mmt;
using mmt::testing::expected_parameter_count;
using mmt::testing::gradient_error;
using mmt::testing::probe_loss;
using mmt::testing::random_matrix;

namespace {

ModelConfig tiny(SystemKind system = SystemKind::Base, VisualMode visual = VisualMode::None) {
  ModelConfig c;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.delib_layers = 1;
  c.heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.d_emb = 8;
  c.src_vocab = 11;
  c.tgt_vocab = 13;
  c.dropout = 0.0;
  c.max_len = 16;
  c.system = system;
  c.visual = visual;
  c.visual_width = visual == VisualMode::Att ? 6 : default_visual_width(visual);
  return c;
}

VisualFeatures spatial(Index rows, Index width, std::mt19937_64& rng) {
  return SpatialFeatures{random_matrix<float>(rows, width, rng)};
}

void zero_parameter(Model<double>& model, const std::string& name) {
  Tensor<double>* t = model.find_parameter(name);
  REQUIRE(t != nullptr);
  t->value().setZero();
}

}  // namespace

TEST_CASE("config validation names the offending key") {
  auto expect_key = [](ModelConfig c, const std::string& key) {
    try {
      c.validate();
      FAIL("expected ConfigError for " << key);
    } catch (const ConfigError& e) {
      CHECK(e.key() == key);
    }
  };
  CHECK_NOTHROW(tiny().validate());
  ModelConfig c = tiny();
  c.heads = 3;
  expect_key(c, "heads");
  c = tiny();
  c.delib_layers = 3;
  expect_key(c, "delib_layers");
  c = tiny(SystemKind::Deliberation);
  c.delib_layers = 0;
  expect_key(c, "delib_layers");
  c = tiny();
  c.d_emb = 4;
  expect_key(c, "d_emb");
  c = tiny();
  c.enc_layers = 0;
  expect_key(c, "enc_layers");
  c = tiny();
  c.src_vocab = 0;
  expect_key(c, "src_vocab");
  c = tiny(SystemKind::Base, VisualMode::Sum);
  c.visual_width = 10;
  expect_key(c, "visual_width");
  c = tiny(SystemKind::Base, VisualMode::Obj);
  c.visual_width = 49;
  expect_key(c, "visual_width");

  const auto full = ModelConfig::full_size(100, 100);
  CHECK(full.enc_layers == 6);
  CHECK(full.dec_layers == 6);
  CHECK(full.delib_layers == 3);
  CHECK_NOTHROW(full.validate());
}

TEST_CASE("config text round trip and differences") {
  const ModelConfig c = tiny(SystemKind::Deliberation, VisualMode::Obj);
  CHECK(ModelConfig::from_map(c.to_map()) == c);
  ModelConfig other = c;
  other.dec_layers = 6;
  other.heads = 4;
  const auto diffs = config_differences(c, other);
  CHECK(diffs.size() == 2);
  CHECK(diffs[0] == "dec_layers (2 vs 6)");
  CHECK(diffs[1] == "heads (2 vs 4)");
}

TEST_CASE("parameter count matches the closed form") {
  for (auto system : {SystemKind::Base, SystemKind::Deliberation}) {
    for (auto visual : {VisualMode::None, VisualMode::Sum, VisualMode::Att, VisualMode::Obj}) {
      const ModelConfig c = tiny(system, visual);
      CAPTURE(to_string(system));
      CAPTURE(to_string(visual));
      CHECK(Model<float>(c, 1).parameter_count() == expected_parameter_count(c));
    }
  }
  CHECK(Model<float>(tiny(SystemKind::Deliberation), 1).parameter_count() >
        Model<float>(tiny(SystemKind::Base), 1).parameter_count());
}

TEST_CASE("encoder shapes, determinism and empty input") {
  const Model<float> model(tiny(), 3);
  const std::vector<int> src = {5, 6, 7, 8, 9};
  const auto mem = model.encode(src);
  CHECK(mem.states.rows() == 5);
  CHECK(mem.states.cols() == 8);
  CHECK(mem.pad_mask.size() == 5);
  const Model<float> again(tiny(), 3);
  CHECK(again.encode(src).states.value() == mem.states.value());
  CHECK_THROWS(model.encode(std::vector<int>{}));
  CHECK_THROWS(model.encode(std::vector<int>(17, 5)));
}

TEST_CASE("padded source content never reaches non-pad outputs") {
  const Model<double> model(tiny(), 4);
  std::vector<int> src = {5, 6, 7, 0, 0};
  BoolVector pad(5);
  pad << false, false, false, true, true;
  const auto a = model.encode(src, pad, {});
  std::vector<int> changed = src;
  changed[3] = 9;
  changed[4] = 10;
  const auto b = model.encode(changed, pad, {});
  CHECK(a.states.value().topRows(3) == b.states.value().topRows(3));

  const std::vector<int> prefix = {token::kBos, 7, 8};
  CHECK(model.decode(prefix, a).logits.value() == model.decode(prefix, b).logits.value());
}

TEST_CASE("first-pass decoder is causal") {
  const Model<double> model(tiny(), 5);
  const auto mem = model.encode(std::vector<int>{5, 6, 7});
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> prefix = {token::kBos};
    for (int i = 0; i < 6; ++i) prefix.push_back(5 + static_cast<int>(rng() % 8));
    const auto out = model.decode(prefix, mem);
    CHECK(out.logits.rows() == 7);
    CHECK(out.logits.cols() == 13);
    CHECK(out.hidden.cols() == 8);
    const Index t = static_cast<Index>(rng() % 6);
    std::vector<int> changed = prefix;
    for (std::size_t j = static_cast<std::size_t>(t) + 1; j < changed.size(); ++j) {
      changed[j] = 5 + static_cast<int>(rng() % 8);
    }
    const auto other = model.decode(changed, mem);
    CHECK(other.logits.value().topRows(t + 1) == out.logits.value().topRows(t + 1));
  }
  CHECK_THROWS(model.decode(std::vector<int>{5, 6}, mem));
  CHECK_THROWS(model.decode(std::vector<int>(17, token::kBos), mem));
}

TEST_CASE("second pass sees the whole draft but only its own past") {
  const Model<double> model(tiny(SystemKind::Deliberation), 6);
  const auto mem = model.encode(std::vector<int>{5, 6, 7, 8});
  const std::vector<int> draft = {5, 6, 7, 8, token::kEos};
  const std::vector<int> draft_prefix = {token::kBos, 5, 6, 7, 8};
  const auto hidden = model.decode(draft_prefix, mem).hidden;
  const auto memory = build_draft_memory(hidden, draft, model.target_embedding).memory;
  const std::vector<int> prefix = {token::kBos, 9, 10, 11, 12};
  const auto logits = model.second_pass_decode(prefix, mem, memory).value();

  std::vector<int> late = draft;
  late[3] = 12;
  const auto late_memory = build_draft_memory(hidden, late, model.target_embedding).memory;
  const auto moved = model.second_pass_decode(prefix, mem, late_memory).value();
  CHECK((moved.row(0) - logits.row(0)).cwiseAbs().maxCoeff() > 1e-6);

  std::vector<int> changed = prefix;
  changed[3] = 5;
  changed[4] = 6;
  const auto causal = model.second_pass_decode(changed, mem, memory).value();
  CHECK(causal.topRows(3) == logits.topRows(3));

  CHECK_THROWS(model.second_pass_decode(prefix, mem, Tensor<double>::zeros(0, 16)));
  CHECK_THROWS_AS(model.second_pass_decode(prefix, mem, Tensor<double>::zeros(3, 8)), ShapeError);
  const Model<double> base(tiny(), 6);
  CHECK_THROWS(base.second_pass_decode(prefix, mem, memory));
}

TEST_CASE("zeroed draft attention reduces the second pass to a plain decoder") {
  Model<double> model(tiny(SystemKind::Deliberation), 7);
  zero_parameter(model, "delib.0.draft.attn.wo");
  const auto mem = model.encode(std::vector<int>{5, 6, 7});
  std::mt19937_64 rng(7);
  const Tensor<double> memory(random_matrix(4, 16, rng));
  const std::vector<int> prefix = {token::kBos, 8, 9};
  const auto second = model.second_pass_decode(prefix, mem, memory).value();
  const auto plain = run_decoder_stack<double>(*model.second_pass,
                                              Tensor<double>(embed_tokens<double>(prefix, model.target_embedding, true).value() +
                                                             positional_encoding<double>(3, 8)),
                                              pad_mask_of<double>(prefix), mem, nullptr, nullptr, {});
  CHECK(second == matmul_transposed(plain, model.target_embedding).value());
}

TEST_CASE("zeroed visual attention reduces to text-only decoding") {
  std::mt19937_64 rng(8);
  const VisualFeatures v = spatial(4, 6, rng);
  const std::vector<int> src = {5, 6, 7};
  const std::vector<int> prefix = {token::kBos, 8, 9};

  Model<double> base(tiny(SystemKind::Base, VisualMode::Att), 8);
  const auto mem = base.encode(src);
  const auto prepared = base.prepare_visual(&v);
  CHECK(base.decode(prefix, mem, {}, &prepared).logits.value() != base.decode(prefix, mem).logits.value());
  for (int l = 0; l < 2; ++l) zero_parameter(base, "dec." + std::to_string(l) + ".vis.attn.wo");
  CHECK(base.decode(prefix, mem, {}, &prepared).logits.value() == base.decode(prefix, mem).logits.value());

  Model<double> delib(tiny(SystemKind::Deliberation, VisualMode::Att), 8);
  const auto dmem = delib.encode(src);
  const auto dprep = delib.prepare_visual(&v);
  // Delib systems attach the image to the second pass only.
  CHECK(delib.decode(prefix, dmem, {}, &dprep).logits.value() == delib.decode(prefix, dmem).logits.value());
  const Tensor<double> memory(random_matrix(3, 16, rng));
  zero_parameter(delib, "delib.0.vis.attn.wo");
  CHECK(delib.second_pass_decode(prefix, dmem, memory, {}, &dprep).value() ==
        delib.second_pass_decode(prefix, dmem, memory).value());
}

TEST_CASE("zero image vector leaves additive conditioning inert") {
  const Model<double> model(tiny(SystemKind::Base, VisualMode::Sum), 9);
  const VisualFeatures zero = BagOfObjects{std::vector<int>(545, 0)};
  std::vector<int> counts(545, 0);
  counts[3] = 2;
  const VisualFeatures some = BagOfObjects{counts};
  const auto mem = model.encode(std::vector<int>{5, 6});
  const std::vector<int> prefix = {token::kBos, 7};
  const auto pz = model.prepare_visual(&zero);
  const auto ps = model.prepare_visual(&some);
  CHECK(model.decode(prefix, mem, {}, &pz).logits.value() == model.decode(prefix, mem).logits.value());
  CHECK(model.decode(prefix, mem, {}, &ps).logits.value() != model.decode(prefix, mem).logits.value());
  const VisualFeatures wrong = SpatialFeatures{Matrix<float>::Zero(2, 545)};
  CHECK_THROWS(model.prepare_visual(&wrong));
}

TEST_CASE("composite blocks pass gradient checks") {
  std::mt19937_64 rng(10);
  ModelConfig c = tiny(SystemKind::Deliberation, VisualMode::Att);
  c.enc_layers = 1;
  c.dec_layers = 1;
  Model<double> model(c, 10);
  const VisualFeatures v = spatial(3, 6, rng);
  const std::vector<int> src = {5, 6, 7};
  const std::vector<int> prefix = {token::kBos, 8, 9};
  const std::vector<int> targets = {8, 9, token::kEos};
  const std::vector<int> draft = {8, 10, token::kEos};
  const Matrix<double> probe = random_matrix(3, 8, rng);

  std::vector<Tensor<double>> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);

  CHECK(gradient_error(params, [&] { return probe_loss(model.encode(src).states, probe); }, 1e-5, 4) < 1e-4);
  CHECK(gradient_error(params,
                       [&] {
                         const auto mem = model.encode(src);
                         const auto hidden = model.decode(std::vector<int>{token::kBos, 8, 10}, mem).hidden;
                         const auto memory = build_draft_memory(hidden, draft, model.target_embedding).memory;
                         const auto prepared = model.prepare_visual(&v);
                         return cross_entropy_loss(model.second_pass_decode(prefix, mem, memory, {}, &prepared),
                                                   targets, BoolVector::Constant(3, false));
                       },
                       1e-5, 4) < 1e-4);
}

TEST_CASE("precision cast preserves values") {
  const Model<float> model(tiny(SystemKind::Deliberation, VisualMode::Obj), 11);
  const auto wide = model.cast<double>();
  CHECK(wide.parameter_count() == model.parameter_count());
  const auto narrow = wide.cast<float>();
  CHECK(narrow.export_tensors() == model.export_tensors());
}
