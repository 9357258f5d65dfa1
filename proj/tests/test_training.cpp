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

#include "mmt/training.hpp"
#include "tasks.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numeric>

using namespace mmt;
using mmt::testing::copy_config;
using mmt::testing::copy_corpus;
using mmt::testing::copy_options;

TEST_CASE("batches are shifted, terminated and padded") {
  Dataset d = {{{5, 6, 7}, {8, 9}, {}}, {{5}, {8, 9, 10, 11}, {}}};
  const std::vector<std::size_t> idx = {0, 1};
  const Batch b = make_batch(d, idx);
  CHECK(b.size() == 2);
  CHECK(b.src[1] == std::vector<int>{5, 0, 0});
  CHECK(b.src_pad[1](1));
  CHECK_FALSE(b.src_pad[1](0));
  CHECK(b.tgt_in[0] == std::vector<int>{token::kBos, 8, 9, 0, 0});
  CHECK(b.tgt_out[0] == std::vector<int>{8, 9, token::kEos, 0, 0});
  CHECK(b.tgt_in[1] == std::vector<int>{token::kBos, 8, 9, 10, 11});
  CHECK(b.tgt_out[1] == std::vector<int>{8, 9, 10, 11, token::kEos});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(b.tgt_in[i].size() == b.tgt_out[i].size());
    for (std::size_t k = 0; k < b.tgt_out[i].size(); ++k) {
      CHECK(b.tgt_pad[i](static_cast<Index>(k)) == (b.tgt_out[i][k] == token::kPad));
    }
  }
  CHECK(b.target_tokens() == 8);
  CHECK(b.visual[0] == nullptr);
  CHECK_THROWS(make_batch(d, std::vector<std::size_t>{}));
}

TEST_CASE("early stopping waits for patience epochs") {
  EarlyStopping flat(10);
  int stopped_at = 0;
  for (int epoch = 1; epoch <= 30 && !stopped_at; ++epoch) {
    flat.update(10.0);
    if (flat.should_stop()) stopped_at = epoch;
  }
  CHECK(flat.best_epoch() == 1);
  CHECK(stopped_at == flat.best_epoch() + 10);

  EarlyStopping rising(2);
  CHECK(rising.update(1.0));
  CHECK_FALSE(rising.update(1.0));
  CHECK(rising.update(2.0));
  CHECK_FALSE(rising.update(0.5));
  CHECK_FALSE(rising.should_stop());
  CHECK_FALSE(rising.update(1.5));
  CHECK(rising.should_stop());
  CHECK(rising.best() == 2.0);
  CHECK(rising.best_epoch() == 3);
  CHECK_THROWS(EarlyStopping(0));
}

TEST_CASE("copy task overfits and the loss trends down") {
  const Dataset data = copy_corpus(50, 7);
  TrainModel model(copy_config(), 1);
  const auto report = train_base(model, data, {}, copy_options(2000));
  CHECK(report.steps <= 2000);
  CHECK(teacher_forced_accuracy(model, data) >= 0.99);
  CHECK(greedy_bleu(model, data) > 95.0);

  const auto& losses = report.step_losses;
  REQUIRE(losses.size() >= 400);
  auto window = [&](std::size_t start) {
    return std::accumulate(losses.begin() + static_cast<long>(start), losses.begin() + static_cast<long>(start + 100), 0.0) / 100.0;
  };
  double first = window(0);
  for (std::size_t s = 100; s + 100 <= losses.size(); s += 100) {
    CHECK(window(s) < first);
  }
  CHECK(window(losses.size() - 100) < 0.1 * first);
}

TEST_CASE("training is deterministic for a seed") {
  const Dataset data = copy_corpus(20, 3);
  ModelConfig c = copy_config();
  c.dropout = 0.1;
  TrainModel a(c, 5), b(c, 5);
  auto opts = copy_options(60);
  opts.seed = 9;
  train_base(a, data, {}, opts);
  train_base(b, data, {}, opts);
  CHECK(a.export_tensors() == b.export_tensors());
  TrainModel other(c, 5);
  opts.seed = 10;
  train_base(other, data, {}, opts);
  CHECK(other.export_tensors() != a.export_tensors());
}

TEST_CASE("validation restores the best epoch and logs key=value records") {
  const Dataset data = copy_corpus(20, 4);
  TrainModel model(copy_config(), 2);
  std::vector<std::string> lines;
  auto opts = copy_options(0);
  opts.max_epochs = 6;
  opts.patience = 2;
  opts.validate = true;
  opts.log = [&](const std::string& l) { lines.push_back(l); };
  const auto report = train_base(model, data, data, opts);
  REQUIRE_FALSE(report.validation_bleu.empty());
  CHECK(report.best_bleu == *std::max_element(report.validation_bleu.begin(), report.validation_bleu.end()));
  CHECK(greedy_bleu(model, data) == doctest::Approx(report.best_bleu).epsilon(1e-12));
  REQUIRE_FALSE(lines.empty());
  CHECK(lines.front().rfind("event=epoch stage=base epoch=1 ", 0) == 0);
  CHECK(lines.front().find(" valid_bleu=") != std::string::npos);
}

TEST_CASE("divergence aborts with a diagnostic") {
  const Dataset data = copy_corpus(10, 5);
  TrainModel model(copy_config(), 3);
  model.find_parameter("enc.0.ffn.w1")->value()(0, 0) = std::nanf("");
  try {
    train_base(model, data, {}, copy_options(5));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("non-finite loss at step 1") != std::string::npos);
  }
}

TEST_CASE("base training rejects deliberation models and empty data") {
  ModelConfig c = copy_config();
  c.system = SystemKind::Deliberation;
  TrainModel delib(c, 1);
  CHECK_THROWS(train_base(delib, copy_corpus(5, 1), {}, copy_options(5)));
  TrainModel base(copy_config(), 1);
  CHECK_THROWS(train_base(base, {}, {}, copy_options(5)));
}

TEST_CASE("beam translation returns ranked hypotheses") {
  const Dataset data = copy_corpus(5, 6);
  const TrainModel model(copy_config(), 4);
  const auto hyps = beam_translate(model, data[0].src, nullptr, 3);
  REQUIRE_FALSE(hyps.empty());
  for (std::size_t i = 0; i + 1 < hyps.size(); ++i) CHECK(hyps[i].normalized_score >= hyps[i + 1].normalized_score);
  const auto greedy = greedy_translate(model, data[0].src);
  const auto one = beam_translate(model, data[0].src, nullptr, 1);
  std::vector<int> stripped(one.front().tokens.begin() + 1, one.front().tokens.end() - 1);
  CHECK(stripped == greedy);
}
