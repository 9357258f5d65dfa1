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

#include "mmt/model.hpp"
#include "mmt/search.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmt {

using TrainModel = Model<float>;

/// One sentence pair. Target ids carry neither BOS nor EOS.
struct Example {
  std::vector<int> src;
  std::vector<int> tgt;
  std::optional<VisualFeatures> visual;
};

using Dataset = std::vector<Example>;

/// Padded rows for a group of examples. Target input is BOS-shifted and
/// target output EOS-terminated, so both have the same length.
struct Batch {
  std::vector<std::vector<int>> src;
  std::vector<BoolVector> src_pad;
  std::vector<std::vector<int>> tgt_in;
  std::vector<std::vector<int>> tgt_out;
  std::vector<BoolVector> tgt_pad;
  std::vector<const VisualFeatures*> visual;

  std::size_t size() const { return src.size(); }
  /// Number of non-pad target positions.
  std::size_t target_tokens() const;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// BOS y1..yn and y1..yn EOS.
std::vector<int> shifted_input(std::span<const int> tgt);
std::vector<int> terminated_output(std::span<const int> tgt);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stops after `patience` consecutive epochs without a strict improvement
/// of the best score.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw std::invalid_argument("EarlyStopping: patience must be >= 1");
  }

  /// Records one epoch's score; returns true if it is a new best.
  bool update(double score);
  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs() const { return epochs_; }

 private:
  int patience_;
  int epochs_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_ = -1.0;
};

using LogFn = std::function<void(const std::string&)>;

struct TrainOptions {
  double lr_base = 0.05;
  std::int64_t warmup = 8000;
  int batch_size = 32;
  int max_epochs = 100;
  std::int64_t max_steps = 0;  // 0 means unlimited
  int patience = 10;
  std::uint64_t seed = 1;
  // Validation BLEU each epoch; without validation data the final weights are kept.
  bool validate = true;
  int validation_beam = 10;  // deliberation drafts at validation time
  LogFn log;
};

struct TrainReport {
  std::int64_t steps = 0;
  int epochs = 0;
  int best_epoch = 0;
  double best_bleu = 0.0;
  std::vector<double> validation_bleu;
  std::vector<double> step_losses;
};

/// Greedy first-pass translation; returns target ids without BOS/EOS.
std::vector<int> greedy_translate(const TrainModel& model, std::span<const int> src,
                                  const VisualFeatures* visual = nullptr);

/// Beam search over the first-pass decoder.
std::vector<Hypothesis> beam_translate(const TrainModel& model, std::span<const int> src,
                                       const VisualFeatures* visual, int beam,
                                       Ranking ranking = Ranking::NormalizedScore);

/// Fraction of target tokens (EOS included) predicted correctly under
/// teacher forcing by the first pass.
double teacher_forced_accuracy(const TrainModel& model, const Dataset& data);

/// Corpus BLEU of greedy first-pass output against the targets.
double greedy_bleu(const TrainModel& model, const Dataset& data);

/// Adam with the warmup schedule over shuffled batches. After each epoch
/// the validation set is decoded greedily; training stops once `patience`
/// epochs pass without a new best BLEU and the best weights are restored.
TrainReport train_base(TrainModel& model, const Dataset& train, const Dataset& valid,
                       const TrainOptions& options);

namespace detail {

/// Shared loop: `step_loss` builds the loss for one example; `evaluate`
/// scores the model after each epoch.
TrainReport run_training(TrainModel& model, const Dataset& train, const TrainOptions& options,
                         const std::function<Tensor<float>(const Example&, std::size_t index,
                                                           const RunContext&)>& example_loss,
                         const std::function<double()>& evaluate, const char* label);

std::string format_double(double v);

}  // namespace detail

}  // namespace mmt
