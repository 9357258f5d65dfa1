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

#include "mmt/training.hpp"

#include "mmt/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace mmt {

std::size_t Batch::target_tokens() const {
  std::size_t n = 0;
  for (const auto& pad : tgt_pad) n += static_cast<std::size_t>((!pad.array()).count());
  return n;
}

std::vector<int> shifted_input(std::span<const int> tgt) {
  std::vector<int> out{token::kBos};
  out.insert(out.end(), tgt.begin(), tgt.end());
  return out;
}

std::vector<int> terminated_output(std::span<const int> tgt) {
  std::vector<int> out(tgt.begin(), tgt.end());
  out.push_back(token::kEos);
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no examples");
  std::size_t src_len = 0, tgt_len = 0;
  for (auto i : indices) {
    src_len = std::max(src_len, data.at(i).src.size());
    tgt_len = std::max(tgt_len, data.at(i).tgt.size() + 1);
  }
  Batch b;
  for (auto i : indices) {
    const Example& ex = data[i];
    auto src = ex.src;
    src.resize(src_len, token::kPad);
    auto in = shifted_input(ex.tgt);
    auto out = terminated_output(ex.tgt);
    in.resize(tgt_len, token::kPad);
    out.resize(tgt_len, token::kPad);
    BoolVector src_pad = pad_mask_of<float>(src);
    BoolVector tgt_pad = pad_mask_of<float>(out);
    b.src.push_back(std::move(src));
    b.src_pad.push_back(std::move(src_pad));
    b.tgt_in.push_back(std::move(in));
    b.tgt_out.push_back(std::move(out));
    b.tgt_pad.push_back(std::move(tgt_pad));
    b.visual.push_back(ex.visual ? &*ex.visual : nullptr);
  }
  return b;
}

bool EarlyStopping::update(double score) {
  ++epochs_;
  if (epochs_ == 1 || score > best_) {
    best_ = score;
    best_epoch_ = epochs_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

// ---------------------------------------------------------------------------

namespace {

SearchOptions decode_options(const TrainModel& model, int beam) {
  SearchOptions o;
  o.beam = beam;
  o.max_len = model.config().max_len;
  return o;
}

std::vector<double> log_probs_of_last_row(const Tensor<float>& logits) {
  const auto last = logits.value().row(logits.rows() - 1).cast<double>();
  const double m = last.maxCoeff();
  const double lse = m + std::log((last.array() - m).exp().sum());
  std::vector<double> out(static_cast<std::size_t>(last.size()));
  for (Index i = 0; i < last.size(); ++i) out[static_cast<std::size_t>(i)] = last(i) - lse;
  return out;
}

StepFunction first_pass_step(const TrainModel& model, const EncoderMemory<float>& mem,
                             const PreparedVisual<float>& visual) {
  return [&model, &mem, &visual](const std::vector<int>& prefix) {
    return log_probs_of_last_row(model.decode(prefix, mem, RunContext::eval(), &visual).logits);
  };
}

std::vector<int> strip_markers(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (int t : tokens) {
    if (t == token::kBos) continue;
    if (t == token::kEos) break;
    out.push_back(t);
  }
  return out;
}

}  // namespace

std::vector<int> greedy_translate(const TrainModel& model, std::span<const int> src,
                                  const VisualFeatures* visual) {
  NoGradGuard no_grad;
  const auto mem = model.encode(src);
  const auto prepared = model.prepare_visual(visual);
  const auto h = greedy_search(first_pass_step(model, mem, prepared), model.config().tgt_vocab,
                               decode_options(model, 1));
  return strip_markers(h.tokens);
}

std::vector<Hypothesis> beam_translate(const TrainModel& model, std::span<const int> src,
                                       const VisualFeatures* visual, int beam, Ranking ranking) {
  NoGradGuard no_grad;
  const auto mem = model.encode(src);
  const auto prepared = model.prepare_visual(visual);
  return beam_search(first_pass_step(model, mem, prepared), model.config().tgt_vocab,
                     decode_options(model, beam), ranking);
}

double teacher_forced_accuracy(const TrainModel& model, const Dataset& data) {
  NoGradGuard no_grad;
  std::size_t correct = 0, total = 0;
  for (const auto& ex : data) {
    const auto mem = model.encode(ex.src);
    const auto prepared = model.prepare_visual(ex.visual ? &*ex.visual : nullptr);
    const auto in = shifted_input(ex.tgt);
    const auto out = terminated_output(ex.tgt);
    const auto logits = model.decode(in, mem, RunContext::eval(), &prepared).logits.value();
    for (Index r = 0; r < logits.rows(); ++r) {
      Index arg;
      logits.row(r).maxCoeff(&arg);
      correct += static_cast<int>(arg) == out[static_cast<std::size_t>(r)];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double greedy_bleu(const TrainModel& model, const Dataset& data) {
  std::vector<std::vector<int>> hyps, refs;
  for (const auto& ex : data) {
    hyps.push_back(greedy_translate(model, ex.src, ex.visual ? &*ex.visual : nullptr));
    refs.push_back(ex.tgt);
  }
  return bleu(hyps, refs).score;
}

namespace detail {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

TrainReport run_training(TrainModel& model, const Dataset& train, const TrainOptions& options,
                         const std::function<Tensor<float>(const Example&, std::size_t,
                                                           const RunContext&)>& example_loss,
                         const std::function<double()>& evaluate, const char* label) {
  if (train.empty()) throw std::invalid_argument(std::string(label) + ": empty training set");
  if (options.batch_size < 1) throw std::invalid_argument(std::string(label) + ": batch_size must be >= 1");
  auto log = [&](const std::string& line) {
    if (options.log) options.log(line);
  };

  std::mt19937_64 shuffle_rng(options.seed);
  std::mt19937_64 dropout_rng(options.seed ^ 0x5DEECE66Dull);
  RunContext ctx{true, model.config().dropout, &dropout_rng};
  AdamState<float> adam;
  EarlyStopping stopper(options.patience);
  TrainReport report;
  std::map<std::string, Matrix<float>> best;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  bool out_of_steps = false;
  for (int epoch = 1; epoch <= options.max_epochs && !out_of_steps; ++epoch) {
    // Fisher-Yates with the portable uniform, so order is stable across
    // standard library implementations.
    for (std::size_t i = order.size(); i > 1; --i) {
      const double u = static_cast<double>(shuffle_rng() >> 11) * 0x1.0p-53;
      std::swap(order[i - 1], order[static_cast<std::size_t>(u * static_cast<double>(i))]);
    }
    double epoch_loss = 0.0;
    std::int64_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      if (options.max_steps > 0 && report.steps >= options.max_steps) {
        out_of_steps = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      std::size_t tokens = 0;
      for (std::size_t k = start; k < end; ++k) tokens += train[order[k]].tgt.size() + 1;

      zero_grad(model.parameters());
      Tensor<float> loss;
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = train[order[k]];
        const float weight = static_cast<float>(ex.tgt.size() + 1) / static_cast<float>(tokens);
        Tensor<float> term = scale(example_loss(ex, order[k], ctx), weight);
        loss = k == start ? term : loss + term;
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError(std::string(label) + ": non-finite loss at step " +
                              std::to_string(report.steps + 1) + " (epoch " + std::to_string(epoch) +
                              "); lower lr_base or raise warmup");
      }
      backward(loss);
      ++report.steps;
      const double lr = lr_schedule(report.steps, options.lr_base, options.warmup, model.config().d_model);
      adam_step(model.parameters(), adam, lr);
      report.step_losses.push_back(value);
      epoch_loss += value;
      ++epoch_steps;
    }
    if (epoch_steps == 0) break;
    report.epochs = epoch;

    std::string line = std::string("event=epoch stage=") + label + " epoch=" + std::to_string(epoch) +
                       " steps=" + std::to_string(report.steps) +
                       " loss=" + format_double(epoch_loss / static_cast<double>(epoch_steps));
    if (options.validate && evaluate) {
      const double score = evaluate();
      report.validation_bleu.push_back(score);
      if (stopper.update(score)) best = model.export_tensors();
      line += " valid_bleu=" + format_double(score) + " best_bleu=" + format_double(stopper.best());
      log(line);
      if (stopper.should_stop()) {
        log(std::string("event=early_stop stage=") + label + " epoch=" + std::to_string(epoch) +
            " best_epoch=" + std::to_string(stopper.best_epoch()));
        break;
      }
    } else {
      log(line);
    }
  }

  if (!best.empty()) {
    model.import_tensors(best);
    report.best_epoch = stopper.best_epoch();
    report.best_bleu = stopper.best();
  } else {
    report.best_epoch = report.epochs;
  }
  return report;
}

}  // namespace detail

TrainReport train_base(TrainModel& model, const Dataset& train, const Dataset& valid,
                       const TrainOptions& options) {
  if (model.is_deliberation()) throw std::invalid_argument("train_base: model has a second-pass decoder");
  TrainOptions opts = options;
  if (valid.empty()) opts.validate = false;
  auto loss = [&model](const Example& ex, std::size_t, const RunContext& ctx) {
    const auto mem = model.encode(ex.src, pad_mask_of<float>(ex.src), ctx);
    const auto prepared = model.prepare_visual(ex.visual ? &*ex.visual : nullptr);
    const auto in = shifted_input(ex.tgt);
    const auto out = terminated_output(ex.tgt);
    const auto logits = model.decode(in, mem, ctx, &prepared).logits;
    return cross_entropy_loss(logits, out, pad_mask_of<float>(out));
  };
  auto evaluate = [&model, &valid]() { return greedy_bleu(model, valid); };
  return detail::run_training(model, train, opts, loss, evaluate, "base");
}

}  // namespace mmt
