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

#include "mmt/deliberation.hpp"

#include "mmt/bleu.hpp"
#include "mmt/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

namespace mmt {
namespace {

std::vector<int> draft_prefix(const DraftRecord& draft) {
  if (draft.tokens.empty()) throw std::invalid_argument("draft has no tokens");
  std::vector<int> prefix{token::kBos};
  prefix.insert(prefix.end(), draft.tokens.begin(), draft.tokens.end() - 1);
  return prefix;
}

std::vector<double> last_row_log_probs(const Tensor<float>& logits) {
  const auto last = logits.value().row(logits.rows() - 1).cast<double>();
  const double m = last.maxCoeff();
  const double lse = m + std::log((last.array() - m).exp().sum());
  std::vector<double> out(static_cast<std::size_t>(last.size()));
  for (Index i = 0; i < last.size(); ++i) out[static_cast<std::size_t>(i)] = last(i) - lse;
  return out;
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

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<int> parse_ids(const std::string& field, const std::filesystem::path& path, std::size_t lineno) {
  std::vector<int> ids;
  for (const auto& tok : split_tokens(field)) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || v < 0) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad token id '" + tok + "'");
    }
    ids.push_back(v);
  }
  return ids;
}

}  // namespace

DraftOutput<float> regenerate_draft(const TrainModel& model, const EncoderMemory<float>& mem,
                                    const DraftRecord& draft) {
  NoGradGuard no_grad;
  const auto prefix = draft_prefix(draft);
  const auto hidden = model.decode(prefix, mem, RunContext::eval()).hidden;
  auto out = build_draft_memory(hidden, draft.tokens, model.target_embedding);
  out.score = draft.score;
  out.forced = draft.forced;
  return out;
}

DraftSet sample_drafts(const TrainModel& model, std::span<const int> src, const VisualFeatures* visual,
                       int beam, int n) {
  if (n < 1 || n > beam) throw std::invalid_argument("sample_drafts: need 1 <= n <= beam");
  const auto hyps = beam_translate(model, src, visual, beam, Ranking::LogProb);
  DraftSet out;
  std::set<std::vector<int>> seen;
  for (const auto& h : hyps) {
    if (static_cast<int>(out.size()) == n) break;
    std::vector<int> tokens(h.tokens.begin() + 1, h.tokens.end());
    if (!seen.insert(tokens).second) continue;
    out.push_back({h.log_prob, std::move(tokens), h.forced});
  }
  return out;
}

std::vector<int> refine(const TrainModel& model, std::span<const int> src, const VisualFeatures* visual,
                        const DraftRecord& draft) {
  NoGradGuard no_grad;
  const auto mem = model.encode(src);
  const auto prepared = model.prepare_visual(visual);
  const auto d = regenerate_draft(model, mem, draft);
  SearchOptions o;
  o.beam = 1;
  o.max_len = model.config().max_len;
  const StepFunction step = [&](const std::vector<int>& prefix) {
    return last_row_log_probs(model.second_pass_decode(prefix, mem, d.memory, RunContext::eval(), &prepared));
  };
  return strip_markers(greedy_search(step, model.config().tgt_vocab, o).tokens);
}

std::vector<int> deliberate(const TrainModel& model, std::span<const int> src,
                            const VisualFeatures* visual, int draft_beam) {
  const auto drafts = sample_drafts(model, src, visual, draft_beam, 1);
  if (drafts.empty()) throw std::runtime_error("deliberate: first pass produced no draft");
  return refine(model, src, visual, drafts.front());
}

void write_draft_cache(const std::filesystem::path& path, const std::vector<DraftSet>& drafts) {
  std::vector<std::string> lines;
  lines.reserve(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    std::string line = std::to_string(i);
    for (const auto& d : drafts[i]) {
      line += "\t" + format_score(d.score) + "\t";
      for (std::size_t k = 0; k < d.tokens.size(); ++k) {
        if (k) line += ' ';
        line += std::to_string(d.tokens[k]);
      }
    }
    lines.push_back(std::move(line));
  }
  write_lines(path, lines);
}

std::vector<DraftSet> read_draft_cache(const std::filesystem::path& path) {
  std::vector<DraftSet> out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields[0] != std::to_string(out.size())) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected sentence index " +
                               std::to_string(out.size()) + ", found '" + fields[0] + "'");
    }
    if (fields.size() % 2 != 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": unpaired score/ids field");
    }
    DraftSet set;
    for (std::size_t k = 1; k < fields.size(); k += 2) {
      DraftRecord r;
      try {
        r.score = std::stod(fields[k]);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad score '" + fields[k] + "'");
      }
      r.tokens = parse_ids(fields[k + 1], path, lineno);
      if (r.tokens.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": empty draft");
      set.push_back(std::move(r));
    }
    out.push_back(std::move(set));
  }
  return out;
}

TrainModel init_from_base(const TrainModel& base, const ModelConfig& config, std::uint64_t seed) {
  if (base.is_deliberation()) throw std::invalid_argument("init_from_base: source model already has a second pass");
  if (base.config().visual != VisualMode::None) {
    throw std::invalid_argument("init_from_base: base model must be text-only");
  }
  if (config.system != SystemKind::Deliberation) {
    throw ConfigError("system", "init_from_base needs a deliberation config");
  }
  // Fields owned by the second pass may differ from the base run.
  ModelConfig aligned = config;
  aligned.system = base.config().system;
  aligned.visual = base.config().visual;
  aligned.visual_width = base.config().visual_width;
  aligned.delib_layers = base.config().delib_layers;
  aligned.dropout = base.config().dropout;
  const auto diffs = config_differences(base.config(), aligned);
  if (!diffs.empty()) {
    std::string keys;
    for (const auto& d : diffs) keys += (keys.empty() ? "" : ",") + d;
    throw ConfigError(keys, "base checkpoint config differs in: " + keys);
  }
  TrainModel model(config, seed);
  model.import_tensors(base.export_tensors(), true);
  return model;
}

TrainReport train_deliberation(TrainModel& model, const Dataset& train,
                               const std::vector<DraftSet>& drafts, const Dataset& valid,
                               const TrainOptions& options) {
  if (!model.is_deliberation()) throw std::invalid_argument("train_deliberation: model has no second pass");
  if (drafts.size() != train.size()) {
    throw std::invalid_argument("train_deliberation: " + std::to_string(drafts.size()) + " draft sets for " +
                                std::to_string(train.size()) + " training pairs");
  }
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    if (drafts[i].empty()) throw std::invalid_argument("train_deliberation: no drafts for pair " + std::to_string(i));
  }
  TrainOptions opts = options;
  if (valid.empty()) opts.validate = false;
  std::mt19937_64 draft_rng(options.seed ^ 0xD2AF7ull);

  auto loss = [&](const Example& ex, std::size_t index, const RunContext& ctx) {
    const DraftSet& set = drafts[index];
    const double u = static_cast<double>(draft_rng() >> 11) * 0x1.0p-53;
    const auto& draft = set[std::min(set.size() - 1, static_cast<std::size_t>(u * static_cast<double>(set.size())))];
    DraftOutput<float> d;
    {
      NoGradGuard no_grad;
      d = regenerate_draft(model, model.encode(ex.src), draft);
    }
    const auto mem = model.encode(ex.src, pad_mask_of<float>(ex.src), ctx);
    const auto prepared = model.prepare_visual(ex.visual ? &*ex.visual : nullptr);
    const auto in = shifted_input(ex.tgt);
    const auto out = terminated_output(ex.tgt);
    const BoolVector pad = pad_mask_of<float>(out);
    const auto first = model.decode(in, mem, ctx).logits;
    const auto second = model.second_pass_decode(in, mem, d.memory, ctx, &prepared);
    return cross_entropy_loss(second, out, pad) + cross_entropy_loss(first, out, pad);
  };
  auto evaluate = [&]() { return deliberation_bleu(model, valid, opts.validation_beam); };
  return detail::run_training(model, train, opts, loss, evaluate, "delib");
}

double second_pass_teacher_forced_accuracy(const TrainModel& model, const Dataset& data,
                                           const std::vector<DraftSet>& drafts) {
  if (drafts.size() != data.size()) throw std::invalid_argument("second_pass_teacher_forced_accuracy: size mismatch");
  NoGradGuard no_grad;
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data[i];
    const auto mem = model.encode(ex.src);
    const auto prepared = model.prepare_visual(ex.visual ? &*ex.visual : nullptr);
    const auto d = regenerate_draft(model, mem, drafts[i].at(0));
    const auto in = shifted_input(ex.tgt);
    const auto out = terminated_output(ex.tgt);
    const auto logits = model.second_pass_decode(in, mem, d.memory, RunContext::eval(), &prepared).value();
    for (Index r = 0; r < logits.rows(); ++r) {
      Index arg;
      logits.row(r).maxCoeff(&arg);
      correct += static_cast<int>(arg) == out[static_cast<std::size_t>(r)];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double deliberation_bleu(const TrainModel& model, const Dataset& data, int draft_beam) {
  std::vector<std::vector<int>> hyps, refs;
  for (const auto& ex : data) {
    hyps.push_back(deliberate(model, ex.src, ex.visual ? &*ex.visual : nullptr, draft_beam));
    refs.push_back(ex.tgt);
  }
  return bleu(hyps, refs).score;
}

}  // namespace mmt
