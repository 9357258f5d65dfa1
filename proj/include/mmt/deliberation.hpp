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

#include "mmt/training.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mmt {

/// Draft tokens (y1..yn EOS) with their first-pass memory rows.
template <typename Scalar>
struct DraftOutput {
  std::vector<int> tokens;
  Tensor<Scalar> memory;  // tokens.size() x (d_model + d_emb)
  double score = 0.0;
  bool forced = false;
};

/// Row i is hidden[i] followed by the unscaled embedding of tokens[i].
template <typename Scalar>
DraftOutput<Scalar> build_draft_memory(const Tensor<Scalar>& hidden, std::span<const int> tokens,
                                       const Tensor<Scalar>& embed_table) {
  if (hidden.rows() != static_cast<Index>(tokens.size())) {
    throw ShapeError("build_draft_memory: " + std::to_string(hidden.rows()) + " hidden rows for " +
                     std::to_string(tokens.size()) + " tokens");
  }
  DraftOutput<Scalar> out;
  out.tokens.assign(tokens.begin(), tokens.end());
  out.memory = concat_cols(hidden, embed_tokens(tokens, embed_table, false));
  return out;
}

/// Stored form of a draft: its score and ids, y1..yn EOS.
struct DraftRecord {
  double score = 0.0;
  std::vector<int> tokens;
  bool forced = false;

  bool operator==(const DraftRecord&) const = default;
};

/// Drafts for one sentence, best first.
using DraftSet = std::vector<DraftRecord>;

/// Re-runs the first pass over the draft prefix (without grad) to rebuild
/// its memory.
DraftOutput<float> regenerate_draft(const TrainModel& model, const EncoderMemory<float>& mem,
                                    const DraftRecord& draft);

/// Top-n beam hypotheses ranked by log-probability, duplicates removed.
DraftSet sample_drafts(const TrainModel& model, std::span<const int> src, const VisualFeatures* visual,
                       int beam = 10, int n = 10);

/// Second-pass greedy decode over a given draft; ids without BOS/EOS.
std::vector<int> refine(const TrainModel& model, std::span<const int> src, const VisualFeatures* visual,
                        const DraftRecord& draft);

/// Full two-pass translation: top beam draft, then second-pass greedy.
std::vector<int> deliberate(const TrainModel& model, std::span<const int> src,
                            const VisualFeatures* visual, int draft_beam = 10);

/// Per-line `index<TAB>score<TAB>ids[<TAB>score<TAB>ids...]`.
void write_draft_cache(const std::filesystem::path& path, const std::vector<DraftSet>& drafts);
std::vector<DraftSet> read_draft_cache(const std::filesystem::path& path);

/// New deliberation model whose encoder, embeddings and first-pass decoder
/// are copied from a text-only base model; the second pass is fresh.
TrainModel init_from_base(const TrainModel& base, const ModelConfig& config, std::uint64_t seed);

/// Joint training: each step draws one draft per example uniformly and
/// minimizes CE(second pass) + CE(first pass).
TrainReport train_deliberation(TrainModel& model, const Dataset& train,
                               const std::vector<DraftSet>& drafts, const Dataset& valid,
                               const TrainOptions& options);

/// Accuracy of second-pass teacher-forced predictions, using given drafts.
double second_pass_teacher_forced_accuracy(const TrainModel& model, const Dataset& data,
                                           const std::vector<DraftSet>& drafts);

/// Second-pass output BLEU with top-beam drafts.
double deliberation_bleu(const TrainModel& model, const Dataset& data, int draft_beam);

}  // namespace mmt
