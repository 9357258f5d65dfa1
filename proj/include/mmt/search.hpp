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

#include <functional>
#include <string>
#include <vector>

namespace mmt {

/// A completed search path. `tokens` runs from BOS through EOS.
struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  double normalized_score = 0.0;
  // EOS was imposed by the length limit rather than preferred by the model.
  bool forced = false;

  /// Generated tokens, EOS included, BOS excluded.
  int length() const { return static_cast<int>(tokens.size()) - 1; }
};

/// Returns next-token log-probabilities (size = vocabulary) for a prefix
/// that starts with BOS.
using StepFunction = std::function<std::vector<double>(const std::vector<int>& prefix)>;

struct SearchOptions {
  int beam = 10;
  // Upper bound on generated tokens, EOS included.
  int max_len = 64;
  int bos = token::kBos;
  int eos = token::kEos;
  std::vector<int> banned = {token::kPad, token::kBos};
  // Divide log-probability by length when ranking completed hypotheses.
  bool length_normalize = true;
  // Receives a message when the beam is clamped.
  std::function<void(const std::string&)> warn;
};

enum class Ranking { NormalizedScore, LogProb };

/// Breadth-limited search. Each step keeps the `beam` best extensions by
/// log-probability; extensions ending in EOS leave the beam as completed
/// hypotheses. At the last permitted step only EOS may follow. Results are
/// ranked by `ranking`, best first.
std::vector<Hypothesis> beam_search(const StepFunction& step, int vocab_size,
                                    const SearchOptions& options,
                                    Ranking ranking = Ranking::NormalizedScore);

/// Argmax at each step, EOS forced at the length limit.
Hypothesis greedy_search(const StepFunction& step, int vocab_size, const SearchOptions& options);

}  // namespace mmt
