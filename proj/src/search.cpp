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

#include "mmt/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmt {
namespace {

struct Candidate {
  std::size_t parent;
  int token;
  double log_prob;
};

bool banned(const SearchOptions& o, int tok) {
  return std::find(o.banned.begin(), o.banned.end(), tok) != o.banned.end();
}

void check_step(const std::vector<double>& lp, int vocab_size) {
  if (static_cast<int>(lp.size()) != vocab_size) {
    throw std::runtime_error("search: step function returned " + std::to_string(lp.size()) +
                             " scores for a vocabulary of " + std::to_string(vocab_size));
  }
}

int argmax_token(const std::vector<double>& lp, const SearchOptions& o) {
  int best = -1;
  for (int t = 0; t < static_cast<int>(lp.size()); ++t) {
    if (banned(o, t)) continue;
    if (best < 0 || lp[static_cast<std::size_t>(t)] > lp[static_cast<std::size_t>(best)]) best = t;
  }
  return best;
}

Hypothesis finish(std::vector<int> tokens, double log_prob, bool forced, const SearchOptions& o) {
  Hypothesis h;
  h.tokens = std::move(tokens);
  h.log_prob = log_prob;
  h.forced = forced;
  h.normalized_score = o.length_normalize ? log_prob / static_cast<double>(h.length()) : log_prob;
  return h;
}

// Number of distinct unfinished prefixes the search tree can hold, saturating.
double tree_width(int emitting, int max_len) {
  return std::pow(static_cast<double>(emitting), static_cast<double>(std::max(0, max_len - 1)));
}

}  // namespace

std::vector<Hypothesis> beam_search(const StepFunction& step, int vocab_size,
                                    const SearchOptions& options, Ranking ranking) {
  if (options.beam < 1) throw std::invalid_argument("beam_search: beam must be >= 1");
  if (options.max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");
  if (options.eos < 0 || options.eos >= vocab_size || banned(options, options.eos)) {
    throw std::invalid_argument("beam_search: EOS id must be an allowed vocabulary entry");
  }
  int emitting = 0;
  for (int t = 0; t < vocab_size; ++t) {
    if (!banned(options, t) && t != options.eos) ++emitting;
  }
  std::size_t beam = static_cast<std::size_t>(options.beam);
  const double width = std::max(1.0, tree_width(emitting, options.max_len) * (emitting + 1));
  if (static_cast<double>(beam) > width) {
    beam = static_cast<std::size_t>(width);
    if (options.warn) {
      options.warn("beam " + std::to_string(options.beam) + " exceeds the " +
                   std::to_string(beam) + " expansions this vocabulary and length allow; clamped");
    }
  }

  struct Live {
    std::vector<int> tokens;
    double log_prob;
  };
  std::vector<Live> live{{{options.bos}, 0.0}};
  std::vector<Hypothesis> finished;

  for (int t = 1; t <= options.max_len && !live.empty(); ++t) {
    const bool last = t == options.max_len;
    std::vector<Candidate> cands;
    std::vector<bool> eos_preferred(live.size(), false);
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto lp = step(live[i].tokens);
      check_step(lp, vocab_size);
      if (last) {
        eos_preferred[i] = argmax_token(lp, options) == options.eos;
        cands.push_back({i, options.eos, live[i].log_prob + lp[static_cast<std::size_t>(options.eos)]});
        continue;
      }
      for (int tok = 0; tok < vocab_size; ++tok) {
        if (banned(options, tok)) continue;
        const double s = lp[static_cast<std::size_t>(tok)];
        if (s == -std::numeric_limits<double>::infinity()) continue;
        cands.push_back({i, tok, live[i].log_prob + s});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.log_prob > b.log_prob;
    });
    if (cands.size() > beam) cands.resize(beam);

    std::vector<Live> next;
    for (const auto& c : cands) {
      std::vector<int> tokens = live[c.parent].tokens;
      tokens.push_back(c.token);
      if (c.token == options.eos) {
        finished.push_back(finish(std::move(tokens), c.log_prob, last && !eos_preferred[c.parent], options));
      } else {
        next.push_back({std::move(tokens), c.log_prob});
      }
    }
    live = std::move(next);
  }

  std::stable_sort(finished.begin(), finished.end(), [ranking](const Hypothesis& a, const Hypothesis& b) {
    if (ranking == Ranking::LogProb) return a.log_prob > b.log_prob;
    if (a.normalized_score != b.normalized_score) return a.normalized_score > b.normalized_score;
    return a.log_prob > b.log_prob;
  });
  return finished;
}

Hypothesis greedy_search(const StepFunction& step, int vocab_size, const SearchOptions& options) {
  if (options.max_len < 1) throw std::invalid_argument("greedy_search: max_len must be >= 1");
  std::vector<int> tokens{options.bos};
  double log_prob = 0.0;
  for (int t = 1; t <= options.max_len; ++t) {
    const auto lp = step(tokens);
    check_step(lp, vocab_size);
    int tok = argmax_token(lp, options);
    bool forced = false;
    if (t == options.max_len && tok != options.eos) {
      tok = options.eos;
      forced = true;
    }
    tokens.push_back(tok);
    log_prob += lp[static_cast<std::size_t>(tok)];
    if (tok == options.eos) return finish(std::move(tokens), log_prob, forced, options);
  }
  return finish(std::move(tokens), log_prob, true, options);
}

}  // namespace mmt
