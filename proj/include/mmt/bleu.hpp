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

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmt {

inline constexpr int kBleuOrder = 4;

/// Clipped n-gram matches and candidate n-gram totals for one or more
/// sentence pairs; corpus BLEU is computed from summed statistics.
struct BleuStats {
  std::array<std::int64_t, kBleuOrder> matches{};
  std::array<std::int64_t, kBleuOrder> totals{};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < kBleuOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

struct BleuReport {
  double score = 0.0;  // 0..100
  std::array<double, kBleuOrder> precisions{};  // as used in the geometric mean
  double brevity_penalty = 0.0;
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;
};

template <typename Token>
BleuStats sentence_stats(const std::vector<Token>& hyp, const std::vector<Token>& ref) {
  BleuStats s;
  s.hyp_len = static_cast<std::int64_t>(hyp.size());
  s.ref_len = static_cast<std::int64_t>(ref.size());
  for (int n = 1; n <= kBleuOrder; ++n) {
    std::map<std::vector<Token>, int> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      ++ref_counts[std::vector<Token>(ref.begin() + i, ref.begin() + i + n)];
    }
    std::map<std::vector<Token>, int> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      ++hyp_counts[std::vector<Token>(hyp.begin() + i, hyp.begin() + i + n)];
    }
    for (const auto& [gram, count] : hyp_counts) {
      s.totals[n - 1] += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) s.matches[n - 1] += std::min(count, it->second);
    }
  }
  return s;
}

/// BLEU-4 from accumulated statistics. Orders 2-4 with zero matches use
/// add-one smoothing; zero unigram matches give 0.
BleuReport bleu_from_stats(const BleuStats& stats);

/// Case-sensitive corpus BLEU-4 over pre-tokenized sentences.
template <typename Token>
BleuReport bleu(const std::vector<std::vector<Token>>& hyps,
                const std::vector<std::vector<Token>>& refs) {
  if (hyps.size() != refs.size()) {
    throw std::invalid_argument("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                                std::to_string(refs.size()) + " references");
  }
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += sentence_stats(hyps[i], refs[i]);
  return bleu_from_stats(total);
}

using TokenizedCorpus = std::vector<std::vector<std::string>>;

/// Splits each line on whitespace.
TokenizedCorpus tokenize_lines(const std::vector<std::string>& lines);

/// Paired bootstrap resampling over sentences. Returns the fraction of
/// resampled corpora in which system `a`'s BLEU advantage over `b` (or the
/// reverse, whichever wins on the full corpus) disappears. Identical
/// systems, or a tie on the full corpus, give 1.0.
double paired_bootstrap(const TokenizedCorpus& hyp_a, const TokenizedCorpus& hyp_b,
                        const TokenizedCorpus& refs, int samples = 1000, std::uint64_t seed = 1);

}  // namespace mmt
