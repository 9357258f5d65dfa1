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

#include "mmt/bleu.hpp"

#include "mmt/text_io.hpp"

#include <cmath>
#include <random>

namespace mmt {

BleuReport bleu_from_stats(const BleuStats& stats) {
  BleuReport r;
  r.hyp_len = stats.hyp_len;
  r.ref_len = stats.ref_len;
  if (stats.hyp_len == 0) return r;
  r.brevity_penalty = stats.hyp_len > stats.ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(stats.ref_len) /
                                               static_cast<double>(stats.hyp_len));
  if (stats.matches[0] == 0) {
    r.precisions[0] = 0.0;
    return r;
  }
  double log_sum = 0.0;
  for (int n = 0; n < kBleuOrder; ++n) {
    double p;
    if (n > 0 && stats.matches[n] == 0) {
      p = 1.0 / static_cast<double>(stats.totals[n] + 1);
    } else {
      p = static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
    }
    r.precisions[n] = p;
    log_sum += std::log(p);
  }
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / kBleuOrder);
  return r;
}

TokenizedCorpus tokenize_lines(const std::vector<std::string>& lines) {
  TokenizedCorpus out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(split_tokens(l));
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

double paired_bootstrap(const TokenizedCorpus& hyp_a, const TokenizedCorpus& hyp_b,
                        const TokenizedCorpus& refs, int samples, std::uint64_t seed) {
  if (hyp_a.size() != refs.size() || hyp_b.size() != refs.size()) {
    throw std::invalid_argument("paired_bootstrap: line counts differ");
  }
  if (refs.empty()) throw std::invalid_argument("paired_bootstrap: empty corpus");
  if (samples < 1) throw std::invalid_argument("paired_bootstrap: samples must be >= 1");
  if (hyp_a == hyp_b) return 1.0;

  const std::size_t n = refs.size();
  std::vector<BleuStats> sa(n), sb(n);
  BleuStats full_a, full_b;
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = sentence_stats(hyp_a[i], refs[i]);
    sb[i] = sentence_stats(hyp_b[i], refs[i]);
    full_a += sa[i];
    full_b += sb[i];
  }
  const double full_diff = bleu_from_stats(full_a).score - bleu_from_stats(full_b).score;
  if (full_diff == 0.0) return 1.0;
  const double sign = full_diff > 0 ? 1.0 : -1.0;

  int flips = 0;
  for (int s = 0; s < samples; ++s) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(s))));
    BleuStats a, b;
    for (std::size_t k = 0; k < n; ++k) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      const std::size_t i = std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
      a += sa[i];
      b += sb[i];
    }
    const double diff = bleu_from_stats(a).score - bleu_from_stats(b).score;
    if (diff * sign <= 0.0) ++flips;
  }
  return static_cast<double>(flips) / samples;
}

}  // namespace mmt
