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

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace mmt {

/// Surface form of the placeholder substituted for masked source words.
inline constexpr const char* kBlankToken = "BLANK";

/// Token <-> id map. Ids 0..4 are PAD, BOS, EOS, UNK and BLANK; corpus
/// tokens follow in order of descending frequency, ties broken
/// lexicographically.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(const std::vector<std::string>& lines, int min_freq);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int min_freq() const { return min_freq_; }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  /// UNK for unknown tokens.
  int id(const std::string& token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<int> encode_line(const std::string& line) const;
  /// Stops at EOS; drops PAD and BOS.
  std::vector<std::string> decode(std::span<const int> ids) const;

  static bool is_reserved(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int min_freq_ = 1;
};

struct Bitext {
  std::vector<std::string> source;
  std::vector<std::string> target;

  std::size_t size() const { return source.size(); }
  /// Two parallel one-sentence-per-line files.
  static Bitext load(const std::filesystem::path& src, const std::filesystem::path& tgt);
};

/// Content-word lexicon standing in for a POS tagger.
class PosLexicon {
 public:
  PosLexicon() = default;
  /// Lines of `word<TAB>TAG[,TAG...]`.
  static PosLexicon load(const std::filesystem::path& path);

  void add(const std::string& word, const std::set<std::string>& tags);
  /// Case-folded lookup; unknown words have no tags.
  const std::set<std::string>* tags(const std::string& word) const;
  /// True when the word carries NOUN, VERB, ADJ or ADV.
  bool is_content(const std::string& word) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, std::set<std::string>> entries_;
};

/// One word per line, case-folded.
std::unordered_set<std::string> load_word_list(const std::filesystem::path& path);

/// Person-word list extended with the gender-marked pronouns he, she, her, his.
std::unordered_set<std::string> with_gendered_pronouns(std::unordered_set<std::string> persons);

enum class DegradeStrategy { Rnd, Amb, Pers };
std::string to_string(DegradeStrategy s);
DegradeStrategy parse_strategy(const std::string& text);

struct DegradationResources {
  const PosLexicon* lexicon = nullptr;        // RND
  std::unordered_set<std::string> words;      // AMB: ambiguous words, PERS: person words
};

struct DegradedSentence {
  std::vector<std::string> tokens;
  std::vector<int> masked_positions;
  std::vector<std::string> originals;
  DegradeStrategy strategy = DegradeStrategy::Rnd;
};

/// RND masks each content word independently with probability `rate`
/// under a generator seeded with `seed`. AMB and PERS mask every listed
/// word (case-insensitive) and ignore rate and seed.
DegradedSentence degrade(const std::vector<std::string>& sentence, DegradeStrategy strategy,
                         const DegradationResources& resources, double rate, std::uint64_t seed);

struct DegradationStats {
  std::size_t sentences = 0;
  std::size_t sentences_with_blank = 0;
  std::size_t blanks = 0;
  // Share of sentences with at least one blank, in percent.
  double percent_with_blank = 0.0;
  // Mean blanks over sentences that have at least one; 0 when none do.
  double avg_blanks = 0.0;
};

DegradationStats degradation_stats(const std::vector<DegradedSentence>& corpus);

struct DegradedCorpus {
  std::vector<DegradedSentence> sentences;
  DegradationStats stats;

  std::vector<std::string> lines() const;
  /// `line<TAB>position<TAB>original` per blank, 0-based.
  std::vector<std::string> audit_lines() const;
};

/// Line i uses seed ^ i.
DegradedCorpus degrade_corpus(const std::vector<std::string>& lines, DegradeStrategy strategy,
                              const DegradationResources& resources, double rate, std::uint64_t seed);

/// Lexical translation table t(target | source) from IBM Model 1 EM.
using TranslationTable = std::map<std::string, std::map<std::string, double>>;

/// Source words are case-folded; 5 EM iterations by default.
TranslationTable ibm1_translation_table(const Bitext& bitext, int iterations = 5);

/// Source words seen at least `min_count` times with two or more target
/// words at t(f|e) >= min_ratio. Sorted.
std::vector<std::string> extract_ambiguous(const Bitext& bitext, int min_count = 10,
                                           double min_ratio = 0.2);

}  // namespace mmt
