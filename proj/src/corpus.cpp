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

#include "mmt/corpus.hpp"

#include "mmt/text_io.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mmt {
namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r = {"<pad>", "<s>", "</s>", "<unk>", kBlankToken};
  return r;
}

constexpr const char* kMinFreqHeader = "#min_freq=";

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : reserved_tokens()) {
    ids_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }
}

bool Vocabulary::is_reserved(const std::string& token) {
  const auto& r = reserved_tokens();
  return std::find(r.begin(), r.end(), token) != r.end();
}

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, int min_freq) {
  if (lines.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::unordered_map<std::string, long> counts;
  for (const auto& line : lines) {
    for (auto& tok : split_tokens(line)) {
      if (!is_reserved(tok)) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, long>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  v.min_freq_ = min_freq;
  for (const auto& [tok, count] : entries) {
    if (count < min_freq) continue;
    v.ids_.emplace(tok, v.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  Vocabulary v;
  std::size_t start = 0;
  if (!lines.empty() && lines[0].rfind(kMinFreqHeader, 0) == 0) {
    v.min_freq_ = std::stoi(lines[0].substr(std::string(kMinFreqHeader).size()));
    start = 1;
  }
  const auto& reserved = reserved_tokens();
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (start + i >= lines.size() || lines[start + i] != reserved[i]) {
      throw std::runtime_error(path.string() + ": vocabulary must begin with the reserved tokens");
    }
  }
  for (std::size_t i = start + reserved.size(); i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    if (!v.ids_.emplace(lines[i], v.size()).second) {
      throw std::runtime_error(path.string() + ": duplicate token '" + lines[i] + "'");
    }
    v.tokens_.push_back(lines[i]);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::vector<std::string> lines;
  lines.push_back(kMinFreqHeader + std::to_string(min_freq_));
  lines.insert(lines.end(), tokens_.begin(), tokens_.end());
  write_lines(path, lines);
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? token::kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("vocabulary id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<int> Vocabulary::encode_line(const std::string& line) const {
  return encode(split_tokens(line));
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int i : ids) {
    if (i == token::kEos) break;
    if (i == token::kPad || i == token::kBos) continue;
    out.push_back(token(i));
  }
  return out;
}

Bitext Bitext::load(const std::filesystem::path& src, const std::filesystem::path& tgt) {
  Bitext b{read_lines(src), read_lines(tgt)};
  if (b.source.size() != b.target.size()) {
    throw std::runtime_error("bitext line counts differ: " + src.string() + " has " +
                             std::to_string(b.source.size()) + ", " + tgt.string() + " has " +
                             std::to_string(b.target.size()));
  }
  return b;
}

// ---------------------------------------------------------------------------

PosLexicon PosLexicon::load(const std::filesystem::path& path) {
  PosLexicon lex;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected word<TAB>TAG[,TAG...]");
    }
    std::set<std::string> tags;
    std::stringstream ss(line.substr(tab + 1));
    std::string tag;
    while (std::getline(ss, tag, ',')) {
      if (!tag.empty()) tags.insert(tag);
    }
    lex.add(line.substr(0, tab), tags);
  }
  return lex;
}

void PosLexicon::add(const std::string& word, const std::set<std::string>& tags) {
  auto& entry = entries_[to_lower(word)];
  entry.insert(tags.begin(), tags.end());
}

const std::set<std::string>* PosLexicon::tags(const std::string& word) const {
  auto it = entries_.find(to_lower(word));
  return it == entries_.end() ? nullptr : &it->second;
}

bool PosLexicon::is_content(const std::string& word) const {
  const auto* t = tags(word);
  if (!t) return false;
  for (const char* c : {"NOUN", "VERB", "ADJ", "ADV"}) {
    if (t->count(c)) return true;
  }
  return false;
}

std::unordered_set<std::string> load_word_list(const std::filesystem::path& path) {
  std::unordered_set<std::string> out;
  for (const auto& line : read_lines(path)) {
    for (const auto& w : split_tokens(line)) out.insert(to_lower(w));
  }
  return out;
}

std::unordered_set<std::string> with_gendered_pronouns(std::unordered_set<std::string> persons) {
  for (const char* p : {"he", "she", "her", "his"}) persons.insert(p);
  return persons;
}

std::string to_string(DegradeStrategy s) {
  switch (s) {
    case DegradeStrategy::Rnd: return "RND";
    case DegradeStrategy::Amb: return "AMB";
    case DegradeStrategy::Pers: return "PERS";
  }
  return "RND";
}

DegradeStrategy parse_strategy(const std::string& text) {
  const std::string t = to_lower(text);
  if (t == "rnd") return DegradeStrategy::Rnd;
  if (t == "amb") return DegradeStrategy::Amb;
  if (t == "pers") return DegradeStrategy::Pers;
  throw std::invalid_argument("unknown degradation strategy '" + text + "' (expected RND|AMB|PERS)");
}

DegradedSentence degrade(const std::vector<std::string>& sentence, DegradeStrategy strategy,
                         const DegradationResources& resources, double rate, std::uint64_t seed) {
  DegradedSentence out;
  out.tokens = sentence;
  out.strategy = strategy;
  auto mask = [&out](std::size_t i) {
    out.masked_positions.push_back(static_cast<int>(i));
    out.originals.push_back(out.tokens[i]);
    out.tokens[i] = kBlankToken;
  };

  if (strategy == DegradeStrategy::Rnd) {
    if (!resources.lexicon) throw std::invalid_argument("degrade: RND requires a POS lexicon");
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("degrade: rate must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < out.tokens.size(); ++i) {
      if (out.tokens[i] == kBlankToken || !resources.lexicon->is_content(out.tokens[i])) continue;
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      if (u < rate) mask(i);
    }
    return out;
  }

  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    if (out.tokens[i] == kBlankToken) continue;
    if (resources.words.count(to_lower(out.tokens[i]))) mask(i);
  }
  return out;
}

DegradationStats degradation_stats(const std::vector<DegradedSentence>& corpus) {
  DegradationStats s;
  s.sentences = corpus.size();
  for (const auto& d : corpus) {
    if (!d.masked_positions.empty()) {
      ++s.sentences_with_blank;
      s.blanks += d.masked_positions.size();
    }
  }
  if (s.sentences > 0) {
    s.percent_with_blank = 100.0 * static_cast<double>(s.sentences_with_blank) /
                           static_cast<double>(s.sentences);
  }
  if (s.sentences_with_blank > 0) {
    s.avg_blanks = static_cast<double>(s.blanks) / static_cast<double>(s.sentences_with_blank);
  }
  return s;
}

std::vector<std::string> DegradedCorpus::lines() const {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(join_tokens(s.tokens));
  return out;
}

std::vector<std::string> DegradedCorpus::audit_lines() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    for (std::size_t k = 0; k < s.masked_positions.size(); ++k) {
      out.push_back(std::to_string(i) + "\t" + std::to_string(s.masked_positions[k]) + "\t" +
                    s.originals[k]);
    }
  }
  return out;
}

DegradedCorpus degrade_corpus(const std::vector<std::string>& lines, DegradeStrategy strategy,
                              const DegradationResources& resources, double rate,
                              std::uint64_t seed) {
  DegradedCorpus out;
  out.sentences.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out.sentences.push_back(degrade(split_tokens(lines[i]), strategy, resources, rate,
                                    seed ^ static_cast<std::uint64_t>(i)));
  }
  out.stats = degradation_stats(out.sentences);
  return out;
}

// ---------------------------------------------------------------------------

TranslationTable ibm1_translation_table(const Bitext& bitext, int iterations) {
  if (bitext.size() == 0) throw std::invalid_argument("extract_ambiguous: empty bitext");
  std::vector<std::vector<std::string>> src, tgt;
  src.reserve(bitext.size());
  tgt.reserve(bitext.size());
  for (std::size_t i = 0; i < bitext.size(); ++i) {
    std::vector<std::string> s;
    for (auto& w : split_tokens(bitext.source[i])) s.push_back(to_lower(w));
    src.push_back(std::move(s));
    tgt.push_back(split_tokens(bitext.target[i]));
  }

  // Uniform initialization cancels in the first E-step, so only co-occurring
  // pairs need entries.
  TranslationTable t;
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (const auto& e : src[i]) {
      for (const auto& f : tgt[i]) t[e][f] = 1.0;
    }
  }
  for (int it = 0; it < iterations; ++it) {
    TranslationTable counts;
    std::map<std::string, double> totals;
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (const auto& f : tgt[i]) {
        double denom = 0.0;
        for (const auto& e : src[i]) denom += t[e][f];
        if (denom <= 0.0) continue;
        for (const auto& e : src[i]) {
          const double c = t[e][f] / denom;
          counts[e][f] += c;
          totals[e] += c;
        }
      }
    }
    for (auto& [e, row] : counts) {
      const double total = totals[e];
      for (auto& [f, c] : row) t[e][f] = c / total;
    }
  }
  return t;
}

std::vector<std::string> extract_ambiguous(const Bitext& bitext, int min_count, double min_ratio) {
  const TranslationTable t = ibm1_translation_table(bitext);
  std::map<std::string, long> counts;
  for (const auto& line : bitext.source) {
    for (const auto& w : split_tokens(line)) ++counts[to_lower(w)];
  }
  std::vector<std::string> out;
  for (const auto& [e, row] : t) {
    if (counts[e] < min_count) continue;
    int strong = 0;
    for (const auto& [f, p] : row) {
      if (p >= min_ratio) ++strong;
    }
    if (strong >= 2) out.push_back(e);
  }
  return out;
}

}  // namespace mmt
