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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mmt/corpus.hpp"
#include "mmt/text_io.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace mmt;
using mmt::testing::TempDir;

namespace {

DegradationResources person_resources(std::unordered_set<std::string> persons) {
  DegradationResources r;
  r.words = with_gendered_pronouns(std::move(persons));
  return r;
}

// Dense IBM Model 1 over the full source x target vocabulary, uniform start.
std::map<std::pair<std::string, std::string>, double> dense_ibm1(const Bitext& bitext, int iterations) {
  std::vector<std::vector<std::string>> src, tgt;
  std::set<std::string> es, fs;
  for (std::size_t i = 0; i < bitext.size(); ++i) {
    std::vector<std::string> s;
    for (const auto& w : split_tokens(bitext.source[i])) s.push_back(to_lower(w));
    src.push_back(s);
    tgt.push_back(split_tokens(bitext.target[i]));
    es.insert(s.begin(), s.end());
    fs.insert(tgt.back().begin(), tgt.back().end());
  }
  std::map<std::pair<std::string, std::string>, double> t;
  for (const auto& e : es) {
    for (const auto& f : fs) t[{e, f}] = 1.0 / static_cast<double>(fs.size());
  }
  for (int it = 0; it < iterations; ++it) {
    std::map<std::pair<std::string, std::string>, double> count;
    std::map<std::string, double> total;
    for (std::size_t k = 0; k < src.size(); ++k) {
      for (const auto& f : tgt[k]) {
        double z = 0.0;
        for (const auto& e : src[k]) z += t[{e, f}];
        for (const auto& e : src[k]) {
          count[{e, f}] += t[{e, f}] / z;
          total[e] += t[{e, f}] / z;
        }
      }
    }
    for (auto& [key, value] : t) value = count[key] / total[key.first];
  }
  return t;
}

Bitext bank_bitext() {
  Bitext b;
  for (int i = 0; i < 6; ++i) {
    b.source.push_back("the bank of money");
    b.target.push_back("die Bank des Geldes");
    b.source.push_back("the bank of the river");
    b.target.push_back("das Ufer des Flusses");
  }
  for (int i = 0; i < 4; ++i) {
    b.source.push_back("money");
    b.target.push_back("Geldes");
    b.source.push_back("river");
    b.target.push_back("Flusses");
    b.source.push_back("the");
    b.target.push_back("die");
    b.source.push_back("the");
    b.target.push_back("das");
    b.source.push_back("of");
    b.target.push_back("des");
  }
  return b;
}

}  // namespace

TEST_CASE("vocabulary construction") {
  const auto v = Vocabulary::build({"a b", "a"}, 1);
  CHECK(v.size() == 7);
  CHECK(v.contains("a"));
  CHECK(v.contains("b"));
  CHECK(v.id("a") == 5);
  CHECK(v.id("b") == 6);
  const auto cut = Vocabulary::build({"a b", "a"}, 2);
  CHECK(cut.contains("a"));
  CHECK_FALSE(cut.contains("b"));
  CHECK(cut.id("b") == token::kUnk);

  const auto ties = Vocabulary::build({"zeta beta alpha", "beta"}, 1);
  CHECK(ties.token(5) == "beta");
  CHECK(ties.token(6) == "alpha");
  CHECK(ties.token(7) == "zeta");

  CHECK(v.token(token::kPad) == "<pad>");
  CHECK(v.token(token::kBos) == "<s>");
  CHECK(v.token(token::kEos) == "</s>");
  CHECK(v.token(token::kUnk) == "<unk>");
  CHECK(v.token(token::kBlank) == "BLANK");
  CHECK(v.id("BLANK") == token::kBlank);
  CHECK(Vocabulary::build({"BLANK x BLANK"}, 1).size() == 6);
  CHECK_THROWS(Vocabulary::build({}, 1));
  CHECK_THROWS(v.token(99));
}

TEST_CASE("vocabulary encoding, decoding and persistence") {
  TempDir dir("vocab");
  const auto v = Vocabulary::build({"ein Mann fährt", "ein Hund"}, 1);
  const auto ids = v.encode_line("ein Katze fährt");
  CHECK(ids == std::vector<int>{v.id("ein"), token::kUnk, v.id("fährt")});
  const std::vector<int> with_markers = {token::kBos, v.id("ein"), token::kPad, v.id("Hund"), token::kEos,
                                         v.id("Mann")};
  CHECK(v.decode(with_markers) == std::vector<std::string>{"ein", "Hund"});

  v.save(dir / "vocab.txt");
  const auto lines = read_lines(dir / "vocab.txt");
  CHECK(lines.front() == "#min_freq=1");
  const auto back = Vocabulary::load(dir / "vocab.txt");
  CHECK(back.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(back.token(i) == v.token(i));
  CHECK(back.min_freq() == 1);

  write_lines(dir / "bad.txt", {"a", "b"});
  CHECK_THROWS(Vocabulary::load(dir / "bad.txt"));
}

TEST_CASE("bitext loading") {
  TempDir dir("bitext");
  write_lines(dir / "src", {"a b", "c"});
  write_lines(dir / "tgt", {"x", "y z"});
  const auto b = Bitext::load(dir / "src", dir / "tgt");
  CHECK(b.size() == 2);
  CHECK(b.target[1] == "y z");
  write_lines(dir / "short", {"x"});
  CHECK_THROWS(Bitext::load(dir / "src", dir / "short"));
}

TEST_CASE("POS lexicon") {
  TempDir dir("lex");
  write_lines(dir / "lex.tsv", {"Dog\tNOUN", "runs\tVERB,NOUN", "the\tDET", "quickly\tADV"});
  const auto lex = PosLexicon::load(dir / "lex.tsv");
  CHECK(lex.size() == 4);
  CHECK(lex.is_content("dog"));
  CHECK(lex.is_content("DOG"));
  CHECK(lex.is_content("Runs"));
  CHECK(lex.is_content("quickly"));
  CHECK_FALSE(lex.is_content("the"));
  CHECK_FALSE(lex.is_content("unknown"));
  REQUIRE(lex.tags("runs") != nullptr);
  CHECK(lex.tags("runs")->size() == 2);
  write_lines(dir / "bad.tsv", {"word-without-tab"});
  CHECK_THROWS(PosLexicon::load(dir / "bad.tsv"));
}

TEST_CASE("strategy names") {
  CHECK(parse_strategy("pers") == DegradeStrategy::Pers);
  CHECK(parse_strategy("AMB") == DegradeStrategy::Amb);
  CHECK(to_string(DegradeStrategy::Rnd) == "RND");
  CHECK_THROWS(parse_strategy("ALL"));
}

TEST_CASE("person masking on the outdoor example") {
  const auto r = person_resources({"boy", "girl", "man", "woman"});
  const auto d = degrade(split_tokens("The boy is outside enjoying a summer day."), DegradeStrategy::Pers, r, 0.0, 0);
  CHECK(join_tokens(d.tokens) == "The BLANK is outside enjoying a summer day.");
  CHECK(d.masked_positions == std::vector<int>{1});
  CHECK(d.originals == std::vector<std::string>{"boy"});

  const auto pronouns = degrade(split_tokens("She gives his dog to her friend"), DegradeStrategy::Pers, r, 0.0, 0);
  CHECK(join_tokens(pronouns.tokens) == "BLANK gives BLANK dog to BLANK friend");
  CHECK(with_gendered_pronouns({}).size() == 4);
}

TEST_CASE("ambiguous-word masking") {
  DegradationResources none;
  const auto s = split_tokens("a bank by the river");
  const auto same = degrade(s, DegradeStrategy::Amb, none, 0.0, 0);
  CHECK(same.tokens == s);
  CHECK(same.masked_positions.empty());
  DegradationResources amb;
  amb.words = {"bank"};
  const auto d = degrade(split_tokens("A Bank by the bank"), DegradeStrategy::Amb, amb, 0.0, 0);
  CHECK(d.masked_positions == std::vector<int>{1, 4});
  CHECK(d.originals == std::vector<std::string>{"Bank", "bank"});
}

TEST_CASE("masking is idempotent and BLANK counts match positions") {
  const auto r = person_resources({"man", "woman", "child"});
  std::mt19937_64 rng(3);
  const std::vector<std::string> words = {"man", "woman", "child", "a", "dog", "She", "his", "BLANK", "runs"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> s;
    for (int i = 0; i < 8; ++i) s.push_back(words[rng() % words.size()]);
    for (auto strategy : {DegradeStrategy::Pers, DegradeStrategy::Amb}) {
      const auto once = degrade(s, strategy, r, 0.0, 0);
      const auto twice = degrade(once.tokens, strategy, r, 0.0, 0);
      CHECK(twice.tokens == once.tokens);
      CHECK(twice.masked_positions.empty());
      CHECK(once.masked_positions.size() == once.originals.size());
      const auto blanks_before = std::count(s.begin(), s.end(), std::string("BLANK"));
      const auto blanks_after = std::count(once.tokens.begin(), once.tokens.end(), std::string("BLANK"));
      CHECK(static_cast<std::size_t>(blanks_after - blanks_before) == once.masked_positions.size());
      for (int p : once.masked_positions) CHECK(once.tokens[static_cast<std::size_t>(p)] == "BLANK");
    }
  }
}

TEST_CASE("random content-word masking") {
  PosLexicon lex;
  for (const char* w : {"dog", "runs", "red", "quickly", "ball", "park"}) lex.add(w, {"NOUN"});
  lex.add("the", {"DET"});
  DegradationResources r;
  r.lexicon = &lex;
  const auto s = split_tokens("the red dog runs quickly to the park with the ball");
  CHECK(degrade(s, DegradeStrategy::Rnd, r, 0.0, 5).tokens == s);
  const auto all = degrade(s, DegradeStrategy::Rnd, r, 1.0, 5);
  CHECK(join_tokens(all.tokens) == "the BLANK BLANK BLANK BLANK to the BLANK with the BLANK");
  CHECK(degrade(s, DegradeStrategy::Rnd, r, 0.4, 99).tokens == degrade(s, DegradeStrategy::Rnd, r, 0.4, 99).tokens);
  CHECK_THROWS(degrade(s, DegradeStrategy::Rnd, DegradationResources{}, 0.5, 1));
  CHECK_THROWS(degrade(s, DegradeStrategy::Rnd, r, 1.5, 1));

  // 10k content words: masked share within 3 binomial standard deviations.
  std::vector<std::string> lines(1000, "dog runs red quickly ball park dog runs red ball the");
  const double rate = 0.15;
  const auto corpus = degrade_corpus(lines, DegradeStrategy::Rnd, r, rate, 17);
  const double n = 10000.0;
  const double sigma = std::sqrt(n * rate * (1 - rate));
  CHECK(std::abs(static_cast<double>(corpus.stats.blanks) - n * rate) < 3 * sigma);
  const auto again = degrade_corpus(lines, DegradeStrategy::Rnd, r, rate, 17);
  CHECK(again.lines() == corpus.lines());
  CHECK(corpus.sentences[3].tokens == degrade(split_tokens(lines[3]), DegradeStrategy::Rnd, r, rate, 17 ^ 3).tokens);
}

TEST_CASE("corpus statistics on a hand-counted corpus") {
  const auto r = person_resources({"man", "woman", "boy"});
  const std::vector<std::string> lines = {"A man and a woman walk .", "The dog runs .", "She holds his hand .",
                                          "The Boy sees a cat ."};
  const auto d = degrade_corpus(lines, DegradeStrategy::Pers, r, 0.0, 1);
  CHECK(d.stats.sentences == 4);
  CHECK(d.stats.sentences_with_blank == 3);
  CHECK(d.stats.blanks == 5);
  CHECK(d.stats.percent_with_blank == 75.0);
  CHECK(d.stats.avg_blanks == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
  CHECK(d.lines()[2] == "BLANK holds BLANK hand .");
  CHECK(d.audit_lines() == std::vector<std::string>{"0\t1\tman", "0\t4\twoman", "2\t0\tShe", "2\t2\this", "3\t1\tBoy"});

  const auto clean = degrade_corpus({"a cat", "a dog"}, DegradeStrategy::Pers, r, 0.0, 1);
  CHECK(clean.stats.percent_with_blank == 0.0);
  CHECK(clean.stats.avg_blanks == 0.0);
}

TEST_CASE("IBM-1 table matches a dense EM computation") {
  const Bitext b = bank_bitext();
  const auto sparse = ibm1_translation_table(b, 5);
  const auto dense = dense_ibm1(b, 5);
  for (const auto& [key, value] : dense) {
    const auto row = sparse.find(key.first);
    REQUIRE(row != sparse.end());
    const auto cell = row->second.find(key.second);
    const double got = cell == row->second.end() ? 0.0 : cell->second;
    CHECK(std::abs(got - value) < 1e-12);
  }
  for (const auto& [e, row] : sparse) {
    double total = 0.0;
    for (const auto& [f, p] : row) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ambiguous-word mining") {
  const Bitext b = bank_bitext();
  const auto amb = extract_ambiguous(b, 10, 0.2);
  CHECK(std::find(amb.begin(), amb.end(), "bank") != amb.end());
  CHECK(std::find(amb.begin(), amb.end(), "money") == amb.end());
  CHECK(std::find(amb.begin(), amb.end(), "river") == amb.end());
  CHECK(extract_ambiguous(b, 10, 1.0).empty());
  CHECK(extract_ambiguous(b, 1000, 0.2).empty());
  CHECK_THROWS(extract_ambiguous(Bitext{}, 10, 0.2));
}
