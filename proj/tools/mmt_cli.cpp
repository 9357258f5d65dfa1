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

// Command-line front end: vocabulary, training, drafts, degradation,
// translation and evaluation. Logs are `key=value` lines on stderr;
// results go to stdout or the named output files.

#include "mmt/bleu.hpp"
#include "mmt/checkpoint.hpp"
#include "mmt/corpus.hpp"
#include "mmt/deliberation.hpp"
#include "mmt/run_config.hpp"
#include "mmt/text_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <thread>

namespace {

using namespace mmt;

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void log_line(const std::string& line) { std::cerr << line << std::endl; }

struct Vocabs {
  Vocabulary src;
  Vocabulary tgt;
};

Vocabs load_vocabs(const RunConfig& run) {
  if (run.src_vocab_file.empty()) throw ConfigError("src_vocab_file", "required");
  if (run.tgt_vocab_file.empty()) throw ConfigError("tgt_vocab_file", "required");
  return {Vocabulary::load(run.src_vocab_file), Vocabulary::load(run.tgt_vocab_file)};
}

std::vector<std::string> image_ids(const std::string& path, std::size_t expected) {
  if (path.empty()) return {};
  auto ids = read_lines(path);
  if (ids.size() != expected) {
    throw std::runtime_error(path + ": " + std::to_string(ids.size()) + " image ids for " +
                             std::to_string(expected) + " sentences");
  }
  return ids;
}

Dataset load_split(const RunConfig& run, const Vocabs& v, const std::string& src, const std::string& tgt,
                   const std::string& images, const char* src_key) {
  if (src.empty()) throw ConfigError(src_key, "required");
  const Bitext bitext = Bitext::load(src, tgt);
  std::vector<std::optional<VisualFeatures>> visual;
  if (run.model.visual != VisualMode::None) visual = load_visual_inputs(run, image_ids(images, bitext.size()));
  return make_dataset(bitext, v.src, v.tgt, std::move(visual));
}

/// Source-only inputs for decoding commands.
struct SourceInputs {
  std::vector<std::vector<int>> src;
  std::vector<std::optional<VisualFeatures>> visual;
};

SourceInputs load_sources(const RunConfig& run, const Vocabulary& src_vocab, const std::string& input,
                          const std::string& images) {
  SourceInputs in;
  for (const auto& line : read_lines(input)) in.src.push_back(src_vocab.encode_line(line));
  in.visual.resize(in.src.size());
  if (run.model.visual != VisualMode::None) {
    if (images.empty()) throw ConfigError("images", "required when the model uses visual features");
    in.visual = load_visual_inputs(run, image_ids(images, in.src.size()));
  }
  return in;
}

/// Runs fn(i) for i in [0, n) on `workers` threads; results land by index.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string join_ids(const Vocabulary& vocab, const std::vector<int>& ids) {
  return join_tokens(vocab.decode(ids));
}

std::map<std::string, std::string> training_metadata(const TrainReport& r, const RunConfig& run) {
  return {{"best_bleu", fmt(r.best_bleu, "%.17g")},
          {"best_epoch", std::to_string(r.best_epoch)},
          {"epochs", std::to_string(r.epochs)},
          {"step", std::to_string(r.steps)},
          {"seed", std::to_string(run.seed)}};
}

// Commands ------------------------------------------------------------------

int cmd_build_vocab(const std::string& input, const std::string& output, int min_freq) {
  if (min_freq < 1) throw ConfigError("min-freq", "must be >= 1");
  const auto vocab = Vocabulary::build(read_lines(input), min_freq);
  vocab.save(output);
  log_line("event=build_vocab input=" + input + " output=" + output + " size=" + std::to_string(vocab.size()) +
           " min_freq=" + std::to_string(min_freq));
  return 0;
}

int cmd_train_base(const std::string& config, const std::string& output) {
  const RunConfig run = RunConfig::load(config);
  if (run.model.system != SystemKind::Base) throw ConfigError("system", "train-base needs system = base");
  const Vocabs v = load_vocabs(run);
  const Dataset train = load_split(run, v, run.train_src, run.train_tgt, run.train_images, "train_src");
  Dataset valid;
  if (!run.valid_src.empty()) valid = load_split(run, v, run.valid_src, run.valid_tgt, run.valid_images, "valid_src");
  TrainModel model(run.model_config(v.src.size(), v.tgt.size()), run.seed);
  log_line("event=start stage=base params=" + std::to_string(model.parameter_count()) +
           " train_pairs=" + std::to_string(train.size()) + " valid_pairs=" + std::to_string(valid.size()) +
           " seed=" + std::to_string(run.seed));
  TrainOptions opts = run.train_options();
  opts.log = log_line;
  const TrainReport report = train_base(model, train, valid, opts);
  save_checkpoint(output, make_checkpoint(model, training_metadata(report, run)));
  log_line("event=done stage=base checkpoint=" + output + " steps=" + std::to_string(report.steps) +
           " best_bleu=" + fmt(report.best_bleu));
  return 0;
}

int cmd_sample_drafts(const std::string& config, const std::string& checkpoint, const std::string& input,
                      const std::string& images, const std::string& output) {
  const RunConfig run = RunConfig::load(config);
  const TrainModel model = model_from_checkpoint(load_checkpoint(checkpoint));
  const Vocabs v = load_vocabs(run);
  const std::string src_path = input.empty() ? run.train_src : input;
  if (src_path.empty()) throw ConfigError("train_src", "required when --input is not given");
  // Visual inputs follow the checkpoint's mode, not the run's.
  RunConfig draft_run = run;
  draft_run.model.visual = model.config().visual;
  const SourceInputs in = load_sources(draft_run, v.src, src_path, images.empty() ? run.train_images : images);
  std::vector<DraftSet> drafts(in.src.size());
  parallel_for(in.src.size(), run.workers, [&](std::size_t i) {
    drafts[i] = sample_drafts(model, in.src[i], in.visual[i] ? &*in.visual[i] : nullptr, run.beam, run.n_drafts);
  });
  write_draft_cache(output, drafts);
  std::size_t forced = 0;
  for (const auto& set : drafts) {
    for (const auto& d : set) forced += d.forced;
  }
  log_line("event=sample_drafts sentences=" + std::to_string(drafts.size()) + " beam=" + std::to_string(run.beam) +
           " n=" + std::to_string(run.n_drafts) + " forced=" + std::to_string(forced) + " output=" + output);
  return 0;
}

int cmd_train_delib(const std::string& config, const std::string& base_path, const std::string& drafts_path,
                    const std::string& output) {
  const RunConfig run = RunConfig::load(config);
  if (run.model.system != SystemKind::Deliberation) throw ConfigError("system", "train-delib needs system = delib");
  const Vocabs v = load_vocabs(run);
  const TrainModel base = model_from_checkpoint(load_checkpoint(base_path));
  TrainModel model = init_from_base(base, run.model_config(v.src.size(), v.tgt.size()), run.seed);
  const Dataset train = load_split(run, v, run.train_src, run.train_tgt, run.train_images, "train_src");
  Dataset valid;
  if (!run.valid_src.empty()) valid = load_split(run, v, run.valid_src, run.valid_tgt, run.valid_images, "valid_src");
  const auto drafts = read_draft_cache(drafts_path);
  log_line("event=start stage=delib params=" + std::to_string(model.parameter_count()) +
           " base_params=" + std::to_string(base.parameter_count()) + " seed=" + std::to_string(run.seed));
  TrainOptions opts = run.train_options();
  opts.log = log_line;
  const TrainReport report = train_deliberation(model, train, drafts, valid, opts);
  save_checkpoint(output, make_checkpoint(model, training_metadata(report, run)));
  log_line("event=done stage=delib checkpoint=" + output + " steps=" + std::to_string(report.steps) +
           " best_bleu=" + fmt(report.best_bleu));
  return 0;
}

void print_stats(const DegradationStats& s) {
  std::cout << "sentences=" << s.sentences << " sentences_with_blank=" << s.sentences_with_blank
            << " blanks=" << s.blanks << " percent_with_blank=" << fmt(s.percent_with_blank, "%.4f")
            << " avg_blanks=" << fmt(s.avg_blanks, "%.4f") << std::endl;
}

struct DegradeArgs {
  std::string config, strategy, input, output, audit, lexicon, words;
  double rate = -1.0;
  std::int64_t seed = -1;
};

int cmd_degrade(DegradeArgs a) {
  RunConfig run;
  if (!a.config.empty()) run = RunConfig::load(a.config);
  if (a.strategy.empty()) a.strategy = run.strategy;
  if (a.lexicon.empty()) a.lexicon = run.pos_lexicon;
  const double rate = a.rate >= 0 ? a.rate : run.mask_rate;
  const std::uint64_t seed = a.seed >= 0 ? static_cast<std::uint64_t>(a.seed) : run.seed;

  DegradeStrategy strategy;
  try {
    strategy = parse_strategy(a.strategy);
  } catch (const std::exception& e) {
    throw ConfigError("strategy", e.what());
  }
  if (rate > 1.0) throw ConfigError("rate", "must lie in [0, 1]");
  DegradationResources res;
  PosLexicon lexicon;
  if (strategy == DegradeStrategy::Rnd) {
    if (a.lexicon.empty()) throw ConfigError("pos_lexicon", "RND needs a POS lexicon");
    lexicon = PosLexicon::load(a.lexicon);
    res.lexicon = &lexicon;
  } else {
    std::string words = a.words;
    if (words.empty()) words = strategy == DegradeStrategy::Pers ? run.person_words : run.ambiguous_words;
    if (words.empty()) {
      throw ConfigError(strategy == DegradeStrategy::Pers ? "person_words" : "ambiguous_words", "word list required");
    }
    res.words = load_word_list(words);
    if (strategy == DegradeStrategy::Pers) res.words = with_gendered_pronouns(std::move(res.words));
  }
  const auto corpus = degrade_corpus(read_lines(a.input), strategy, res, rate, seed);
  write_lines(a.output, corpus.lines());
  if (!a.audit.empty()) write_lines(a.audit, corpus.audit_lines());
  log_line("event=degrade strategy=" + to_string(strategy) + " input=" + a.input + " output=" + a.output +
           " seed=" + std::to_string(seed));
  print_stats(corpus.stats);
  return 0;
}

int cmd_stats(const std::string& input) {
  std::vector<DegradedSentence> sentences;
  for (const auto& line : read_lines(input)) {
    DegradedSentence s;
    s.tokens = split_tokens(line);
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (s.tokens[i] == kBlankToken) s.masked_positions.push_back(static_cast<int>(i));
    }
    sentences.push_back(std::move(s));
  }
  print_stats(degradation_stats(sentences));
  return 0;
}

int cmd_translate(const std::string& config, const std::string& checkpoint, const std::string& input,
                  const std::string& images, const std::string& output, int beam, const std::string& drafts_out) {
  const RunConfig run = RunConfig::load(config);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Vocabs v = load_vocabs(run);
  require_config(ckpt, run.model_config(v.src.size(), v.tgt.size()));
  const TrainModel model = model_from_checkpoint(ckpt);
  const int width = beam > 0 ? beam : run.beam;
  const SourceInputs in = load_sources(run, v.src, input, images);
  std::vector<std::string> lines(in.src.size());
  std::vector<DraftSet> drafts(in.src.size());
  parallel_for(in.src.size(), run.workers, [&](std::size_t i) {
    const VisualFeatures* vis = in.visual[i] ? &*in.visual[i] : nullptr;
    if (model.is_deliberation()) {
      lines[i] = join_ids(v.tgt, deliberate(model, in.src[i], vis, width));
      return;
    }
    const auto hyps = beam_translate(model, in.src[i], vis, width);
    lines[i] = hyps.empty() ? "" : join_ids(v.tgt, hyps.front().tokens);
    if (!drafts_out.empty()) drafts[i] = sample_drafts(model, in.src[i], vis, width, std::min(width, run.n_drafts));
  });
  write_lines(output, lines);
  if (!drafts_out.empty()) {
    if (model.is_deliberation()) throw ConfigError("drafts-out", "only first-pass models emit drafts");
    write_draft_cache(drafts_out, drafts);
  }
  log_line("event=translate sentences=" + std::to_string(lines.size()) + " beam=" + std::to_string(width) +
           " system=" + to_string(model.config().system) + " output=" + output);
  return 0;
}

int cmd_refine(const std::string& config, const std::string& checkpoint, const std::string& input,
               const std::string& images, const std::string& drafts_path, const std::string& output) {
  const RunConfig run = RunConfig::load(config);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Vocabs v = load_vocabs(run);
  require_config(ckpt, run.model_config(v.src.size(), v.tgt.size()));
  const TrainModel model = model_from_checkpoint(ckpt);
  if (!model.is_deliberation()) throw ConfigError("system", "refine needs a deliberation checkpoint");
  const SourceInputs in = load_sources(run, v.src, input, images);
  const auto drafts = read_draft_cache(drafts_path);
  if (drafts.size() != in.src.size()) {
    throw std::runtime_error(drafts_path + ": " + std::to_string(drafts.size()) + " draft sets for " +
                             std::to_string(in.src.size()) + " sentences");
  }
  std::vector<std::string> lines(in.src.size());
  parallel_for(in.src.size(), run.workers, [&](std::size_t i) {
    if (drafts[i].empty()) throw std::runtime_error("no draft for sentence " + std::to_string(i));
    lines[i] = join_ids(v.tgt, refine(model, in.src[i], in.visual[i] ? &*in.visual[i] : nullptr, drafts[i].front()));
  });
  write_lines(output, lines);
  log_line("event=refine sentences=" + std::to_string(lines.size()) + " output=" + output);
  return 0;
}

int cmd_evaluate(const std::string& hyp, const std::string& ref, const std::string& compare, int samples,
                 std::uint64_t seed) {
  const auto h = tokenize_lines(read_lines(hyp));
  const auto r = tokenize_lines(read_lines(ref));
  const BleuReport report = bleu(h, r);
  std::cout << "bleu=" << fmt(report.score, "%.4f") << " bp=" << fmt(report.brevity_penalty, "%.6f");
  for (int n = 0; n < kBleuOrder; ++n) std::cout << " p" << n + 1 << "=" << fmt(report.precisions[n], "%.6f");
  std::cout << " hyp_len=" << report.hyp_len << " ref_len=" << report.ref_len;
  if (!compare.empty()) {
    const auto c = tokenize_lines(read_lines(compare));
    std::cout << " compare_bleu=" << fmt(bleu(c, r).score, "%.4f")
              << " p_value=" << fmt(paired_bootstrap(h, c, r, samples, seed), "%.4f");
  }
  std::cout << std::endl;
  return 0;
}

std::size_t element_count(const Matrix<float>& m) { return static_cast<std::size_t>(m.size()); }

int cmd_inspect(const std::string& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  std::size_t params = 0;
  for (const auto& [name, m] : ckpt.tensors) params += element_count(m);
  const TrainModel model = model_from_checkpoint(ckpt);
  std::cout << "version=" << Checkpoint::kVersion << " tensors=" << ckpt.tensors.size() << " params=" << params
            << " model_params=" << model.parameter_count() << std::endl;
  for (const auto& [k, val] : ckpt.config.to_map()) std::cout << "config." << k << "=" << val << std::endl;
  for (const auto& [k, val] : ckpt.metadata) std::cout << "meta." << k << "=" << val << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deliberation-based multimodal translation toolkit"};
  app.require_subcommand(1);

  std::string config, input, output, checkpoint, images, drafts, base, hyp, ref, compare, drafts_out;
  int min_freq = 1, beam = 0, samples = 1000;
  std::uint64_t eval_seed = 1;
  DegradeArgs degrade_args;

  auto* build_vocab = app.add_subcommand("build-vocab", "Build a vocabulary from a tokenized text file");
  build_vocab->add_option("--input", input, "Tokenized text, one sentence per line")->required();
  build_vocab->add_option("--output", output, "Vocabulary file")->required();
  build_vocab->add_option("--min-freq", min_freq, "Minimum token frequency");

  auto* train_base_cmd = app.add_subcommand("train-base", "Train the text-only or visually conditioned base model");
  train_base_cmd->add_option("--config", config)->required();
  train_base_cmd->add_option("--output", output, "Checkpoint path")->required();

  auto* sample = app.add_subcommand("sample-drafts", "Cache n-best first-pass drafts for each source sentence");
  sample->add_option("--config", config)->required();
  sample->add_option("--checkpoint", checkpoint)->required();
  sample->add_option("--input", input, "Source sentences (default: train_src)");
  sample->add_option("--images", images, "Image ids parallel to --input");
  sample->add_option("--output", output, "Draft cache path")->required();

  auto* train_delib = app.add_subcommand("train-delib", "Train a deliberation model from a base checkpoint");
  train_delib->add_option("--config", config)->required();
  train_delib->add_option("--base", base, "Base checkpoint")->required();
  train_delib->add_option("--drafts", drafts, "Draft cache for the training pairs")->required();
  train_delib->add_option("--output", output, "Checkpoint path")->required();

  auto* degrade_cmd = app.add_subcommand("degrade", "Mask source words with BLANK");
  degrade_cmd->add_option("--config", degrade_args.config);
  degrade_cmd->add_option("--strategy", degrade_args.strategy, "RND, AMB or PERS");
  degrade_cmd->add_option("--input", degrade_args.input)->required();
  degrade_cmd->add_option("--output", degrade_args.output)->required();
  degrade_cmd->add_option("--audit", degrade_args.audit, "Sidecar of masked positions and originals");
  degrade_cmd->add_option("--lexicon", degrade_args.lexicon, "POS lexicon for RND");
  degrade_cmd->add_option("--words", degrade_args.words, "Ambiguous or person word list");
  degrade_cmd->add_option("--rate", degrade_args.rate, "RND masking probability");
  degrade_cmd->add_option("--seed", degrade_args.seed);

  auto* translate = app.add_subcommand("translate", "Decode source sentences with a checkpoint");
  translate->add_option("--config", config)->required();
  translate->add_option("--checkpoint", checkpoint)->required();
  translate->add_option("--input", input)->required();
  translate->add_option("--images", images);
  translate->add_option("--output", output)->required();
  translate->add_option("--beam", beam, "Beam width (default: config beam)");
  translate->add_option("--drafts-out", drafts_out, "Also write n-best drafts in draft cache format");

  auto* refine_cmd = app.add_subcommand("refine", "Second-pass decode over cached drafts");
  refine_cmd->add_option("--config", config)->required();
  refine_cmd->add_option("--checkpoint", checkpoint)->required();
  refine_cmd->add_option("--input", input)->required();
  refine_cmd->add_option("--images", images);
  refine_cmd->add_option("--drafts", drafts)->required();
  refine_cmd->add_option("--output", output)->required();

  auto* evaluate = app.add_subcommand("evaluate", "Corpus BLEU and optional paired bootstrap");
  evaluate->add_option("--hyp", hyp)->required();
  evaluate->add_option("--ref", ref)->required();
  evaluate->add_option("--compare", compare, "Second system for significance testing");
  evaluate->add_option("--samples", samples);
  evaluate->add_option("--seed", eval_seed);

  auto* stats = app.add_subcommand("stats", "Blank statistics of a degraded corpus");
  stats->add_option("--input", input)->required();

  auto* inspect = app.add_subcommand("inspect", "Print checkpoint config, metadata and parameter count");
  inspect->add_option("--checkpoint", checkpoint)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*build_vocab) return cmd_build_vocab(input, output, min_freq);
    if (*train_base_cmd) return cmd_train_base(config, output);
    if (*sample) return cmd_sample_drafts(config, checkpoint, input, images, output);
    if (*train_delib) return cmd_train_delib(config, base, drafts, output);
    if (*degrade_cmd) return cmd_degrade(degrade_args);
    if (*translate) return cmd_translate(config, checkpoint, input, images, output, beam, drafts_out);
    if (*refine_cmd) return cmd_refine(config, checkpoint, input, images, drafts, output);
    if (*evaluate) return cmd_evaluate(hyp, ref, compare, samples, eval_seed);
    if (*stats) return cmd_stats(input);
    if (*inspect) return cmd_inspect(checkpoint);
  } catch (const ConfigError& e) {
    std::cerr << "event=error kind=config key=" << e.key() << " message=\"" << e.what() << "\"" << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "event=error kind=runtime message=\"" << e.what() << "\"" << std::endl;
    return 1;
  }
  return 1;
}
