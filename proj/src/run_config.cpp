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

#include "mmt/run_config.hpp"

#include "mmt/text_io.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <sstream>

namespace mmt {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) throw ConfigError(key, "expected a number, got '" + value + "'");
  return v;
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key, "expected a non-negative integer, got '" + value + "'");
  }
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw ConfigError(key, "out of range: '" + value + "'");
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename T>
Setter number(T RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}
template <typename T>
Setter model_number(T ModelConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    c.model.*field = parse_number<T>(k, v);
  };
}
Setter text(std::string RunConfig::*field) {
  return [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; };
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> s = {
      {"enc_layers", model_number(&ModelConfig::enc_layers)},
      {"dec_layers", model_number(&ModelConfig::dec_layers)},
      {"delib_layers", model_number(&ModelConfig::delib_layers)},
      {"heads", model_number(&ModelConfig::heads)},
      {"d_model", model_number(&ModelConfig::d_model)},
      {"d_ff", model_number(&ModelConfig::d_ff)},
      {"d_emb", model_number(&ModelConfig::d_emb)},
      {"dropout", model_number(&ModelConfig::dropout)},
      {"max_len", model_number(&ModelConfig::max_len)},
      {"visual_width", model_number(&ModelConfig::visual_width)},
      {"system",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.model.system = parse_system(v);
         } catch (const std::exception& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {"visual",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.model.visual = parse_visual_mode(v);
         } catch (const std::exception& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {"lr", number(&RunConfig::lr)},
      {"warmup", number(&RunConfig::warmup)},
      {"patience", number(&RunConfig::patience)},
      {"batch_size", number(&RunConfig::batch_size)},
      {"max_epochs", number(&RunConfig::max_epochs)},
      {"max_steps", number(&RunConfig::max_steps)},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_seed(k, v); }},
      {"min_freq", number(&RunConfig::min_freq)},
      {"beam", number(&RunConfig::beam)},
      {"n_drafts", number(&RunConfig::n_drafts)},
      {"validation_beam", number(&RunConfig::validation_beam)},
      {"workers", number(&RunConfig::workers)},
      {"train_src", text(&RunConfig::train_src)},
      {"train_tgt", text(&RunConfig::train_tgt)},
      {"valid_src", text(&RunConfig::valid_src)},
      {"valid_tgt", text(&RunConfig::valid_tgt)},
      {"src_vocab_file", text(&RunConfig::src_vocab_file)},
      {"tgt_vocab_file", text(&RunConfig::tgt_vocab_file)},
      {"train_images", text(&RunConfig::train_images)},
      {"valid_images", text(&RunConfig::valid_images)},
      {"spatial_features", text(&RunConfig::spatial_features)},
      {"detections", text(&RunConfig::detections)},
      {"object_vocab", text(&RunConfig::object_vocab)},
      {"object_embeddings", text(&RunConfig::object_embeddings)},
      {"pos_lexicon", text(&RunConfig::pos_lexicon)},
      {"person_words", text(&RunConfig::person_words)},
      {"ambiguous_words", text(&RunConfig::ambiguous_words)},
      {"strategy",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           parse_strategy(v);
         } catch (const std::exception& e) {
           throw ConfigError(k, e.what());
         }
         c.strategy = v;
       }},
      {"mask_rate", number(&RunConfig::mask_rate)},
  };
  return s;
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  bool width_set = false;
  std::istringstream in(text);
  std::string raw;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = setters();
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& s) { return s.first == key; });
    if (it == table.end()) throw ConfigError(key, "unknown key");
    if (seen[key]++) throw ConfigError(key, "given more than once");
    it->second(c, key, value);
    width_set = width_set || key == "visual_width";
  }
  if (!width_set) c.model.visual_width = default_visual_width(c.model.visual);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  for (const auto& line : read_lines(path)) text += line + "\n";
  RunConfig c = parse(text);
  if (const char* env = std::getenv("MMT_SEED"); env && *env) c.seed = parse_seed("MMT_SEED", env);
  return c;
}

void RunConfig::validate() const {
  // Vocabulary sizes are only known once the vocab files are read.
  ModelConfig probe = model;
  probe.src_vocab = std::max(probe.src_vocab, 1);
  probe.tgt_vocab = std::max(probe.tgt_vocab, 1);
  probe.validate();

  if (lr <= 0) throw ConfigError("lr", "must be positive");
  if (warmup < 1) throw ConfigError("warmup", "must be >= 1");
  if (patience < 1) throw ConfigError("patience", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs", "must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps", "must be >= 0");
  if (min_freq < 1) throw ConfigError("min_freq", "must be >= 1");
  if (beam < 1) throw ConfigError("beam", "must be >= 1");
  if (n_drafts < 1 || n_drafts > beam) throw ConfigError("n_drafts", "must lie in [1, beam]");
  if (validation_beam < 1) throw ConfigError("validation_beam", "must be >= 1");
  if (workers < 1) throw ConfigError("workers", "must be >= 1");
  if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) throw ConfigError("mask_rate", "must lie in [0, 1]");

  // Each visual mode consumes exactly one feature kind.
  const VisualMode mode = model.visual;
  auto require = [](const std::string& value, const char* key, const char* why) {
    if (value.empty()) throw ConfigError(key, std::string("required: ") + why);
  };
  auto forbid = [](const std::string& value, const char* key, const char* why) {
    if (!value.empty()) throw ConfigError(key, std::string("not used here: ") + why);
  };
  switch (mode) {
    case VisualMode::None:
      forbid(spatial_features, "spatial_features", "visual = none");
      forbid(detections, "detections", "visual = none");
      forbid(object_embeddings, "object_embeddings", "visual = none");
      break;
    case VisualMode::Sum:
      require(detections, "detections", "visual = sum reads bag-of-objects counts");
      require(object_vocab, "object_vocab", "visual = sum indexes object categories");
      forbid(spatial_features, "spatial_features", "spatial maps pair with visual = att");
      forbid(object_embeddings, "object_embeddings", "object embeddings pair with visual = obj");
      break;
    case VisualMode::Att:
      require(spatial_features, "spatial_features", "visual = att attends over spatial maps");
      forbid(detections, "detections", "detections pair with visual = sum or obj");
      forbid(object_embeddings, "object_embeddings", "object embeddings pair with visual = obj");
      break;
    case VisualMode::Obj:
      require(detections, "detections", "visual = obj embeds detected objects");
      require(object_vocab, "object_vocab", "visual = obj indexes object categories");
      require(object_embeddings, "object_embeddings", "visual = obj needs the category embedding table");
      forbid(spatial_features, "spatial_features", "spatial maps pair with visual = att");
      break;
  }
  if (mode != VisualMode::None && !train_src.empty() && train_images.empty()) {
    throw ConfigError("train_images", "required when visual features are used");
  }
}

ModelConfig RunConfig::model_config(int src_vocab, int tgt_vocab) const {
  ModelConfig m = model;
  m.src_vocab = src_vocab;
  m.tgt_vocab = tgt_vocab;
  m.validate();
  return m;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.lr_base = lr;
  o.warmup = warmup;
  o.batch_size = batch_size;
  o.max_epochs = max_epochs;
  o.max_steps = max_steps;
  o.patience = patience;
  o.seed = seed;
  o.validation_beam = validation_beam;
  return o;
}

std::vector<std::optional<VisualFeatures>> load_visual_inputs(const RunConfig& run,
                                                              const std::vector<std::string>& image_ids) {
  std::vector<std::optional<VisualFeatures>> out(image_ids.size());
  const VisualMode mode = run.model.visual;
  if (mode == VisualMode::None) return out;

  if (mode == VisualMode::Att) {
    const auto file = SpatialFeatureFile::read(run.spatial_features);
    for (std::size_t i = 0; i < image_ids.size(); ++i) {
      auto it = file.images.find(image_ids[i]);
      if (it == file.images.end()) {
        throw std::runtime_error(run.spatial_features + ": no features for image '" + image_ids[i] + "'");
      }
      out[i] = to_spatial_features(it->second);
    }
    return out;
  }

  ObjectVocabulary vocab = ObjectVocabulary::load(run.object_vocab);
  if (mode == VisualMode::Obj) vocab.set_embeddings(read_embedding_table(run.object_embeddings));
  const auto detections = read_detections(run.detections);
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    auto it = detections.find(image_ids[i]);
    if (it == detections.end()) {
      throw std::runtime_error(run.detections + ": no detections line for image '" + image_ids[i] + "'");
    }
    if (mode == VisualMode::Sum) {
      out[i] = bag_of_objects(it->second, vocab);
    } else {
      out[i] = object_embeddings(it->second, vocab);
    }
  }
  return out;
}

Dataset make_dataset(const Bitext& bitext, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                     std::vector<std::optional<VisualFeatures>> visual) {
  if (!visual.empty() && visual.size() != bitext.size()) {
    throw std::invalid_argument("make_dataset: " + std::to_string(visual.size()) + " visual inputs for " +
                                std::to_string(bitext.size()) + " sentence pairs");
  }
  Dataset data;
  data.reserve(bitext.size());
  for (std::size_t i = 0; i < bitext.size(); ++i) {
    Example ex;
    ex.src = src_vocab.encode_line(bitext.source[i]);
    ex.tgt = tgt_vocab.encode_line(bitext.target[i]);
    if (ex.src.empty()) throw std::invalid_argument("make_dataset: empty source on line " + std::to_string(i + 1));
    if (!visual.empty()) ex.visual = std::move(visual[i]);
    data.push_back(std::move(ex));
  }
  return data;
}

}  // namespace mmt
