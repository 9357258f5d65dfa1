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
#include "mmt/corpus.hpp"
#include "mmt/multimodal.hpp"
#include "mmt/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmt {

/// Flat `key = value` run description with `#` comments. Unknown keys,
/// unparsable values and visual mode / feature mismatches raise
/// ConfigError naming the key.
struct RunConfig {
  ModelConfig model;

  double lr = 0.05;
  std::int64_t warmup = 8000;
  int patience = 10;
  int batch_size = 32;
  int max_epochs = 100;
  std::int64_t max_steps = 0;
  std::uint64_t seed = 1;
  int min_freq = 1;
  int beam = 10;
  int n_drafts = 10;
  int validation_beam = 10;
  int workers = 1;

  std::string train_src, train_tgt, valid_src, valid_tgt;
  std::string src_vocab_file, tgt_vocab_file;
  // One image id per line, parallel to the corresponding bitext.
  std::string train_images, valid_images;
  std::string spatial_features;   // att
  std::string detections;         // sum, obj
  std::string object_vocab;       // sum, obj
  std::string object_embeddings;  // obj
  std::string pos_lexicon, person_words, ambiguous_words;

  std::string strategy = "RND";
  double mask_rate = 0.15;

  static RunConfig parse(const std::string& text);
  /// Parses the file, then lets MMT_SEED override `seed`.
  static RunConfig load(const std::filesystem::path& path);

  /// Keys this format accepts, in canonical order.
  static const std::vector<std::string>& known_keys();

  /// Model config with vocabulary sizes filled in.
  ModelConfig model_config(int src_vocab, int tgt_vocab) const;
  TrainOptions train_options() const;

  void validate() const;
};

/// Visual inputs for a list of image ids under the configured mode; empty
/// optionals when the mode is `none`.
std::vector<std::optional<VisualFeatures>> load_visual_inputs(const RunConfig& run,
                                                              const std::vector<std::string>& image_ids);

/// Encodes a parallel corpus into examples, attaching visual inputs when given.
Dataset make_dataset(const Bitext& bitext, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                     std::vector<std::optional<VisualFeatures>> visual = {});

}  // namespace mmt
