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

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmt {

enum class SystemKind { Base, Deliberation };

/// How image information enters the model. `Sum` adds a projected
/// bag-of-objects vector to the encoder memory; `Att` and `Obj` attend over
/// spatial feature rows or object-category embeddings.
enum class VisualMode { None, Sum, Att, Obj };

namespace token {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kBlank = 4;
inline constexpr int kReservedCount = 5;
}  // namespace token

inline constexpr int kBagOfObjectsWidth = 545;
inline constexpr int kObjectEmbeddingWidth = 50;

std::string to_string(SystemKind kind);
std::string to_string(VisualMode mode);
SystemKind parse_system(const std::string& text);
VisualMode parse_visual_mode(const std::string& text);

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::invalid_argument(key + ": " + message), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ModelConfig {
  int enc_layers = 2;
  int dec_layers = 2;
  int delib_layers = 2;
  int heads = 4;
  int d_model = 128;
  int d_ff = 256;
  int d_emb = 128;
  int src_vocab = 0;
  int tgt_vocab = 0;
  double dropout = 0.1;
  int max_len = 64;
  SystemKind system = SystemKind::Base;
  VisualMode visual = VisualMode::None;
  // Row width of the visual input: K filters for `att`, 50 for `obj`,
  // 545 for `sum`.
  int visual_width = 0;

  /// 6/6/3 layers at transformer_big widths.
  static ModelConfig full_size(int src_vocab, int tgt_vocab);

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

/// Names of fields that differ between two configs.
std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b);

/// Expected row width of visual input for a mode (0 for None).
int default_visual_width(VisualMode mode);

}  // namespace mmt
