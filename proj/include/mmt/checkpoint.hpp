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
#include "mmt/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace mmt {

/// Self-describing model file: "MMTC", u32 version, u32-length-prefixed
/// key=value text (config, then metadata under "meta."), u32 tensor count,
/// then per tensor a u32-length name, u32 rows, u32 cols and rows*cols f32.
/// All integers and floats are little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig config;
  std::map<std::string, std::string> metadata;  // best_bleu, step, seed, ...
  std::map<std::string, Matrix<float>> tensors;

  bool operator==(const Checkpoint& o) const;
};

class CheckpointFormatError : public std::runtime_error {
 public:
  CheckpointFormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const TrainModel& model, std::map<std::string, std::string> metadata = {});
/// Builds the model the config describes and loads every tensor.
TrainModel model_from_checkpoint(const Checkpoint& ckpt);

/// Throws ConfigError naming the differing fields when a checkpoint does not
/// match the architecture a run expects.
void require_config(const Checkpoint& ckpt, const ModelConfig& expected);

}  // namespace mmt
