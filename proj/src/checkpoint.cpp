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

#include "mmt/checkpoint.hpp"

#include "mmt/text_io.hpp"

#include <bit>
#include <cstring>

namespace mmt {
namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', 'C'};
constexpr const char* kMetaPrefix = "meta.";

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointFormatError(std::string("truncated checkpoint while reading ") + what, pos_);
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what), 4);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    return std::string(take(n, what), n);
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  if (!(config == o.config) || metadata != o.metadata || tensors.size() != o.tensors.size()) return false;
  for (const auto& [name, m] : tensors) {
    auto it = o.tensors.find(name);
    if (it == o.tensors.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols()) return false;
    if (std::memcmp(m.data(), it->second.data(), sizeof(float) * static_cast<std::size_t>(m.size())) != 0) {
      return false;
    }
  }
  return true;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string header;
  for (const auto& [k, v] : ckpt.config.to_map()) header += k + "=" + v + "\n";
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata '" + k + "' contains '=' or a newline");
    }
    header += kMetaPrefix + k + "=" + v + "\n";
  }

  std::string out(kMagic, 4);
  put_u32(out, Checkpoint::kVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    // RowMajor storage is already the on-disk order.
    out.append(reinterpret_cast<const char*>(m.data()), sizeof(float) * static_cast<std::size_t>(m.size()));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(4, "magic"), kMagic, 4) != 0) throw CheckpointFormatError("bad magic, not a checkpoint", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != Checkpoint::kVersion) {
    throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                    std::to_string(Checkpoint::kVersion) + ")",
                                version_at);
  }
  const std::size_t header_at = r.offset();
  const std::string header = r.str("header");

  Checkpoint ckpt;
  std::map<std::string, std::string> config_kv;
  std::size_t start = 0;
  while (start < header.size()) {
    const auto nl = header.find('\n', start);
    const std::string line = header.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? header.size() : nl + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointFormatError("header line without '='", header_at);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key.rfind(kMetaPrefix, 0) == 0) {
      ckpt.metadata[key.substr(std::strlen(kMetaPrefix))] = value;
    } else {
      config_kv[key] = value;
    }
  }
  try {
    ckpt.config = ModelConfig::from_map(config_kv);
  } catch (const std::exception& e) {
    throw CheckpointFormatError(std::string("invalid config in header: ") + e.what(), header_at);
  }

  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    std::string name = r.str("tensor name");
    const std::uint32_t rows = r.u32("tensor rows");
    const std::uint32_t cols = r.u32("tensor cols");
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    const char* data = r.take(n * sizeof(float), "tensor values");
    Matrix<float> m(rows, cols);
    std::memcpy(m.data(), data, n * sizeof(float));
    if (!ckpt.tensors.emplace(std::move(name), std::move(m)).second) {
      throw CheckpointFormatError("duplicate tensor record", at);
    }
  }
  if (!r.done()) throw CheckpointFormatError("trailing bytes after last tensor", r.offset());
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_binary(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_binary(path));
  } catch (const CheckpointFormatError& e) {
    throw CheckpointFormatError(path.string() + ": " + std::string(e.what()).substr(0, std::string(e.what()).rfind(" at byte")),
                                e.offset());
  }
}

Checkpoint make_checkpoint(const TrainModel& model, std::map<std::string, std::string> metadata) {
  return {model.config(), std::move(metadata), model.export_tensors()};
}

TrainModel model_from_checkpoint(const Checkpoint& ckpt) {
  TrainModel model(ckpt.config, 0);
  model.import_tensors(ckpt.tensors);
  return model;
}

void require_config(const Checkpoint& ckpt, const ModelConfig& expected) {
  const auto diffs = config_differences(ckpt.config, expected);
  if (diffs.empty()) return;
  std::string keys;
  for (const auto& d : diffs) keys += (keys.empty() ? "" : ",") + d;
  throw ConfigError(keys, "checkpoint was trained with a different configuration (" + keys + ")");
}

}  // namespace mmt
