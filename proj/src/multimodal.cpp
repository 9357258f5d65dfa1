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

#include "mmt/multimodal.hpp"

#include "mmt/text_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mmt {

void validate(const VisualFeatures& v) {
  if (const auto* bag = std::get_if<BagOfObjects>(&v)) {
    if (bag->counts.size() != static_cast<std::size_t>(kBagOfObjectsWidth)) {
      throw ShapeError("bag-of-objects vector must have 545 entries, got " +
                       std::to_string(bag->counts.size()));
    }
    for (int c : bag->counts) {
      if (c < 0) throw std::invalid_argument("bag-of-objects count is negative");
    }
  } else if (const auto* s = std::get_if<SpatialFeatures>(&v)) {
    if (s->rows.rows() == 0 || s->rows.cols() == 0) {
      throw ShapeError("spatial features need K > 0 and N > 0");
    }
  } else {
    const auto& o = std::get<ObjectEmbeddings>(v);
    if (o.rows.cols() != kObjectEmbeddingWidth && o.rows.rows() != 0) {
      throw ShapeError("object embeddings must be 50 wide, got " + std::to_string(o.rows.cols()));
    }
  }
}

bool feature_matches_mode(const VisualFeatures& v, VisualMode mode) {
  switch (mode) {
    case VisualMode::Sum: return std::holds_alternative<BagOfObjects>(v);
    case VisualMode::Att: return std::holds_alternative<SpatialFeatures>(v);
    case VisualMode::Obj: return std::holds_alternative<ObjectEmbeddings>(v);
    case VisualMode::None: return false;
  }
  return false;
}

ObjectVocabulary::ObjectVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() != static_cast<std::size_t>(kBagOfObjectsWidth)) {
    throw std::invalid_argument("object vocabulary must list exactly 545 categories, got " +
                                std::to_string(names_.size()));
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate object category '" + names_[i] + "'");
    }
  }
}

ObjectVocabulary ObjectVocabulary::load(const std::filesystem::path& path) {
  std::vector<std::string> names;
  for (auto& line : read_lines(path)) {
    if (!line.empty()) names.push_back(std::move(line));
  }
  return ObjectVocabulary(std::move(names));
}

std::optional<int> ObjectVocabulary::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int ObjectVocabulary::index_of(const std::string& name) const {
  auto idx = find(name);
  if (!idx) throw std::invalid_argument("unknown object category '" + name + "'");
  return *idx;
}

void ObjectVocabulary::set_embeddings(const std::map<std::string, std::vector<float>>& table) {
  Matrix<float> m(static_cast<Index>(names_.size()), kObjectEmbeddingWidth);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    auto it = table.find(names_[i]);
    if (it == table.end()) {
      throw std::invalid_argument("embedding table has no row for category '" + names_[i] + "'");
    }
    if (it->second.size() != static_cast<std::size_t>(kObjectEmbeddingWidth)) {
      throw ShapeError("embedding for '" + names_[i] + "' is not 50-dimensional");
    }
    for (int j = 0; j < kObjectEmbeddingWidth; ++j) {
      m(static_cast<Index>(i), j) = it->second[static_cast<std::size_t>(j)];
    }
  }
  embeddings_ = std::move(m);
}

BagOfObjects bag_of_objects(const std::vector<std::string>& detections, const ObjectVocabulary& vocab) {
  BagOfObjects bag;
  bag.counts.assign(static_cast<std::size_t>(kBagOfObjectsWidth), 0);
  for (const auto& name : detections) ++bag.counts[static_cast<std::size_t>(vocab.index_of(name))];
  return bag;
}

ObjectEmbeddings object_embeddings(const std::vector<std::string>& detections,
                                   const ObjectVocabulary& vocab) {
  if (!vocab.has_embeddings()) {
    throw std::invalid_argument("object_embeddings: vocabulary has no embedding table");
  }
  ObjectEmbeddings out;
  out.rows.resize(static_cast<Index>(detections.size()), kObjectEmbeddingWidth);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    out.rows.row(static_cast<Index>(i)) = vocab.embeddings().row(vocab.index_of(detections[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', 'F'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  bool done() const { return pos_ == data_.size(); }
  std::size_t offset() const { return pos_; }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw FormatError("spatial feature file truncated at byte " + std::to_string(pos_));
    }
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void SpatialFeatureFile::write(const std::filesystem::path& path) const {
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  for (const auto& [id, e] : images) {
    if (e.values.size() != static_cast<std::size_t>(e.filters) * e.grid * e.grid) {
      throw ShapeError("spatial entry '" + id + "' has " + std::to_string(e.values.size()) +
                       " values, expected K*N*N");
    }
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
    put_u32(out, static_cast<std::uint32_t>(e.filters));
    put_u32(out, static_cast<std::uint32_t>(e.grid));
    put_u32(out, static_cast<std::uint32_t>(e.grid));
    for (float v : e.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  write_binary(path, out);
}

SpatialFeatureFile SpatialFeatureFile::read(const std::filesystem::path& path) {
  ByteReader in(read_binary(path));
  std::string magic;
  try {
    magic = in.bytes(4);
  } catch (const FormatError&) {
    throw FormatError("not a spatial feature file (missing MMTF magic)");
  }
  if (magic != std::string(kMagic, 4)) throw FormatError("not a spatial feature file (bad magic)");
  const auto version = in.u8();
  if (version != kVersion) {
    throw FormatError("unsupported spatial feature version " + std::to_string(version));
  }
  SpatialFeatureFile file;
  while (!in.done()) {
    const std::size_t at = in.offset();
    const auto id_len = in.u32();
    std::string id = in.bytes(id_len);
    Entry e;
    const auto k = static_cast<std::int32_t>(in.u32());
    const auto n1 = static_cast<std::int32_t>(in.u32());
    const auto n2 = static_cast<std::int32_t>(in.u32());
    if (k <= 0 || n1 <= 0 || n1 != n2) {
      throw FormatError("bad (K, N, N) header for '" + id + "' at byte " + std::to_string(at));
    }
    e.filters = k;
    e.grid = n1;
    e.values.resize(static_cast<std::size_t>(k) * n1 * n1);
    for (auto& v : e.values) v = in.f32();
    file.images.emplace(std::move(id), std::move(e));
  }
  return file;
}

SpatialFeatures to_spatial_features(const SpatialFeatureFile::Entry& entry) {
  const Index cells = static_cast<Index>(entry.grid) * entry.grid;
  SpatialFeatures out;
  out.rows.resize(cells, entry.filters);
  for (Index k = 0; k < entry.filters; ++k) {
    for (Index cell = 0; cell < cells; ++cell) {
      out.rows(cell, k) = entry.values[static_cast<std::size_t>(k * cells + cell)];
    }
  }
  return out;
}

SpatialFeatures load_spatial_features(const std::filesystem::path& path, const std::string& image_id) {
  const auto file = SpatialFeatureFile::read(path);
  auto it = file.images.find(image_id);
  if (it == file.images.end()) {
    throw std::out_of_range("no spatial features for image '" + image_id + "' in " + path.string());
  }
  return to_spatial_features(it->second);
}

std::map<std::string, std::vector<std::string>> read_detections(const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::string>> out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected image_id<TAB>categories");
    }
    std::vector<std::string> cats;
    std::string rest = line.substr(tab + 1);
    std::stringstream ss(rest);
    std::string cat;
    while (std::getline(ss, cat, ',')) {
      if (!cat.empty()) cats.push_back(cat);
    }
    out[line.substr(0, tab)] = std::move(cats);
  }
  return out;
}

std::map<std::string, std::vector<float>> read_embedding_table(const std::filesystem::path& path) {
  std::map<std::string, std::vector<float>> out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name;
    ss >> name;
    std::vector<float> row;
    float v = 0;
    while (ss >> v) row.push_back(v);
    if (row.size() != static_cast<std::size_t>(kObjectEmbeddingWidth)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 50 values for '" +
                        name + "', got " + std::to_string(row.size()));
    }
    out[name] = std::move(row);
  }
  return out;
}

}  // namespace mmt
