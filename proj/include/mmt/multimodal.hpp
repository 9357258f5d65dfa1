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
#include "mmt/nn.hpp"
#include "mmt/tensor.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace mmt {

/// Convolutional feature map flattened to N*N rows of K filters.
struct SpatialFeatures {
  Matrix<float> rows;
};

/// Per-category detection counts, exactly 545 entries.
struct BagOfObjects {
  std::vector<int> counts;
};

/// One 50-d category embedding per detected object; may be empty.
struct ObjectEmbeddings {
  Matrix<float> rows;
};

using VisualFeatures = std::variant<SpatialFeatures, BagOfObjects, ObjectEmbeddings>;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a visual input has no rows to attend over.
class NoVisualKeys : public std::runtime_error {
 public:
  NoVisualKeys() : std::runtime_error("no visual keys") {}
};

/// Checks the variant invariants (non-negative counts, widths).
void validate(const VisualFeatures& v);

/// Whether `v` is the feature kind a visual mode consumes.
bool feature_matches_mode(const VisualFeatures& v, VisualMode mode);

class ObjectVocabulary {
 public:
  ObjectVocabulary() = default;
  /// Requires exactly 545 unique names.
  explicit ObjectVocabulary(std::vector<std::string> names);

  static ObjectVocabulary load(const std::filesystem::path& path);

  std::size_t size() const { return names_.size(); }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  std::optional<int> find(const std::string& name) const;
  int index_of(const std::string& name) const;  // throws on unknown names

  /// Rows are looked up by category; every category needs a row.
  void set_embeddings(const std::map<std::string, std::vector<float>>& table);
  bool has_embeddings() const { return embeddings_.rows() != 0; }
  const Matrix<float>& embeddings() const { return embeddings_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  Matrix<float> embeddings_;
};

BagOfObjects bag_of_objects(const std::vector<std::string>& detections, const ObjectVocabulary& vocab);
ObjectEmbeddings object_embeddings(const std::vector<std::string>& detections,
                                   const ObjectVocabulary& vocab);

// Files ----------------------------------------------------------------------

/// Binary container: "MMTF", version byte, then per image a u32 id length,
/// the UTF-8 id, three i32 (K, N, N) and K*N*N f32 values, filter-major,
/// all little-endian.
struct SpatialFeatureFile {
  static constexpr std::uint8_t kVersion = 1;

  /// Maps in K x (N*N) filter-major layout, keyed by image id.
  struct Entry {
    int filters = 0;
    int grid = 0;
    std::vector<float> values;
  };
  std::map<std::string, Entry> images;

  void write(const std::filesystem::path& path) const;
  static SpatialFeatureFile read(const std::filesystem::path& path);
};

/// Reads `image_id` and reshapes its K x N x N map to N^2 rows of width K,
/// so row r is grid cell (r / N, r % N).
SpatialFeatures load_spatial_features(const std::filesystem::path& path, const std::string& image_id);
SpatialFeatures to_spatial_features(const SpatialFeatureFile::Entry& entry);

/// `image_id<TAB>category,category,...` per line.
std::map<std::string, std::vector<std::string>> read_detections(const std::filesystem::path& path);

/// `category v1 ... v50` per line.
std::map<std::string, std::vector<float>> read_embedding_table(const std::filesystem::path& path);

// Conditioning ---------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> visual_rows_tensor(const VisualFeatures& v) {
  if (const auto* s = std::get_if<SpatialFeatures>(&v)) {
    return Tensor<Scalar>(s->rows.template cast<Scalar>());
  }
  if (const auto* o = std::get_if<ObjectEmbeddings>(&v)) {
    return Tensor<Scalar>(o->rows.template cast<Scalar>());
  }
  const auto& bag = std::get<BagOfObjects>(v);
  Matrix<Scalar> row(1, static_cast<Index>(bag.counts.size()));
  for (std::size_t i = 0; i < bag.counts.size(); ++i) {
    row(0, static_cast<Index>(i)) = static_cast<Scalar>(bag.counts[i]);
  }
  return Tensor<Scalar>(std::move(row));
}

/// Adds image_vec * projection to every memory row; the mask is untouched.
template <typename Scalar, typename Memory>
Memory condition_aic(const Memory& mem, const Tensor<Scalar>& image_vec,
                     const Tensor<Scalar>& projection) {
  if (image_vec.rows() != 1 || image_vec.cols() != projection.rows() ||
      projection.cols() != mem.states.cols()) {
    throw ShapeError("condition_aic: image vector " + image_vec.shape() + " and projection " +
                     projection.shape() + " do not map onto memory " + mem.states.shape());
  }
  Memory out = mem;
  out.states = add_row(mem.states, matmul(image_vec, projection));
  return out;
}

/// Linear projection of each visual row to d_model. Empty object lists give
/// no keys (nullopt); bag vectors belong to the additive path.
template <typename Scalar>
std::optional<Tensor<Scalar>> project_visual(const VisualFeatures& v, const Tensor<Scalar>& projection) {
  if (std::holds_alternative<BagOfObjects>(v)) {
    throw std::invalid_argument("project_visual: bag-of-objects vectors use additive conditioning");
  }
  Tensor<Scalar> rows = visual_rows_tensor<Scalar>(v);
  if (rows.rows() == 0) return std::nullopt;
  if (rows.cols() != projection.rows()) {
    throw ShapeError("project_visual: rows of width " + std::to_string(rows.cols()) +
                     " vs projection " + projection.shape());
  }
  return matmul(rows, projection);
}

/// Queries from x; keys and values are the projected visual rows.
template <typename Scalar>
Tensor<Scalar> visual_cross_attention(const Tensor<Scalar>& x, const Tensor<Scalar>& visual_keys,
                                      const MhaWeights<Scalar>& w,
                                      AttentionTrace<Scalar>* trace = nullptr) {
  if (visual_keys.rows() == 0) throw NoVisualKeys();
  return multi_head_attention(x, visual_keys, visual_keys, nullptr, w, trace);
}

}  // namespace mmt
