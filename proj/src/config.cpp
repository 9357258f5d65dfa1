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

#include "mmt/config.hpp"

#include <charconv>
#include <cstdio>

namespace mmt {

std::string to_string(SystemKind kind) {
  return kind == SystemKind::Base ? "base" : "delib";
}

std::string to_string(VisualMode mode) {
  switch (mode) {
    case VisualMode::None: return "none";
    case VisualMode::Sum: return "sum";
    case VisualMode::Att: return "att";
    case VisualMode::Obj: return "obj";
  }
  return "none";
}

SystemKind parse_system(const std::string& text) {
  if (text == "base") return SystemKind::Base;
  if (text == "delib") return SystemKind::Deliberation;
  throw ConfigError("system", "expected base|delib, got '" + text + "'");
}

VisualMode parse_visual_mode(const std::string& text) {
  if (text == "none") return VisualMode::None;
  if (text == "sum") return VisualMode::Sum;
  if (text == "att") return VisualMode::Att;
  if (text == "obj") return VisualMode::Obj;
  throw ConfigError("visual", "expected none|sum|att|obj, got '" + text + "'");
}

int default_visual_width(VisualMode mode) {
  switch (mode) {
    case VisualMode::Sum: return kBagOfObjectsWidth;
    case VisualMode::Obj: return kObjectEmbeddingWidth;
    case VisualMode::Att: return 2048;
    case VisualMode::None: return 0;
  }
  return 0;
}

ModelConfig ModelConfig::full_size(int src_vocab, int tgt_vocab) {
  ModelConfig c;
  c.enc_layers = 6;
  c.dec_layers = 6;
  c.delib_layers = 3;
  c.heads = 16;
  c.d_model = 1024;
  c.d_ff = 4096;
  c.d_emb = 1024;
  c.src_vocab = src_vocab;
  c.tgt_vocab = tgt_vocab;
  c.max_len = 256;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](const char* key, int v) {
    if (v <= 0) throw ConfigError(key, "must be positive, got " + std::to_string(v));
  };
  positive("enc_layers", enc_layers);
  positive("dec_layers", dec_layers);
  positive("delib_layers", delib_layers);
  positive("heads", heads);
  positive("d_model", d_model);
  positive("d_ff", d_ff);
  positive("d_emb", d_emb);
  positive("src_vocab", src_vocab);
  positive("tgt_vocab", tgt_vocab);
  positive("max_len", max_len);
  if (d_model % heads != 0) {
    throw ConfigError("heads", "d_model " + std::to_string(d_model) + " not divisible by " +
                                   std::to_string(heads) + " heads");
  }
  if (d_model % 2 != 0) throw ConfigError("d_model", "must be even for sinusoidal positions");
  if (d_emb != d_model) throw ConfigError("d_emb", "must equal d_model (tied output projection)");
  if (delib_layers > dec_layers) {
    throw ConfigError("delib_layers", "must not exceed dec_layers (" + std::to_string(dec_layers) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout", "must lie in [0, 1)");
  if (visual == VisualMode::None) {
    if (visual_width != 0) throw ConfigError("visual_width", "must be 0 without visual input");
  } else {
    positive("visual_width", visual_width);
    if (visual == VisualMode::Sum && visual_width != kBagOfObjectsWidth) {
      throw ConfigError("visual_width", "sum uses the 545-wide bag-of-objects vector");
    }
    if (visual == VisualMode::Obj && visual_width != kObjectEmbeddingWidth) {
      throw ConfigError("visual_width", "obj uses 50-wide category embeddings");
    }
  }
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int parse_int(const std::map<std::string, std::string>& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  int v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key, "expected an integer, got '" + s + "'");
  }
  return v;
}

double parse_double(const std::map<std::string, std::string>& kv, const std::string& key,
                    double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + it->second + "'");
  }
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"enc_layers", std::to_string(enc_layers)},
      {"dec_layers", std::to_string(dec_layers)},
      {"delib_layers", std::to_string(delib_layers)},
      {"heads", std::to_string(heads)},
      {"d_model", std::to_string(d_model)},
      {"d_ff", std::to_string(d_ff)},
      {"d_emb", std::to_string(d_emb)},
      {"src_vocab", std::to_string(src_vocab)},
      {"tgt_vocab", std::to_string(tgt_vocab)},
      {"dropout", format_double(dropout)},
      {"max_len", std::to_string(max_len)},
      {"system", to_string(system)},
      {"visual", to_string(visual)},
      {"visual_width", std::to_string(visual_width)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.enc_layers = parse_int(kv, "enc_layers", c.enc_layers);
  c.dec_layers = parse_int(kv, "dec_layers", c.dec_layers);
  c.delib_layers = parse_int(kv, "delib_layers", c.delib_layers);
  c.heads = parse_int(kv, "heads", c.heads);
  c.d_model = parse_int(kv, "d_model", c.d_model);
  c.d_ff = parse_int(kv, "d_ff", c.d_ff);
  c.d_emb = parse_int(kv, "d_emb", c.d_model);
  c.src_vocab = parse_int(kv, "src_vocab", c.src_vocab);
  c.tgt_vocab = parse_int(kv, "tgt_vocab", c.tgt_vocab);
  c.dropout = parse_double(kv, "dropout", c.dropout);
  c.max_len = parse_int(kv, "max_len", c.max_len);
  if (auto it = kv.find("system"); it != kv.end()) c.system = parse_system(it->second);
  if (auto it = kv.find("visual"); it != kv.end()) c.visual = parse_visual_mode(it->second);
  c.visual_width = parse_int(kv, "visual_width", default_visual_width(c.visual));
  return c;
}

std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::string> out;
  const auto ma = a.to_map();
  const auto mb = b.to_map();
  for (const auto& [key, value] : ma) {
    if (mb.at(key) != value) out.push_back(key + " (" + value + " vs " + mb.at(key) + ")");
  }
  return out;
}

}  // namespace mmt
