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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mmt {

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

std::string read_binary(const std::filesystem::path& path);
void write_binary(const std::filesystem::path& path, const std::string& bytes);

/// Splits on runs of spaces/tabs.
std::vector<std::string> split_tokens(std::string_view line);
std::string join_tokens(const std::vector<std::string>& tokens);

std::string to_lower(std::string_view s);

}  // namespace mmt
