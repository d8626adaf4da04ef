// Copyright 2026 The Curio Authors
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

// Flat "key = value" text with '#' comments, used for configs and map specs.

#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace curio {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses the text; throws ConfigError naming the line on malformed input
/// or duplicate keys.
std::vector<KeyValue> parse_key_values(std::string_view text);

std::string read_text_file(const std::string& path);

/// Whitespace-separated tokens of a value.
std::vector<std::string> split_words(std::string_view value);

// Strict conversions; throw ConfigError mentioning `key` on failure.
int parse_int(std::string_view key, std::string_view value);
long long parse_int64(std::string_view key, std::string_view value);
unsigned long long parse_uint64(std::string_view key, std::string_view value);
double parse_double(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);

}  // namespace curio
