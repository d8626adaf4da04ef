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

#include "curio/kvtext.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "curio/errors.hpp"

namespace curio {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* want) {
  throw ConfigError("key '" + std::string(key) + "': expected " + want + ", got '" +
                    std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, const char* want) {
  const std::string_view v = trim(value);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, value, want);
  return out;
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text) {
  std::vector<KeyValue> out;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    out.push_back({key, std::string(trim(line.substr(eq + 1))), line_no});
    if (end == text.size()) break;
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_words(std::string_view value) {
  std::vector<std::string> out;
  std::istringstream in{std::string(value)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

int parse_int(std::string_view key, std::string_view value) {
  return parse_number<int>(key, value, "an integer");
}

long long parse_int64(std::string_view key, std::string_view value) {
  return parse_number<long long>(key, value, "an integer");
}

unsigned long long parse_uint64(std::string_view key, std::string_view value) {
  return parse_number<unsigned long long>(key, value, "a non-negative integer");
}

double parse_double(std::string_view key, std::string_view value) {
  return parse_number<double>(key, value, "a number");
}

bool parse_bool(std::string_view key, std::string_view value) {
  const std::string_view v = trim(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, value, "a boolean");
}

}  // namespace curio
