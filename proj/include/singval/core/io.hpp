// Copyright 2026 The singval Authors
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

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>

#include "singval/core/error.hpp"

namespace singval::io {

/// Shortest-safe round-trip text for a double ("%.17g").
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Minimal CSV writer: full-precision doubles, comma separated, '\n' rows.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
  }

  /// A leading '#' comment line (provenance headers).
  void comment(std::string_view text) { out_ << "# " << text << '\n'; }

  void header(std::initializer_list<std::string_view> columns) {
    bool first = true;
    for (auto c : columns) {
      if (!first) out_ << ',';
      out_ << c;
      first = false;
    }
    out_ << '\n';
  }

  template <class... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((write_field(fields, first)), ...);
    out_ << '\n';
  }

 private:
  void write_field(double v, bool& first) { sep(first); out_ << format_double(v); }
  void write_field(int v, bool& first) { sep(first); out_ << v; }
  void write_field(long v, bool& first) { sep(first); out_ << v; }
  void write_field(unsigned long v, bool& first) { sep(first); out_ << v; }
  void write_field(unsigned long long v, bool& first) { sep(first); out_ << v; }
  void write_field(long long v, bool& first) { sep(first); out_ << v; }
  void write_field(unsigned v, bool& first) { sep(first); out_ << v; }
  void write_field(std::string_view v, bool& first) { sep(first); out_ << v; }
  void write_field(const std::string& v, bool& first) { sep(first); out_ << v; }
  void write_field(const char* v, bool& first) { sep(first); out_ << v; }
  void sep(bool& first) {
    if (!first) out_ << ',';
    first = false;
  }

  std::ofstream out_;
};

/// 64-bit FNV-1a, used to name output directories by config content.
inline std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace singval::io
