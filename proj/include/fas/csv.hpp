#pragma once

// Minimal comma-separated reader for the project's fixed-schema files. Fields
// are unquoted; surrounding whitespace and '\r' are trimmed.

#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "fas/error.hpp"

namespace fas {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

class CsvReader {
 public:
  CsvReader(std::istream& in, std::vector<std::string> header) : in_(in), header_(std::move(header)) {
    std::string line;
    if (!std::getline(in_, line)) throw DataError("empty file, expected header '" + joined_header() + "'");
    line_ = 1;
    if (split_csv_line(line) != header_) {
      throw DataError("line 1: bad header '" + trim(line) + "', expected '" + joined_header() + "'");
    }
  }

  /// Next non-blank row, validated for field count.
  std::optional<std::vector<std::string>> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (trim(line).empty()) continue;
      auto fields = split_csv_line(line);
      if (fields.size() != header_.size()) {
        fail("expected " + std::to_string(header_.size()) + " fields, got " + std::to_string(fields.size()));
      }
      return fields;
    }
    return std::nullopt;
  }

  std::size_t line() const { return line_; }

  [[noreturn]] void fail(const std::string& message) const {
    throw DataError("line " + std::to_string(line_) + ": " + message);
  }

  double parse_double(const std::string& field, const std::string& what) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(field, &used);
      if (used == field.size()) return v;
    } catch (const std::logic_error&) {
    }
    fail("invalid " + what + " '" + field + "'");
  }

 private:
  std::string joined_header() const {
    std::string s;
    for (std::size_t i = 0; i < header_.size(); ++i) s += (i ? "," : "") + header_[i];
    return s;
  }

  std::istream& in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

}  // namespace fas
