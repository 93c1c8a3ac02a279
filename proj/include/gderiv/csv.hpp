#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "gderiv/errors.hpp"

namespace gderiv {

/// Shortest round-trip decimal form, so output is identical across runs.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class CsvCell {
 public:
  CsvCell(double v) : text_(format_double(v)) {}
  CsvCell(int v) : text_(std::to_string(v)) {}
  CsvCell(long v) : text_(std::to_string(v)) {}
  CsvCell(long long v) : text_(std::to_string(v)) {}
  CsvCell(unsigned long v) : text_(std::to_string(v)) {}
  CsvCell(unsigned long long v) : text_(std::to_string(v)) {}
  CsvCell(unsigned v) : text_(std::to_string(v)) {}
  CsvCell(bool v) : text_(v ? "true" : "false") {}
  CsvCell(const char* v) : text_(quote(v)) {}
  CsvCell(std::string_view v) : text_(quote(v)) {}
  CsvCell(const std::string& v) : text_(quote(v)) {}

  const std::string& text() const noexcept { return text_; }

 private:
  static std::string quote(std::string_view v) {
    if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
    std::string out = "\"";
    for (char c : v) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }
  std::string text_;
};

/// Minimal CSV file writer with a fixed header.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
      : CsvWriter(path, std::vector<std::string>(header.begin(), header.end())) {}

  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary), columns_(header.size()) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    std::string line;
    for (const auto& h : header) {
      if (!line.empty()) line += ',';
      line += h;
    }
    out_ << line << '\n';
  }

  /// A free-form line (summary rows).
  void raw_line(const std::string& line) { out_ << line << '\n'; }

  void row(std::initializer_list<CsvCell> cells) { row(std::vector<CsvCell>(cells)); }

  void row(const std::vector<CsvCell>& cells) {
    if (cells.size() != columns_) throw ContractError("CSV row has the wrong number of cells");
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) line += ',';
      line += cells[i].text();
    }
    out_ << line << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace gderiv
