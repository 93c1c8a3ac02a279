#include "gderiv/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

namespace gderiv {

namespace {

class TomlReader {
 public:
  explicit TomlReader(std::string_view text) : text_(text) {}

  Json parse() {
    Json root = Json::object();
    Json* table = &root;
    std::string table_name;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        if (peek() == '[') fail("arrays of tables are not supported");
        skip_spaces();
        auto path = read_key_path();
        skip_spaces();
        expect(']');
        table = &root;
        table_name.clear();
        for (const auto& part : path) {
          table_name += (table_name.empty() ? "" : ".") + part;
          Json& next = (*table)[part];
          if (next.is_null()) next = Json::object();
          if (!next.is_object()) fail("'" + table_name + "' is not a table");
          table = &next;
        }
        if (!defined_tables_.insert(table_name).second) fail("table [" + table_name + "] defined twice");
        end_of_line();
        continue;
      }
      auto path = read_key_path();
      skip_spaces();
      expect('=');
      skip_spaces();
      Json value = read_value();
      assign(*table, path, std::move(value));
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigError("line " + std::to_string(line_), message);
  }

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[pos_]; }

  void advance() {
    if (peek() == '\n') ++line_;
    ++pos_;
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    advance();
  }

  void skip_spaces() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        advance();
      } else {
        break;
      }
    }
  }

  // Whitespace, comments and newlines inside arrays and inline tables.
  void skip_insignificant() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        advance();
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected text after value");
    advance();
  }

  std::string read_key() {
    if (peek() == '"') return read_basic_string();
    if (peek() == '\'') return read_literal_string();
    std::string key;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') {
      key += peek();
      ++pos_;
    }
    if (key.empty()) fail("expected a key");
    return key;
  }

  std::vector<std::string> read_key_path() {
    std::vector<std::string> path{read_key()};
    skip_spaces();
    while (peek() == '.') {
      ++pos_;
      skip_spaces();
      path.push_back(read_key());
      skip_spaces();
    }
    return path;
  }

  void assign(Json& table, const std::vector<std::string>& path, Json value) {
    Json* target = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      Json& next = (*target)[path[i]];
      if (next.is_null()) next = Json::object();
      if (!next.is_object()) fail("'" + path[i] + "' is not a table");
      target = &next;
    }
    if (target->contains(path.back())) fail("key '" + path.back() + "' defined twice");
    (*target)[path.back()] = std::move(value);
  }

  std::string read_basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = peek();
      ++pos_;
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      char e = peek();
      ++pos_;
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  std::string read_literal_string() {
    expect('\'');
    std::string out;
    while (peek() != '\'') {
      if (eof() || peek() == '\n') fail("unterminated string");
      out += peek();
      ++pos_;
    }
    ++pos_;
    return out;
  }

  Json read_value() {
    const char c = peek();
    if (c == '"') return read_basic_string();
    if (c == '\'') return read_literal_string();
    if (c == '[') return read_array();
    if (c == '{') return read_inline_table();
    std::string token;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_')) {
      token += peek();
      ++pos_;
    }
    if (token.empty()) fail("expected a value");
    if (token == "true") return true;
    if (token == "false") return false;
    return read_number(token);
  }

  Json read_number(std::string token) {
    std::string digits;
    for (char ch : token) {
      if (ch != '_') digits += ch;
    }
    std::string_view body = digits;
    const bool negative = !body.empty() && body.front() == '-';
    if (!body.empty() && (body.front() == '+' || body.front() == '-')) body.remove_prefix(1);
    if (body == "inf") return negative ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    const bool is_float = body.find_first_of(".eE") != std::string_view::npos;
    if (!is_float) {
      std::int64_t v = 0;
      auto res = std::from_chars(body.data(), body.data() + body.size(), v);
      if (res.ec != std::errc() || res.ptr != body.data() + body.size()) fail("invalid value '" + token + "'");
      return negative ? -v : v;
    }
    double v = 0.0;
    auto res = std::from_chars(body.data(), body.data() + body.size(), v);
    if (res.ec != std::errc() || res.ptr != body.data() + body.size()) fail("invalid value '" + token + "'");
    return negative ? -v : v;
  }

  Json read_array() {
    expect('[');
    Json out = Json::array();
    skip_insignificant();
    while (peek() != ']') {
      out.push_back(read_value());
      skip_insignificant();
      if (peek() == ',') {
        advance();
        skip_insignificant();
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
    advance();
    return out;
  }

  Json read_inline_table() {
    expect('{');
    Json out = Json::object();
    skip_spaces();
    while (peek() != '}') {
      auto path = read_key_path();
      skip_spaces();
      expect('=');
      skip_spaces();
      assign(out, path, read_value());
      skip_spaces();
      if (peek() == ',') {
        ++pos_;
        skip_spaces();
      } else if (peek() != '}') {
        fail("expected ',' or '}' in inline table");
      }
    }
    ++pos_;
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::set<std::string> defined_tables_;
};

}  // namespace

Json parse_toml(std::string_view text) { return TomlReader(text).parse(); }

Json parse_config_text(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    try {
      return Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ConfigError("byte " + std::to_string(e.byte), "invalid JSON");
    }
  }
  return parse_toml(text);
}

Json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

}  // namespace gderiv
