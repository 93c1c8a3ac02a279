#pragma once

// Experiment configuration files: a TOML subset or JSON, both read into a
// JSON tree.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gderiv {

using Json = nlohmann::json;

/// Invalid configuration. `field` is a dotted path ("model.H") or "line N".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error("config error at " + field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Tables, dotted headers, key = value with strings, integers, floats,
/// booleans, arrays and inline tables, and # comments. Dates and arrays of
/// tables are not supported.
Json parse_toml(std::string_view text);

/// JSON when the first significant character is '{', TOML otherwise.
Json parse_config_text(std::string_view text);
Json load_config_file(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace gderiv
