#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nfar::toml {

/// Scalar or homogeneous-array value of the TOML subset used by config
/// files: integers, floats, booleans, double-quoted strings, and flat
/// arrays thereof.
struct Value {
  enum class Kind { Integer, Float, Boolean, String, Array };
  Kind kind = Kind::Integer;
  std::int64_t integer = 0;
  double real = 0.0;
  bool boolean = false;
  std::string str;
  std::vector<Value> array;
  int line = 0;

  std::int64_t as_integer() const;
  double as_double() const; // accepts integer values too
  bool as_boolean() const;
  const std::string& as_string() const;
  std::vector<std::int64_t> as_integer_array() const;
  std::vector<double> as_double_array() const;
};

using Table = std::map<std::string, Value>;

/// Parsed document: top-level keys plus one table per [section].
struct Document {
  Table root;
  std::map<std::string, Table> sections;
};

Document parse(const std::string& text);
Document load(const std::filesystem::path& path);

} // namespace nfar::toml
