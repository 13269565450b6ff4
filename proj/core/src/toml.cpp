#include "nfar/toml.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "nfar/errors.hpp"

namespace nfar::toml {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw ConfigError("toml line " + std::to_string(line) + ": " + what);
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

// Cut a trailing comment, respecting string literals.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

Value parse_scalar(std::string_view text, int line) {
  Value v;
  v.line = line;
  if (text.empty()) fail(line, "empty value");

  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') {
      fail(line, "unterminated string");
    }
    v.kind = Value::Kind::String;
    const auto body = text.substr(1, text.size() - 2);
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '\\' && i + 1 < body.size()) {
        ++i;
        switch (body[i]) {
          case 'n': v.str += '\n'; break;
          case 't': v.str += '\t'; break;
          case '"': v.str += '"'; break;
          case '\\': v.str += '\\'; break;
          default: fail(line, "unsupported escape");
        }
      } else {
        v.str += body[i];
      }
    }
    return v;
  }
  if (text == "true" || text == "false") {
    v.kind = Value::Kind::Boolean;
    v.boolean = text == "true";
    return v;
  }
  const bool looks_float = text.find_first_of(".eE") != std::string_view::npos &&
                           !(text.starts_with("0x"));
  if (!looks_float) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec == std::errc{} && p == text.data() + text.size()) {
      v.kind = Value::Kind::Integer;
      v.integer = out;
      return v;
    }
  }
  double d = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ec == std::errc{} && p == text.data() + text.size()) {
    v.kind = Value::Kind::Float;
    v.real = d;
    return v;
  }
  fail(line, "cannot parse value '" + std::string(text) + "'");
}

Value parse_value(std::string_view text, int line) {
  text = strip(text);
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') fail(line, "unterminated array");
    Value v;
    v.kind = Value::Kind::Array;
    v.line = line;
    std::string_view body = text.substr(1, text.size() - 2);
    // Split on commas outside strings.
    std::size_t start = 0;
    bool in_string = false;
    for (std::size_t i = 0; i <= body.size(); ++i) {
      if (i < body.size() && body[i] == '"') in_string = !in_string;
      if (i == body.size() || (body[i] == ',' && !in_string)) {
        const auto piece = strip(body.substr(start, i - start));
        if (!piece.empty()) {
          v.array.push_back(parse_scalar(piece, line));
        }
        start = i + 1;
      }
    }
    return v;
  }
  return parse_scalar(text, line);
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') {
      return false;
    }
  }
  return true;
}

} // namespace

std::int64_t Value::as_integer() const {
  if (kind != Kind::Integer) fail(line, "expected an integer");
  return integer;
}

double Value::as_double() const {
  if (kind == Kind::Float) return real;
  if (kind == Kind::Integer) return static_cast<double>(integer);
  fail(line, "expected a number");
}

bool Value::as_boolean() const {
  if (kind != Kind::Boolean) fail(line, "expected a boolean");
  return boolean;
}

const std::string& Value::as_string() const {
  if (kind != Kind::String) fail(line, "expected a string");
  return str;
}

std::vector<std::int64_t> Value::as_integer_array() const {
  if (kind != Kind::Array) fail(line, "expected an array");
  std::vector<std::int64_t> out;
  out.reserve(array.size());
  for (const auto& v : array) out.push_back(v.as_integer());
  return out;
}

std::vector<double> Value::as_double_array() const {
  if (kind != Kind::Array) fail(line, "expected an array");
  std::vector<double> out;
  out.reserve(array.size());
  for (const auto& v : array) out.push_back(v.as_double());
  return out;
}

Document parse(const std::string& text) {
  Document doc;
  Table* current = &doc.root;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip(strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      const auto name = std::string(strip(line.substr(1, line.size() - 2)));
      if (!valid_key(name)) fail(line_no, "bad section name '" + name + "'");
      if (doc.sections.count(name)) {
        fail(line_no, "duplicate section [" + name + "]");
      }
      current = &doc.sections[name];
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(line_no, "expected key = value");
    }
    const auto key = std::string(strip(line.substr(0, eq)));
    if (!valid_key(key)) fail(line_no, "bad key '" + key + "'");
    if (current->count(key)) fail(line_no, "duplicate key '" + key + "'");
    (*current)[key] = parse_value(line.substr(eq + 1), line_no);
  }
  return doc;
}

Document load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

} // namespace nfar::toml
