#include "nfar/grid.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nfar {

namespace {

void check_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError("grid field contains a non-finite value");
    }
  }
}

} // namespace

GridField::GridField(GridSpec spec, double fill)
    : spec_(spec), v_(static_cast<std::size_t>(spec.size) * spec.size, fill) {
  validate(spec);
  if (!std::isfinite(fill)) {
    throw NumericError("grid fill value is not finite");
  }
}

GridField::GridField(GridSpec spec, std::vector<double> values)
    : spec_(spec), v_(std::move(values)) {
  validate(spec);
  if (v_.size() != static_cast<std::size_t>(spec.size) * spec.size) {
    throw ShapeError("value count " + std::to_string(v_.size()) +
                     " does not match grid " + std::to_string(spec.size) +
                     "x" + std::to_string(spec.size));
  }
  check_finite(v_);
}

double l2_norm_sq(const GridField& f) {
  double acc = 0.0;
  for (double x : f.values()) {
    acc += x * x;
  }
  const double s = f.size();
  return acc / (s * s);
}

double sup_norm(const GridField& f) {
  double m = 0.0;
  for (double x : f.values()) {
    m = std::max(m, std::fabs(x));
  }
  return m;
}

GridField downsample(const GridField& f, GridSpec target) {
  validate(target);
  const int src = f.size();
  if (target.size > src || src % target.size != 0) {
    throw ShapeError("cannot downsample " + std::to_string(src) + "-grid to " +
                     std::to_string(target.size) +
                     "-grid: size is not an integer multiple");
  }
  const int k = src / target.size;
  GridField out(target);
  for (int i = 0; i < target.size; ++i) {
    for (int j = 0; j < target.size; ++j) {
      out(i, j) = f(k * i, k * j);
    }
  }
  return out;
}

namespace io {

std::string format_double(double x) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf, static_cast<std::size_t>(n));
}

void atomic_write(const std::filesystem::path& path, const std::string& data) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open " + tmp + " for writing");
    }
    out << data;
    if (!out) {
      throw IoError("write failed for " + tmp);
    }
  }
  std::filesystem::rename(tmp, path);
}

} // namespace io

void write_csv(const GridField& f, const std::filesystem::path& path) {
  std::string body;
  body.reserve(static_cast<std::size_t>(f.size()) * f.size() * 20);
  for (int i = 0; i < f.size(); ++i) {
    for (int j = 0; j < f.size(); ++j) {
      if (j) body += ',';
      body += io::format_double(f(i, j));
    }
    body += '\n';
  }
  io::atomic_write(path, body);
}

GridField read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<double> values;
  std::string line;
  int rows = 0;
  int cols = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int c = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      double x = 0.0;
      auto [next, ec] = std::from_chars(p, end, x);
      if (ec != std::errc{}) {
        throw IoError("bad number in " + path.string() + " row " +
                      std::to_string(rows));
      }
      values.push_back(x);
      ++c;
      p = next;
      if (p < end && *p == ',') ++p;
    }
    if (cols < 0) cols = c;
    if (c != cols) {
      throw IoError("ragged row in " + path.string());
    }
    ++rows;
  }
  if (rows != cols) {
    throw ShapeError("csv grid is " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", expected square");
  }
  return GridField(GridSpec{rows}, std::move(values));
}

std::string to_json(const GridField& f) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < f.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < f.size(); ++j) {
      row.push_back(f(i, j));
    }
    rows.push_back(std::move(row));
  }
  nlohmann::json j{{"size", f.size()}, {"values", std::move(rows)}};
  return j.dump();
}

GridField field_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const int size = j.at("size").get<int>();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(size) * size);
  for (const auto& row : j.at("values")) {
    for (const auto& x : row) {
      values.push_back(x.get<double>());
    }
  }
  return GridField(GridSpec{size}, std::move(values));
}

} // namespace nfar
