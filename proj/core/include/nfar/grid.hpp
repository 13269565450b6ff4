#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nfar/errors.hpp"

namespace nfar {

/// Uniform S x S grid over [0,1)^2 with points at i/S (left endpoints).
/// The quadrature weight of every point is 1/S^2.
struct GridSpec {
  int size = 0;

  double spacing() const { return 1.0 / size; }
  double coord(int i) const { return static_cast<double>(i) / size; }
  int point_count() const { return size * size; }

  bool operator==(const GridSpec&) const = default;
};

inline void validate(const GridSpec& spec) {
  if (spec.size < 1) {
    throw ShapeError("grid size must be positive, got " +
                     std::to_string(spec.size));
  }
}

/// Real values sampled on a GridSpec, values(i, j) = f(i/S, j/S).
/// Entries are kept finite; simulation overflow is caught by the caller
/// before construction.
class GridField {
public:
  GridField() = default;
  explicit GridField(GridSpec spec, double fill = 0.0);
  GridField(GridSpec spec, std::vector<double> values);

  const GridSpec& spec() const { return spec_; }
  int size() const { return spec_.size; }

  double operator()(int i, int j) const { return v_[i * spec_.size + j]; }
  double& operator()(int i, int j) { return v_[i * spec_.size + j]; }

  std::span<const double> values() const { return v_; }
  std::span<double> values() { return v_; }

private:
  GridSpec spec_{};
  std::vector<double> v_;
};

/// Quadrature squared L2 norm: (1/S^2) * sum of squared entries.
double l2_norm_sq(const GridField& f);

/// Max absolute entry.
double sup_norm(const GridField& f);

/// Point-evaluation downsampling: out(i, j) = f(k*i, k*j) where
/// k = f.size / target.size. The source size must be a multiple of the
/// target size so the coarse grid points coincide with fine ones.
GridField downsample(const GridField& f, GridSpec target);

/// CSV: S rows of S comma-separated decimal values, row-major, full
/// double precision.
void write_csv(const GridField& f, const std::filesystem::path& path);
GridField read_csv(const std::filesystem::path& path);

/// JSON wrapper {"size": S, "values": [[...], ...]}.
std::string to_json(const GridField& f);
GridField field_from_json(const std::string& text);

namespace io {
/// Shortest round-trip decimal formatting used by every CSV/JSON writer,
/// so that equal doubles always serialize to equal bytes.
std::string format_double(double x);
/// Write-temp-then-rename so concurrent readers never observe a partial
/// file.
void atomic_write(const std::filesystem::path& path, const std::string& data);
} // namespace io

} // namespace nfar
