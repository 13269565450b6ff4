#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nfar/gp.hpp"
#include "nfar/grid.hpp"

namespace nfar {

/// Scalar nonlinearity applied pointwise inside the transition operator.
/// CosSin is the experiment's tau(x) = 1.5 + 2.5 cos(x) + 2 sin(2x); Zero
/// and Identity exist for mixing diagnostics (pure-noise and linear
/// variants).
enum class Nonlinearity { CosSin, Zero, Identity };

double nonlinearity(Nonlinearity tau, double x);
std::string to_string(Nonlinearity tau);
Nonlinearity nonlinearity_from_string(const std::string& name);

/// Hammerstein transition specification: amplitude * K(u - v) composed
/// with the pointwise nonlinearity, plus an optional sup-norm truncation
/// level (infinity = untruncated, the experiment default).
struct NfarModel {
  StationaryKernel kernel;
  double amplitude = 5.0;
  Nonlinearity tau = Nonlinearity::CosSin;
  GridSpec grid;
  double trunc_level = std::numeric_limits<double>::infinity();
};

/// Urysohn kernel of the transition operator:
/// amplitude * K(u1-v1, u2-v2) * tau(x).
double true_kernel(const NfarModel& m, double u1, double u2, double v1,
                   double v2, double x);

/// Quadrature application of the transition operator on the model grid:
/// out(i1,j1) = (1/S^2) sum_{i2,j2} amplitude*K((i1-i2)/S,(j1-j2)/S) *
/// tau(z(i2,j2)). Returns the zero field when a finite truncation level is
/// exceeded. Direct summation through a kernel lookup table indexed by
/// integer offsets; the fixed summation order is part of the determinism
/// contract.
GridField apply_true_operator(const NfarModel& m, const GridField& z);

/// FFT-convolution fast path for large grids. Matches the direct sum to
/// 1e-10; opt-in because the roundoff differs from the direct order.
GridField apply_true_operator_fft(const NfarModel& m, const GridField& z);

/// One transition: apply_true_operator(m, z) + noise.
GridField step(const NfarModel& m, const GridField& z,
               const GridField& noise);

struct PathMeta {
  std::uint64_t noise_stream = 0;
  int burn_in = 0;
  double kernel_scale = 0.0;
  double amplitude = 0.0;
  Nonlinearity tau = Nonlinearity::CosSin;
  double trunc_level = std::numeric_limits<double>::infinity();
};

/// Simulated trajectory; fields all share one grid.
struct NfarPath {
  std::vector<GridField> fields;
  PathMeta meta;

  int length() const { return static_cast<int>(fields.size()); }
  const GridSpec& grid() const { return fields.front().spec(); }
};

/// Iterates the transition from the zero field for burn_in + length
/// states (the first state is the zero field itself), drawing fresh noise
/// per step, and returns the last `length` fields. Aborts with the
/// offending timestep if any value exceeds 1e6 in magnitude; the true
/// dynamics are bounded by 30 + noise, so that only trips on bugs.
NfarPath simulate_path(const NfarModel& m, NoiseSampler& sampler, int length,
                       int burn_in = 500);

/// Downsample every field of a path (point evaluation).
NfarPath downsample(const NfarPath& path, GridSpec target);

/// CSV-frame directory with meta.json; the `simulate` subcommand's output
/// format.
void write_path(const NfarPath& path, const std::filesystem::path& dir);
NfarPath read_path(const std::filesystem::path& dir);

} // namespace nfar
