#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <vector>

#include "nfar/fft.hpp"
#include "nfar/grid.hpp"
#include "nfar/rng.hpp"

namespace nfar {

/// Squared-exponential covariance K(h1, h2) = exp(-scale*(h1^2 + h2^2)).
/// K(0,0) = 1 and 0 < K <= 1 everywhere.
struct StationaryKernel {
  double scale = 5.0;

  double operator()(double h1, double h2) const;
};

/// Eigenvalues of the wrapped kernel on the doubled periodic grid,
/// precomputed once per grid size and shared by all samplers.
struct CirculantSpectrum {
  GridSpec grid;                  // target S x S grid
  std::vector<double> lambda;     // (2S)*(2S) row-major, all >= 0
  double min_lambda_raw = 0.0;    // most negative value before clamping
  double max_lambda = 0.0;
  int clamp_count = 0;
  double clamped_mass = 0.0;      // sum of |clamped| / (2S)^2: the variance
                                  // deficit of the realized covariance

  int doubled_size() const { return 2 * grid.size; }
};

/// Relative clamp tolerance for negative spectrum values. The
/// nearest-image wrap of this kernel family carries structural negatives
/// of about 4e-4 * max; see build_spectrum.
inline constexpr double kClampTolerance = 1e-3;

/// Wrap the kernel onto the doubled torus [0,2)^2:
/// out[i][j] = K(min(u_i, 2-u_i), min(u_j, 2-u_j)) with u_i = i/S,
/// i, j = 0 .. 2S-1.
std::vector<double> wrap_kernel(const StationaryKernel& k, GridSpec grid);

/// Unnormalized forward 2-D DFT of the wrapped kernel. Eigenvalues within
/// 1e-9 * max of zero are clamped to zero; anything more negative throws
/// EmbeddingError (the kernel does not embed positively at this size).
CirculantSpectrum build_spectrum(const StationaryKernel& k, GridSpec grid);

/// Draws stationary zero-mean Gaussian fields with the spectrum's
/// covariance. Each call derives a fresh sub-stream from (stream id,
/// draw counter), so field t of a path always sees the same noise no
/// matter what else was drawn in between. Samplers with equal stream ids
/// produce bit-identical sequences.
class NoiseSampler {
public:
  NoiseSampler(std::shared_ptr<const CirculantSpectrum> spectrum,
               std::uint64_t stream_id);

  GridField sample();

  /// Synthesis from caller-supplied complex Gaussian coefficients
  /// (row-major, (2S)^2 entries); the randomized path of sample() feeds
  /// through here. Exposed for tests.
  GridField synthesize(const std::vector<std::complex<double>>& z) const;

  const CirculantSpectrum& spectrum() const { return *spectrum_; }
  std::uint64_t stream_id() const { return stream_id_; }

private:
  std::shared_ptr<const CirculantSpectrum> spectrum_;
  std::uint64_t stream_id_ = 0;
  std::uint64_t draw_count_ = 0;
  std::vector<double> sqrt_lambda_;
  Fft2d fft_;
};

} // namespace nfar
