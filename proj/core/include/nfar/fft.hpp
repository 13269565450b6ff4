#pragma once

#include <complex>
#include <vector>

namespace nfar {

/// Complex-to-complex 2-D DFT on an n x n grid, double precision.
///
/// Convention (pinned): forward is the plain sum with kernel
/// exp(-2*pi*i*(p*i + q*j)/n) and no prefactor; inverse uses
/// exp(+2*pi*i*...) and the prefactor 1/n^2, so inverse(forward(x)) == x.
class Fft2d {
public:
  explicit Fft2d(int n);
  ~Fft2d();

  Fft2d(Fft2d&& other) noexcept;
  Fft2d& operator=(Fft2d&& other) noexcept;
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  int size() const { return n_; }

  /// out may alias in. Arrays hold n*n entries, row-major.
  void forward(const std::complex<double>* in, std::complex<double>* out) const;
  void inverse(const std::complex<double>* in, std::complex<double>* out) const;

  /// Inverse transform without the 1/n^2 prefactor.
  void inverse_unscaled(const std::complex<double>* in,
                        std::complex<double>* out) const;

private:
  int n_ = 0;
  void* fwd_plan_ = nullptr;
  void* inv_plan_ = nullptr;
};

} // namespace nfar
