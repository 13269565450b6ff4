#include "nfar/fft.hpp"

#include <mutex>

#include <fftw3.h>

#include "nfar/errors.hpp"

namespace nfar {

namespace {
// FFTW plan creation/destruction is not thread-safe; execution of distinct
// plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
} // namespace

Fft2d::Fft2d(int n) : n_(n) {
  if (n < 1) {
    throw ShapeError("fft size must be positive");
  }
  std::lock_guard<std::mutex> lock(planner_mutex());
  // Planned once with FFTW_ESTIMATE so the algorithm choice (and hence the
  // exact floating-point result) never depends on runtime measurements.
  fftw_complex* buf = fftw_alloc_complex(static_cast<std::size_t>(n) * n);
  fwd_plan_ = fftw_plan_dft_2d(n, n, buf, buf, FFTW_FORWARD,
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
  inv_plan_ = fftw_plan_dft_2d(n, n, buf, buf, FFTW_BACKWARD,
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  if (!fwd_plan_ || !inv_plan_) {
    throw Error("fftw planning failed for size " + std::to_string(n));
  }
}

Fft2d::~Fft2d() {
  if (fwd_plan_ || inv_plan_) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd_plan_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_plan_));
    if (inv_plan_) fftw_destroy_plan(static_cast<fftw_plan>(inv_plan_));
  }
}

Fft2d::Fft2d(Fft2d&& other) noexcept
    : n_(other.n_), fwd_plan_(other.fwd_plan_), inv_plan_(other.inv_plan_) {
  other.fwd_plan_ = nullptr;
  other.inv_plan_ = nullptr;
}

Fft2d& Fft2d::operator=(Fft2d&& other) noexcept {
  if (this != &other) {
    std::swap(n_, other.n_);
    std::swap(fwd_plan_, other.fwd_plan_);
    std::swap(inv_plan_, other.inv_plan_);
  }
  return *this;
}

void Fft2d::forward(const std::complex<double>* in,
                    std::complex<double>* out) const {
  auto* src = reinterpret_cast<fftw_complex*>(
      const_cast<std::complex<double>*>(in));
  auto* dst = reinterpret_cast<fftw_complex*>(out);
  fftw_execute_dft(static_cast<fftw_plan>(fwd_plan_), src, dst);
}

void Fft2d::inverse_unscaled(const std::complex<double>* in,
                             std::complex<double>* out) const {
  auto* src = reinterpret_cast<fftw_complex*>(
      const_cast<std::complex<double>*>(in));
  auto* dst = reinterpret_cast<fftw_complex*>(out);
  fftw_execute_dft(static_cast<fftw_plan>(inv_plan_), src, dst);
}

void Fft2d::inverse(const std::complex<double>* in,
                    std::complex<double>* out) const {
  inverse_unscaled(in, out);
  const double scale = 1.0 / (static_cast<double>(n_) * n_);
  const std::size_t count = static_cast<std::size_t>(n_) * n_;
  for (std::size_t k = 0; k < count; ++k) {
    out[k] *= scale;
  }
}

} // namespace nfar
