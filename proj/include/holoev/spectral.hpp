#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "holoev/event_core.hpp"

namespace holoev {

using Complex = std::complex<double>;

struct RealTensor2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  RealTensor2D() = default;
  RealTensor2D(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Non-redundant half spectrum of a real rows x cols signal; the last axis
/// keeps cols / 2 + 1 bins.
struct ComplexTensor2D {
  std::size_t rows = 0;
  std::size_t cols_half = 0;
  std::vector<Complex> data;

  ComplexTensor2D() = default;
  ComplexTensor2D(std::size_t r, std::size_t ch) : rows(r), cols_half(ch), data(r * ch) {}

  Complex& at(std::size_t r, std::size_t c) { return data[r * cols_half + c]; }
  const Complex& at(std::size_t r, std::size_t c) const { return data[r * cols_half + c]; }
};

/// In-place complex DFT of arbitrary length. Powers of two use an iterative
/// radix-2 kernel; other lengths go through Bluestein's chirp-z transform.
/// Neither direction is normalized.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  void forward(std::span<Complex> data) const { transform(data, false); }
  void inverse(std::span<Complex> data) const { transform(data, true); }

 private:
  void transform(std::span<Complex> data, bool inverse) const;
  void radix2(std::span<Complex> data, bool inverse) const;

  std::size_t n_;
  bool pow2_;
  std::vector<Complex> twiddle_;  // radix-2 twiddles for the working length
  std::vector<std::size_t> bitrev_;
  // Bluestein state
  std::size_t m_ = 0;
  std::vector<Complex> chirp_;
  std::vector<Complex> kernel_fft_;
};

/// Unnormalized forward transform of a real sequence: n / 2 + 1 bins.
std::vector<Complex> rfft(std::span<const double> x);

ComplexTensor2D rfft2(const RealTensor2D& x);

/// Inverse of rfft2 including the 1 / (rows * cols) factor. The imaginary
/// parts of bins that must be real for a Hermitian spectrum are ignored.
RealTensor2D irfft2(const ComplexTensor2D& z, std::size_t cols);

/// Direct double-sum DFT in the rfft2 layout. Limited to rows * cols <= 4096.
ComplexTensor2D dft2_oracle(const RealTensor2D& x);

struct RateSeries {
  double bin_dt = 0.01;
  std::vector<double> values;
};

struct Spectrum {
  double df = 0.0;
  std::vector<double> magnitudes;
};

struct SpectralPeak {
  double f_peak = 0.0;
  double magnitude = 0.0;
};

/// Event counts per bin of `bin_dt` seconds, measured from the first event.
/// The series always has floor(duration / bin_dt) + 1 bins so that every
/// event lands in a bin.
RateSeries event_rate_series(const EventStream& stream, double bin_dt);

/// Magnitude spectrum of the mean-removed, Hann-windowed series.
Spectrum rate_spectrum(const RateSeries& series);

/// Strongest non-DC bin of rate_spectrum(), refined by a three-point
/// parabola. Empty when the spectrum is flat (max magnitude below 1e-9).
std::optional<SpectralPeak> dominant_frequency(const RateSeries& series);

}  // namespace holoev
