#include "holoev/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "holoev/error.hpp"

namespace holoev {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n), pow2_(is_pow2(n)) {
  if (n == 0) throw Error(ErrorKind::ShapeMismatch, "FFT length must be >= 1");
  const std::size_t work = pow2_ ? n : next_pow2(2 * n - 1);

  twiddle_.resize(work / 2);
  for (std::size_t k = 0; k < work / 2; ++k) {
    const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(work);
    twiddle_[k] = {std::cos(a), std::sin(a)};
  }
  bitrev_.resize(work);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < work) ++bits;
  for (std::size_t i = 0; i < work; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
    bitrev_[i] = r;
  }
  if (pow2_) return;

  m_ = work;
  chirp_.resize(n);
  const std::size_t two_n = 2 * n;
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle small for large k.
    const std::size_t q = static_cast<std::size_t>((static_cast<unsigned __int128>(k) * k) % two_n);
    const double a = -kPi * static_cast<double>(q) / static_cast<double>(n);
    chirp_[k] = {std::cos(a), std::sin(a)};
  }
  kernel_fft_.assign(m_, Complex{});
  kernel_fft_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) {
    kernel_fft_[k] = std::conj(chirp_[k]);
    kernel_fft_[m_ - k] = std::conj(chirp_[k]);
  }
  radix2(kernel_fft_, false);
}

void FftPlan::radix2(std::span<Complex> a, bool inverse) const {
  const std::size_t L = a.size();
  for (std::size_t i = 0; i < L; ++i) {
    if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= L; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = L / len;
    for (std::size_t i = 0; i < L; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        Complex w = twiddle_[j * step];
        if (inverse) w = std::conj(w);
        const Complex u = a[i + j];
        const Complex v = a[i + j + half] * w;
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
}

void FftPlan::transform(std::span<Complex> data, bool inverse) const {
  if (data.size() != n_) throw Error(ErrorKind::ShapeMismatch, "FFT buffer length differs from plan");
  if (n_ == 1) return;
  if (pow2_) {
    radix2(data, inverse);
    return;
  }
  // inverse(x) = conj(forward(conj(x)))
  std::vector<Complex> a(m_, Complex{});
  for (std::size_t k = 0; k < n_; ++k) {
    const Complex x = inverse ? std::conj(data[k]) : data[k];
    a[k] = x * chirp_[k];
  }
  radix2(a, false);
  for (std::size_t k = 0; k < m_; ++k) a[k] *= kernel_fft_[k];
  radix2(a, true);
  const double scale = 1.0 / static_cast<double>(m_);
  for (std::size_t k = 0; k < n_; ++k) {
    const Complex y = a[k] * scale * chirp_[k];
    data[k] = inverse ? std::conj(y) : y;
  }
}

std::vector<Complex> rfft(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorKind::ShapeMismatch, "rfft of empty sequence");
  const FftPlan plan(x.size());
  std::vector<Complex> buf(x.begin(), x.end());
  plan.forward(buf);
  buf.resize(x.size() / 2 + 1);
  return buf;
}

ComplexTensor2D rfft2(const RealTensor2D& x) {
  if (x.rows == 0 || x.cols == 0 || x.data.size() != x.rows * x.cols) {
    throw Error(ErrorKind::ShapeMismatch, "rfft2 needs a non-empty rows x cols tensor");
  }
  const std::size_t half = x.cols / 2 + 1;
  ComplexTensor2D out(x.rows, half);

  const FftPlan row_plan(x.cols);
  std::vector<Complex> row(x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) row[c] = x.at(r, c);
    row_plan.forward(row);
    std::copy_n(row.begin(), half, out.data.begin() + static_cast<std::ptrdiff_t>(r * half));
  }

  const FftPlan col_plan(x.rows);
  std::vector<Complex> col(x.rows);
  for (std::size_t k = 0; k < half; ++k) {
    for (std::size_t r = 0; r < x.rows; ++r) col[r] = out.at(r, k);
    col_plan.forward(col);
    for (std::size_t r = 0; r < x.rows; ++r) out.at(r, k) = col[r];
  }
  return out;
}

RealTensor2D irfft2(const ComplexTensor2D& z, std::size_t cols) {
  if (z.rows == 0 || cols == 0 || z.cols_half != cols / 2 + 1 || z.data.size() != z.rows * z.cols_half) {
    throw Error(ErrorKind::ShapeMismatch, "half spectrum with " + std::to_string(z.cols_half) +
                                              " columns cannot invert to " + std::to_string(cols) + " columns");
  }
  const std::size_t half = z.cols_half;
  std::vector<Complex> work = z.data;

  const FftPlan col_plan(z.rows);
  std::vector<Complex> col(z.rows);
  for (std::size_t k = 0; k < half; ++k) {
    for (std::size_t r = 0; r < z.rows; ++r) col[r] = work[r * half + k];
    col_plan.inverse(col);
    for (std::size_t r = 0; r < z.rows; ++r) work[r * half + k] = col[r];
  }

  RealTensor2D out(z.rows, cols);
  const FftPlan row_plan(cols);
  std::vector<Complex> row(cols);
  const double scale = 1.0 / static_cast<double>(z.rows * cols);
  for (std::size_t r = 0; r < z.rows; ++r) {
    const Complex* src = work.data() + r * half;
    for (std::size_t c = 0; c < half; ++c) row[c] = src[c];
    for (std::size_t c = half; c < cols; ++c) row[c] = std::conj(src[cols - c]);
    // Imaginary parts of the self-conjugate columns cannot reach the real
    // output; drop them exactly instead of relying on twiddle cancellation.
    row[0] = row[0].real();
    if (cols % 2 == 0 && cols > 1) row[cols / 2] = row[cols / 2].real();
    row_plan.inverse(row);
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = row[c].real() * scale;
  }
  return out;
}

ComplexTensor2D dft2_oracle(const RealTensor2D& x) {
  if (x.rows == 0 || x.cols == 0 || x.data.size() != x.rows * x.cols) {
    throw Error(ErrorKind::ShapeMismatch, "dft2_oracle needs a non-empty rows x cols tensor");
  }
  if (x.rows * x.cols > 4096) {
    throw Error(ErrorKind::TooLarge, std::to_string(x.rows) + "x" + std::to_string(x.cols) + " exceeds 4096 cells");
  }
  const std::size_t half = x.cols / 2 + 1;
  ComplexTensor2D out(x.rows, half);
  const double R = static_cast<double>(x.rows);
  const double C = static_cast<double>(x.cols);
  for (std::size_t j = 0; j < x.rows; ++j) {
    for (std::size_t k = 0; k < half; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t t = 0; t < x.rows; ++t) {
        for (std::size_t h = 0; h < x.cols; ++h) {
          const double turns = static_cast<double>((j * t) % x.rows) / R + static_cast<double>((k * h) % x.cols) / C;
          const double a = -2.0 * kPi * turns;
          re += x.at(t, h) * std::cos(a);
          im += x.at(t, h) * std::sin(a);
        }
      }
      out.at(j, k) = {re, im};
    }
  }
  return out;
}

RateSeries event_rate_series(const EventStream& stream, double bin_dt) {
  if (!(std::isfinite(bin_dt) && bin_dt > 0)) {
    throw Error(ErrorKind::BadBin, "bin_dt must be a positive number of seconds");
  }
  RateSeries series;
  series.bin_dt = bin_dt;
  if (stream.events.empty()) {
    series.values.assign(1, 0.0);
    return series;
  }
  auto [lo, hi] = std::minmax_element(stream.events.begin(), stream.events.end(),
                                      [](const Event& a, const Event& b) { return a.t < b.t; });
  const std::uint64_t t0 = lo->t;
  const double bin_us = bin_dt * 1e6;
  const double whole_us = std::round(bin_us);
  // Whole-microsecond bins are indexed exactly; floating division would put
  // events sitting on a bin edge into the previous bin.
  const bool integral = whole_us >= 1.0 && std::abs(bin_us - whole_us) < 1e-6;
  const auto bin_int = static_cast<std::uint64_t>(whole_us);
  auto index_of = [&](std::uint64_t t) -> std::size_t {
    if (integral) return static_cast<std::size_t>((t - t0) / bin_int);
    return static_cast<std::size_t>(std::floor(static_cast<double>(t - t0) / bin_us));
  };
  series.values.assign(index_of(hi->t) + 1, 0.0);
  for (const auto& e : stream.events) series.values[index_of(e.t)] += 1.0;
  return series;
}

Spectrum rate_spectrum(const RateSeries& series) {
  const std::size_t n = series.values.size();
  if (n < 4) throw Error(ErrorKind::TooShort, "rate series has " + std::to_string(n) + " bins, need >= 4");
  if (!(std::isfinite(series.bin_dt) && series.bin_dt > 0)) throw Error(ErrorKind::BadBin, "bin_dt must be > 0");

  double mean = 0.0;
  for (double v : series.values) mean += v;
  mean /= static_cast<double>(n);

  std::vector<double> windowed(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
    windowed[i] = (series.values[i] - mean) * hann;
  }
  const auto bins = rfft(windowed);
  Spectrum s;
  s.df = 1.0 / (series.bin_dt * static_cast<double>(n));
  s.magnitudes.resize(bins.size());
  std::transform(bins.begin(), bins.end(), s.magnitudes.begin(), [](const Complex& c) { return std::abs(c); });
  return s;
}

std::optional<SpectralPeak> dominant_frequency(const RateSeries& series) {
  const Spectrum s = rate_spectrum(series);
  const auto& mag = s.magnitudes;
  const auto best = std::max_element(mag.begin() + 1, mag.end());
  if (*best < 1e-9) return std::nullopt;

  const std::size_t k = static_cast<std::size_t>(best - mag.begin());
  SpectralPeak peak{static_cast<double>(k) * s.df, *best};
  if (k + 1 < mag.size()) {
    const double a = mag[k - 1], b = mag[k], c = mag[k + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0) {
      const double delta = 0.5 * (a - c) / denom;
      peak.f_peak = (static_cast<double>(k) + delta) * s.df;
      peak.magnitude = b - 0.25 * (a - c) * delta;
    }
  }
  return peak;
}

}  // namespace holoev
