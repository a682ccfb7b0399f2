#pragma once

// Global spectral gating block:
//
//   x_local = depthwise_conv3x3(x_in)
//   z       = irfft2(rfft2(x_local) * W)                  (per channel)
//   x_gsg   = SiLU(LayerNorm_c(z)) * sigmoid(G z + b)     (per location)
//   x_out   = x_in + x_gsg
//
// Arithmetic is carried out in double precision; the float instantiations
// only narrow at the boundary. Gradients are provided for W alone.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "holoev/spectral.hpp"
#include "holoev/tensor.hpp"

namespace holoev {

template <typename Real>
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(std::size_t channels, std::size_t rows, std::size_t cols)
      : channels_(channels), rows_(rows), cols_(cols), data_(channels * rows * cols, Real{0}) {}
  /// Throws ShapeMismatch on a size mismatch and NonFinite on NaN/Inf.
  FeatureTensor(std::size_t channels, std::size_t rows, std::size_t cols, std::vector<Real> data);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t plane_size() const noexcept { return rows_ * cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  Real& at(std::size_t c, std::size_t r, std::size_t k) { return data_[(c * rows_ + r) * cols_ + k]; }
  Real at(std::size_t c, std::size_t r, std::size_t k) const { return data_[(c * rows_ + r) * cols_ + k]; }

  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  std::span<Real> channel(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const Real> channel(std::size_t c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  bool same_shape(const FeatureTensor& o) const noexcept {
    return channels_ == o.channels_ && rows_ == o.rows_ && cols_ == o.cols_;
  }
  /// Throws NonFinite if any value is NaN or infinite.
  void require_finite() const;

 private:
  std::size_t channels_ = 0, rows_ = 0, cols_ = 0;
  std::vector<Real> data_;
};

using FeatureTensorF = FeatureTensor<float>;
using FeatureTensorD = FeatureTensor<double>;

template <typename To, typename From>
FeatureTensor<To> feature_cast(const FeatureTensor<From>& x) {
  FeatureTensor<To> out(x.channels(), x.rows(), x.cols());
  auto src = x.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
  return out;
}

FeatureTensorD feature_from(const Tensor3& t);
Tensor3 to_tensor3(const FeatureTensorD& x);

struct GsgParams {
  std::size_t channels = 0;
  std::size_t rows = 0;       // T'
  std::size_t cols_half = 0;  // H' / 2 + 1
  std::vector<double> dw_kernel;         // channels x 3 x 3
  std::vector<Complex> spectral_weight;  // channels x rows x cols_half
  std::vector<double> ln_gamma;          // channels
  std::vector<double> ln_beta;           // channels
  std::vector<double> gate_weight;       // channels x channels, [out][in]
  std::vector<double> gate_bias;         // channels

  /// Centre-tap kernels, W = 1, unit LayerNorm affine, gate open (bias +20).
  static GsgParams identity(std::size_t channels, std::size_t rows, std::size_t cols);
  /// Seeded random parameters of moderate magnitude, for tests and demos.
  static GsgParams random(std::size_t channels, std::size_t rows, std::size_t cols, std::uint64_t seed);

  /// Throws ShapeMismatch unless the parameters fit a channels x rows x cols
  /// input, NonFinite on NaN/Inf.
  void validate_for(std::size_t channels, std::size_t rows, std::size_t cols) const;
};

constexpr double kLayerNormEps = 1e-5;

template <typename Real>
FeatureTensor<Real> depthwise_conv3x3(const FeatureTensor<Real>& x, std::span<const double> kernels);

template <typename Real>
FeatureTensor<Real> spectral_filter(const FeatureTensor<Real>& x_local, std::span<const Complex> weights);

template <typename Real>
FeatureTensor<Real> gated_reconstruction(const FeatureTensor<Real>& z, const GsgParams& params);

template <typename Real>
FeatureTensor<Real> gsg_forward(const FeatureTensor<Real>& x_in, const GsgParams& params);

/// L = sum(gsg_forward(x_in) * upstream).
double gsg_loss(const FeatureTensorD& x_in, const GsgParams& params, const FeatureTensorD& upstream);

/// dL/dz for L = sum(gated_reconstruction(z) * upstream).
FeatureTensorD gated_reconstruction_backward(const FeatureTensorD& z, const GsgParams& params,
                                             const FeatureTensorD& upstream);

/// dL/dW in the spectral_weight layout; real part is dL/dRe(W), imaginary
/// part is dL/dIm(W).
std::vector<Complex> grad_spectral_weight(const FeatureTensorD& x_in, const GsgParams& params,
                                          const FeatureTensorD& upstream);

enum class ParamGroup { DwKernel, SpectralRe, SpectralIm, LnGamma, LnBeta, GateWeight, GateBias };

struct ParamSelector {
  ParamGroup group = ParamGroup::SpectralRe;
  std::size_t index = 0;
};

std::size_t param_group_size(const GsgParams& params, ParamGroup group);
/// Throws SelectorOutOfRange.
double& param_ref(GsgParams& params, ParamSelector selector);

template <typename F>
double central_difference(F&& f, double theta, double h) {
  return (f(theta + h) - f(theta - h)) / (2.0 * h);
}

/// Central difference of gsg_loss with respect to one scalar parameter.
/// `h` must lie in [1e-8, 1e-4].
double finite_difference_oracle(const FeatureTensorD& x_in, const GsgParams& params,
                                const FeatureTensorD& upstream, ParamSelector selector, double h);

/// |a - b| / max(|a|, |b|, floor). The floor keeps components whose true
/// value is ~0 from turning rounding noise into a large ratio.
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradCheckReport {
  std::size_t components = 0;
  double max_relative_error = 0.0;
  double floor = 0.0;  // denominator floor used for every component
  double step = 0.0;
  ParamSelector worst;
};

/// The comparison floor is this fraction of max(1, |L|, max |dL/dW|). Central
/// differences of L carry rounding noise of order eps * |L| / h, and some
/// weights (imaginary parts at self-conjugate bins) have an identically zero
/// gradient, so a fixed absolute floor would measure only that noise.
constexpr double kGradCheckFloor = 1e-6;

/// Base step of the check; the pair (h, h/2) is Richardson-combined so the
/// h^2 truncation term cancels. Both steps stay inside the oracle's range.
constexpr double kGradCheckStep = 1e-4;

/// (4 D(h/2) - D(h)) / 3 where D is finite_difference_oracle.
double richardson_difference(const FeatureTensorD& x_in, const GsgParams& params, const FeatureTensorD& upstream,
                             ParamSelector selector, double h);

/// Compares grad_spectral_weight against richardson_difference on every real
/// and imaginary weight component.
GradCheckReport check_spectral_gradient(const FeatureTensorD& x_in, const GsgParams& params,
                                        const FeatureTensorD& upstream, double h = kGradCheckStep);

}  // namespace holoev
