#include "holoev/gsg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "holoev/error.hpp"
#include "holoev/event_core.hpp"

namespace holoev {

namespace {

std::string shape_str(std::size_t c, std::size_t r, std::size_t k) {
  return std::to_string(c) + "x" + std::to_string(r) + "x" + std::to_string(k);
}

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

template <typename Real>
void require_same_shape(const FeatureTensor<Real>& a, const FeatureTensor<Real>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": " + shape_str(a.channels(), a.rows(), a.cols()) +
                                              " vs " + shape_str(b.channels(), b.rows(), b.cols()));
  }
}

// Double-precision kernels. The public templates widen, call these, narrow.

FeatureTensorD conv_impl(const FeatureTensorD& x, std::span<const double> k) {
  const std::size_t C = x.channels(), T = x.rows(), H = x.cols();
  if (k.size() != C * 9) {
    throw Error(ErrorKind::ShapeMismatch,
                "depthwise kernels: expected " + std::to_string(C * 9) + " values, got " + std::to_string(k.size()));
  }
  FeatureTensorD out(C, T, H);
  for (std::size_t c = 0; c < C; ++c) {
    const double* kc = k.data() + c * 9;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h) {
        double acc = 0.0;
        for (int dt = -1; dt <= 1; ++dt) {
          const auto tt = static_cast<std::ptrdiff_t>(t) + dt;
          if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(T)) continue;
          for (int dh = -1; dh <= 1; ++dh) {
            const auto hh = static_cast<std::ptrdiff_t>(h) + dh;
            if (hh < 0 || hh >= static_cast<std::ptrdiff_t>(H)) continue;
            acc += kc[(dt + 1) * 3 + (dh + 1)] *
                   x.at(c, static_cast<std::size_t>(tt), static_cast<std::size_t>(hh));
          }
        }
        out.at(c, t, h) = acc;
      }
    }
  }
  return out;
}

RealTensor2D plane_of(const FeatureTensorD& x, std::size_t c) {
  RealTensor2D p(x.rows(), x.cols());
  auto ch = x.channel(c);
  std::copy(ch.begin(), ch.end(), p.data.begin());
  return p;
}

std::size_t half_cols(std::size_t cols) { return cols / 2 + 1; }

void check_weights(const FeatureTensorD& x, std::span<const Complex> w) {
  const std::size_t expected = x.channels() * x.rows() * half_cols(x.cols());
  if (w.size() != expected) {
    throw Error(ErrorKind::ShapeMismatch, "spectral weights: expected " +
                                              shape_str(x.channels(), x.rows(), half_cols(x.cols())) + " (" +
                                              std::to_string(expected) + "), got " + std::to_string(w.size()));
  }
  for (const auto& v : w) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw Error(ErrorKind::NonFinite, "spectral weight is not finite");
    }
  }
}

FeatureTensorD spectral_impl(const FeatureTensorD& x, std::span<const Complex> w) {
  check_weights(x, w);
  const std::size_t half = half_cols(x.cols());
  const std::size_t bins = x.rows() * half;
  FeatureTensorD out(x.channels(), x.rows(), x.cols());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto spec = rfft2(plane_of(x, c));
    const Complex* wc = w.data() + c * bins;
    for (std::size_t i = 0; i < bins; ++i) spec.data[i] *= wc[i];
    const auto z = irfft2(spec, x.cols());
    std::copy(z.data.begin(), z.data.end(), out.channel(c).begin());
  }
  return out;
}

void check_gate_params(const GsgParams& p, std::size_t C) {
  if (p.ln_gamma.size() != C || p.ln_beta.size() != C || p.gate_weight.size() != C * C || p.gate_bias.size() != C) {
    throw Error(ErrorKind::ShapeMismatch, "gate/LayerNorm parameters do not match " + std::to_string(C) + " channels");
  }
}

// Per-location intermediates of the gated reconstruction.
struct GateLocal {
  std::vector<double> norm, affine, silu, gate;
  double inv_std = 0.0;

  explicit GateLocal(std::size_t C) : norm(C), affine(C), silu(C), gate(C) {}

  void compute(const GsgParams& p, std::span<const double> z) {
    const std::size_t C = z.size();
    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= static_cast<double>(C);
    inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < C; ++c) {
      norm[c] = (z[c] - mean) * inv_std;
      affine[c] = p.ln_gamma[c] * norm[c] + p.ln_beta[c];
      silu[c] = affine[c] * sigmoid(affine[c]);
      double q = p.gate_bias[c];
      const double* row = p.gate_weight.data() + c * C;
      for (std::size_t i = 0; i < C; ++i) q += row[i] * z[i];
      gate[c] = sigmoid(q);
    }
  }
};

FeatureTensorD gate_impl(const FeatureTensorD& z, const GsgParams& p) {
  const std::size_t C = z.channels(), P = z.plane_size();
  check_gate_params(p, C);
  FeatureTensorD out(C, z.rows(), z.cols());
  GateLocal local(C);
  std::vector<double> zs(C);
  auto src = z.values();
  auto dst = out.values();
  for (std::size_t s = 0; s < P; ++s) {
    for (std::size_t c = 0; c < C; ++c) zs[c] = src[c * P + s];
    local.compute(p, zs);
    for (std::size_t c = 0; c < C; ++c) dst[c * P + s] = local.silu[c] * local.gate[c];
  }
  return out;
}

FeatureTensorD forward_impl(const FeatureTensorD& x, const GsgParams& p) {
  p.validate_for(x.channels(), x.rows(), x.cols());
  auto local = conv_impl(x, p.dw_kernel);
  auto z = spectral_impl(local, p.spectral_weight);
  auto g = gate_impl(z, p);
  auto out = x;
  auto o = out.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += gv[i];
  return out;
}

template <typename Real>
FeatureTensorD widen(const FeatureTensor<Real>& x) {
  x.require_finite();
  if constexpr (std::is_same_v<Real, double>) {
    return x;
  } else {
    return feature_cast<double>(x);
  }
}

template <typename Real>
FeatureTensor<Real> narrow(FeatureTensorD x) {
  if constexpr (std::is_same_v<Real, double>) {
    return x;
  } else {
    return feature_cast<Real>(x);
  }
}

}  // namespace

template <typename Real>
FeatureTensor<Real>::FeatureTensor(std::size_t channels, std::size_t rows, std::size_t cols, std::vector<Real> data)
    : channels_(channels), rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != channels * rows * cols) {
    throw Error(ErrorKind::ShapeMismatch, "feature tensor " + shape_str(channels, rows, cols) + " given " +
                                              std::to_string(data_.size()) + " values");
  }
  require_finite();
}

template <typename Real>
void FeatureTensor<Real>::require_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error(ErrorKind::NonFinite, "non-finite feature value at flat index " + std::to_string(i), i);
    }
  }
}

template class FeatureTensor<float>;
template class FeatureTensor<double>;

FeatureTensorD feature_from(const Tensor3& t) {
  return FeatureTensorD(t.channels(), t.rows(), t.cols(), t.data);
}

Tensor3 to_tensor3(const FeatureTensorD& x) {
  Tensor3 t(x.channels(), x.rows(), x.cols());
  std::copy(x.values().begin(), x.values().end(), t.data.begin());
  return t;
}

GsgParams GsgParams::identity(std::size_t channels, std::size_t rows, std::size_t cols) {
  GsgParams p;
  p.channels = channels;
  p.rows = rows;
  p.cols_half = half_cols(cols);
  p.dw_kernel.assign(channels * 9, 0.0);
  for (std::size_t c = 0; c < channels; ++c) p.dw_kernel[c * 9 + 4] = 1.0;
  p.spectral_weight.assign(channels * rows * p.cols_half, Complex{1.0, 0.0});
  p.ln_gamma.assign(channels, 1.0);
  p.ln_beta.assign(channels, 0.0);
  p.gate_weight.assign(channels * channels, 0.0);
  p.gate_bias.assign(channels, 20.0);
  return p;
}

GsgParams GsgParams::random(std::size_t channels, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  detail::Rng rng(seed);
  auto sym = [&rng](double scale) { return scale * (2.0 * rng.uniform() - 1.0); };
  GsgParams p;
  p.channels = channels;
  p.rows = rows;
  p.cols_half = half_cols(cols);
  p.dw_kernel.resize(channels * 9);
  for (auto& v : p.dw_kernel) v = sym(0.5);
  for (std::size_t c = 0; c < channels; ++c) p.dw_kernel[c * 9 + 4] += 1.0;
  p.spectral_weight.resize(channels * rows * p.cols_half);
  for (auto& v : p.spectral_weight) v = Complex{1.0 + sym(0.5), sym(0.5)};
  p.ln_gamma.resize(channels);
  for (auto& v : p.ln_gamma) v = 1.0 + sym(0.3);
  p.ln_beta.resize(channels);
  for (auto& v : p.ln_beta) v = sym(0.3);
  p.gate_weight.resize(channels * channels);
  for (auto& v : p.gate_weight) v = sym(0.5);
  p.gate_bias.resize(channels);
  for (auto& v : p.gate_bias) v = sym(0.5);
  return p;
}

void GsgParams::validate_for(std::size_t C, std::size_t T, std::size_t H) const {
  if (C == 0 || T == 0 || H == 0) throw Error(ErrorKind::ShapeMismatch, "feature extents must be >= 1");
  if (channels != C || rows != T || cols_half != half_cols(H)) {
    throw Error(ErrorKind::ShapeMismatch, "parameters sized for " + shape_str(channels, rows, cols_half) +
                                              " spectrum, input needs " + shape_str(C, T, half_cols(H)));
  }
  if (dw_kernel.size() != C * 9 || spectral_weight.size() != C * T * cols_half) {
    throw Error(ErrorKind::ShapeMismatch, "kernel or spectral weight length inconsistent with header");
  }
  check_gate_params(*this, C);
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
  };
  const bool weights_finite = std::all_of(spectral_weight.begin(), spectral_weight.end(), [](const Complex& v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  });
  if (!weights_finite || !finite(dw_kernel) || !finite(ln_gamma) || !finite(ln_beta) || !finite(gate_weight) ||
      !finite(gate_bias)) {
    throw Error(ErrorKind::NonFinite, "parameter value is not finite");
  }
}

template <typename Real>
FeatureTensor<Real> depthwise_conv3x3(const FeatureTensor<Real>& x, std::span<const double> kernels) {
  return narrow<Real>(conv_impl(widen(x), kernels));
}

template <typename Real>
FeatureTensor<Real> spectral_filter(const FeatureTensor<Real>& x_local, std::span<const Complex> weights) {
  return narrow<Real>(spectral_impl(widen(x_local), weights));
}

template <typename Real>
FeatureTensor<Real> gated_reconstruction(const FeatureTensor<Real>& z, const GsgParams& params) {
  return narrow<Real>(gate_impl(widen(z), params));
}

template <typename Real>
FeatureTensor<Real> gsg_forward(const FeatureTensor<Real>& x_in, const GsgParams& params) {
  return narrow<Real>(forward_impl(widen(x_in), params));
}

#define HOLOEV_INSTANTIATE(Real)                                                                          \
  template FeatureTensor<Real> depthwise_conv3x3(const FeatureTensor<Real>&, std::span<const double>);   \
  template FeatureTensor<Real> spectral_filter(const FeatureTensor<Real>&, std::span<const Complex>);    \
  template FeatureTensor<Real> gated_reconstruction(const FeatureTensor<Real>&, const GsgParams&);       \
  template FeatureTensor<Real> gsg_forward(const FeatureTensor<Real>&, const GsgParams&);

HOLOEV_INSTANTIATE(float)
HOLOEV_INSTANTIATE(double)
#undef HOLOEV_INSTANTIATE

double gsg_loss(const FeatureTensorD& x_in, const GsgParams& params, const FeatureTensorD& upstream) {
  require_same_shape(x_in, upstream, "upstream");
  x_in.require_finite();
  params.validate_for(x_in.channels(), x_in.rows(), x_in.cols());
  // Same value as summing gsg_forward(x_in) * upstream, but the gate branch is
  // not first rounded against x_in, and the sums carry extra precision. This
  // is what finite differences see, so less noise here means smaller usable h.
  const auto g = gate_impl(spectral_impl(conv_impl(x_in, params.dw_kernel), params.spectral_weight), params);
  long double residual = 0.0L, gated = 0.0L;
  auto x = x_in.values();
  auto gv = g.values();
  auto u = upstream.values();
  for (std::size_t i = 0; i < u.size(); ++i) {
    residual += static_cast<long double>(x[i]) * u[i];
    gated += static_cast<long double>(gv[i]) * u[i];
  }
  return static_cast<double>(residual + gated);
}

FeatureTensorD gated_reconstruction_backward(const FeatureTensorD& z, const GsgParams& p,
                                             const FeatureTensorD& upstream) {
  require_same_shape(z, upstream, "upstream");
  const std::size_t C = z.channels(), P = z.plane_size();
  check_gate_params(p, C);
  FeatureTensorD grad(C, z.rows(), z.cols());
  GateLocal local(C);
  std::vector<double> zs(C), u(C), d_norm(C), d_q(C);
  auto src = z.values();
  auto up = upstream.values();
  auto dst = grad.values();
  const double inv_c = 1.0 / static_cast<double>(C);

  for (std::size_t s = 0; s < P; ++s) {
    for (std::size_t c = 0; c < C; ++c) {
      zs[c] = src[c * P + s];
      u[c] = up[c * P + s];
    }
    local.compute(p, zs);

    double mean_dn = 0.0, mean_dn_n = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double a = local.affine[c];
      const double sa = sigmoid(a);
      const double d_silu = u[c] * local.gate[c];
      const double d_affine = d_silu * sa * (1.0 + a * (1.0 - sa));
      d_norm[c] = d_affine * p.ln_gamma[c];
      mean_dn += d_norm[c];
      mean_dn_n += d_norm[c] * local.norm[c];

      const double d_gate = u[c] * local.silu[c];
      d_q[c] = d_gate * local.gate[c] * (1.0 - local.gate[c]);
    }
    mean_dn *= inv_c;
    mean_dn_n *= inv_c;

    for (std::size_t i = 0; i < C; ++i) {
      double g = local.inv_std * (d_norm[i] - mean_dn - local.norm[i] * mean_dn_n);
      for (std::size_t c = 0; c < C; ++c) g += p.gate_weight[c * C + i] * d_q[c];
      dst[i * P + s] = g;
    }
  }
  return grad;
}

std::vector<Complex> grad_spectral_weight(const FeatureTensorD& x_in, const GsgParams& params,
                                          const FeatureTensorD& upstream) {
  x_in.require_finite();
  upstream.require_finite();
  require_same_shape(x_in, upstream, "upstream");
  params.validate_for(x_in.channels(), x_in.rows(), x_in.cols());

  const std::size_t C = x_in.channels(), T = x_in.rows(), H = x_in.cols();
  const std::size_t half = half_cols(H);
  const std::size_t bins = T * half;

  const auto local = conv_impl(x_in, params.dw_kernel);
  const auto z = spectral_impl(local, params.spectral_weight);
  const auto dz = gated_reconstruction_backward(z, params, upstream);

  // z is real-linear in Y = X * W. Interior columns of the half spectrum stand
  // for a conjugate pair, so they enter the inverse twice.
  std::vector<Complex> grad(C * bins);
  const double scale = 1.0 / static_cast<double>(T * H);
  for (std::size_t c = 0; c < C; ++c) {
    const auto X = rfft2(plane_of(local, c));
    const auto G = rfft2(plane_of(dz, c));
    for (std::size_t j = 0; j < T; ++j) {
      for (std::size_t k = 0; k < half; ++k) {
        const bool self_conjugate = k == 0 || (H % 2 == 0 && k == H / 2);
        const double weight = (self_conjugate ? 1.0 : 2.0) * scale;
        grad[c * bins + j * half + k] = std::conj(X.at(j, k)) * G.at(j, k) * weight;
      }
    }
  }
  return grad;
}

std::size_t param_group_size(const GsgParams& p, ParamGroup group) {
  switch (group) {
    case ParamGroup::DwKernel: return p.dw_kernel.size();
    case ParamGroup::SpectralRe:
    case ParamGroup::SpectralIm: return p.spectral_weight.size();
    case ParamGroup::LnGamma: return p.ln_gamma.size();
    case ParamGroup::LnBeta: return p.ln_beta.size();
    case ParamGroup::GateWeight: return p.gate_weight.size();
    case ParamGroup::GateBias: return p.gate_bias.size();
  }
  return 0;
}

double& param_ref(GsgParams& p, ParamSelector sel) {
  const std::size_t n = param_group_size(p, sel.group);
  if (sel.index >= n) {
    throw Error(ErrorKind::SelectorOutOfRange,
                "parameter index " + std::to_string(sel.index) + " outside group of " + std::to_string(n), sel.index);
  }
  // std::complex<double> is layout-compatible with double[2].
  switch (sel.group) {
    case ParamGroup::DwKernel: return p.dw_kernel[sel.index];
    case ParamGroup::SpectralRe: return reinterpret_cast<double(&)[2]>(p.spectral_weight[sel.index])[0];
    case ParamGroup::SpectralIm: return reinterpret_cast<double(&)[2]>(p.spectral_weight[sel.index])[1];
    case ParamGroup::LnGamma: return p.ln_gamma[sel.index];
    case ParamGroup::LnBeta: return p.ln_beta[sel.index];
    case ParamGroup::GateWeight: return p.gate_weight[sel.index];
    case ParamGroup::GateBias: return p.gate_bias[sel.index];
  }
  throw Error(ErrorKind::SelectorOutOfRange, "unknown parameter group");
}

double finite_difference_oracle(const FeatureTensorD& x_in, const GsgParams& params, const FeatureTensorD& upstream,
                                ParamSelector selector, double h) {
  if (!(h >= 1e-8 && h <= 1e-4)) throw Error(ErrorKind::ConfigInvalid, "finite-difference step must be in [1e-8, 1e-4]");
  GsgParams probe = params;
  double& slot = param_ref(probe, selector);
  const double theta = slot;
  return central_difference(
      [&](double v) {
        slot = v;
        return gsg_loss(x_in, probe, upstream);
      },
      theta, h);
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double richardson_difference(const FeatureTensorD& x_in, const GsgParams& params, const FeatureTensorD& upstream,
                             ParamSelector selector, double h) {
  const double coarse = finite_difference_oracle(x_in, params, upstream, selector, h);
  const double fine = finite_difference_oracle(x_in, params, upstream, selector, 0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

GradCheckReport check_spectral_gradient(const FeatureTensorD& x_in, const GsgParams& params,
                                        const FeatureTensorD& upstream, double h) {
  const auto analytic = grad_spectral_weight(x_in, params, upstream);
  GradCheckReport report;
  double scale = std::max(1.0, std::abs(gsg_loss(x_in, params, upstream)));
  for (const auto& g : analytic) scale = std::max({scale, std::abs(g.real()), std::abs(g.imag())});
  report.floor = kGradCheckFloor * scale;
  report.step = h;
  for (ParamGroup group : {ParamGroup::SpectralRe, ParamGroup::SpectralIm}) {
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const ParamSelector sel{group, i};
      const double a = group == ParamGroup::SpectralRe ? analytic[i].real() : analytic[i].imag();
      const double n = richardson_difference(x_in, params, upstream, sel, h);
      const double err = relative_error(a, n, report.floor);
      ++report.components;
      if (report.components == 1 || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst = sel;
      }
    }
  }
  return report;
}

}  // namespace holoev
