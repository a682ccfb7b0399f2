#include <doctest.h>

#include <cmath>
#include <limits>

#include "holoev/error.hpp"
#include "holoev/gsg.hpp"
#include "oracles.hpp"

using namespace holoev;
using holoev::testing::max_abs_diff;
using holoev::testing::random_feature;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected holoev::Error");
  return ErrorKind::Io;
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// SiLU(LayerNorm(z)) per location with unit affine, no gate.
FeatureTensorD silu_ln(const FeatureTensorD& z, const GsgParams& p) {
  auto open = p;
  std::fill(open.gate_weight.begin(), open.gate_weight.end(), 0.0);
  std::fill(open.gate_bias.begin(), open.gate_bias.end(), 60.0);  // sigmoid(60) == 1 in double
  return testing::naive_gate(z, open);
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

template <typename Real>
double max_diff(const FeatureTensor<Real>& a, const FeatureTensorD& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.values()[i]) - b.values()[i]));
  return m;
}

std::vector<Complex> constant_weights(const FeatureTensorD& x, Complex w) {
  return std::vector<Complex>(x.channels() * x.rows() * (x.cols() / 2 + 1), w);
}

}  // namespace

TEST_SUITE("gsg") {
  TEST_CASE("feature tensor rejects bad sizes and non-finite values") {
    CHECK(kind_of([] { FeatureTensorD(1, 2, 2, std::vector<double>(3)); }) == ErrorKind::ShapeMismatch);
    std::vector<double> v(4, 0.0);
    v[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK(kind_of([&] { FeatureTensorD(1, 2, 2, v); }) == ErrorKind::NonFinite);
    v[2] = std::numeric_limits<double>::infinity();
    CHECK(kind_of([&] { FeatureTensorF(1, 2, 2, {0.f, 0.f, INFINITY, 0.f}); }) == ErrorKind::NonFinite);
  }

  TEST_CASE("depthwise: identity and zero kernels") {
    const auto x = random_feature(3, 5, 6, 1);
    const auto id = GsgParams::identity(3, 5, 6);
    CHECK(max_abs_diff(depthwise_conv3x3(x, id.dw_kernel).values(), x.values()) == 0.0);
    const std::vector<double> zero(27, 0.0);
    CHECK(inf_norm(depthwise_conv3x3(x, zero).values()) == 0.0);
  }

  TEST_CASE("depthwise: matches the nested-loop reference") {
    const auto x = random_feature(2, 5, 5, 2);
    const auto p = GsgParams::random(2, 5, 5, 3);
    const auto ref = testing::naive_depthwise(x, p.dw_kernel);
    CHECK(max_diff(depthwise_conv3x3(x, p.dw_kernel), ref) < 1e-12);
    CHECK(max_diff(depthwise_conv3x3(feature_cast<float>(x), p.dw_kernel), ref) < 1e-6);
    CHECK(kind_of([&] { depthwise_conv3x3(x, std::span(p.dw_kernel).first(9)); }) == ErrorKind::ShapeMismatch);
  }

  TEST_CASE("spectral filter: unit weights are the identity up to 64x64") {
    for (auto [T, H] : {std::pair{1u, 1u}, {3u, 5u}, {6u, 7u}, {16u, 9u}, {33u, 64u}, {64u, 64u}}) {
      const auto x = random_feature(2, T, H, T * H);
      const auto w = constant_weights(x, {1.0, 0.0});
      CHECK(max_diff(spectral_filter(feature_cast<float>(x), w), x) < 1e-6);
      CHECK(max_diff(spectral_filter(x, w), x) < 1e-12);
    }
  }

  TEST_CASE("spectral filter: zero weights, DC-only weight, homogeneity") {
    const auto x = random_feature(2, 4, 6, 9);
    CHECK(inf_norm(spectral_filter(x, constant_weights(x, {})).values()) == 0.0);

    auto dc = constant_weights(x, {});
    const std::size_t bins = 4 * 4;
    dc[0] = 1.0;
    dc[bins] = 1.0;
    const auto m = spectral_filter(x, dc);
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (double v : x.channel(c)) mean += v / 24.0;
      for (double v : m.channel(c)) CHECK(v == doctest::Approx(mean).epsilon(1e-12));
    }

    const auto p = GsgParams::random(2, 4, 6, 10);
    FeatureTensorD scaled = x;
    for (auto& v : scaled.values()) v *= -2.5;
    const auto a = spectral_filter(x, p.spectral_weight);
    const auto b = spectral_filter(scaled, p.spectral_weight);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b.values()[i] == doctest::Approx(-2.5 * a.values()[i]).epsilon(1e-12));
  }

  TEST_CASE("spectral filter: random weights match the direct transform") {
    for (auto [T, H] : {std::pair{6u, 7u}, {5u, 4u}, {1u, 6u}, {4u, 1u}}) {
      const auto x = random_feature(3, T, H, 11 + T);
      const auto p = GsgParams::random(3, T, H, 12 + H);
      CHECK(max_diff(spectral_filter(x, p.spectral_weight), testing::naive_spectral(x, p.spectral_weight)) < 1e-9);
    }
  }

  TEST_CASE("spectral filter: weight shape and finiteness") {
    const auto x = random_feature(2, 4, 6, 1);
    auto w = constant_weights(x, {1.0, 0.0});
    w.pop_back();
    CHECK(kind_of([&] { spectral_filter(x, w); }) == ErrorKind::ShapeMismatch);
    w.push_back({std::numeric_limits<double>::quiet_NaN(), 0.0});
    CHECK(kind_of([&] { spectral_filter(x, w); }) == ErrorKind::NonFinite);
  }

  TEST_CASE("gate: closed, open, single channel") {
    const auto z = random_feature(4, 5, 6, 21);
    auto p = GsgParams::random(4, 5, 6, 22);
    const auto reference = silu_ln(z, p);

    std::fill(p.gate_weight.begin(), p.gate_weight.end(), 0.0);
    std::fill(p.gate_bias.begin(), p.gate_bias.end(), -20.0);
    const auto closed = gated_reconstruction(z, p);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(std::abs(closed.values()[i]) < 1e-6 * std::abs(reference.values()[i]) + 1e-300);
    }

    std::fill(p.gate_bias.begin(), p.gate_bias.end(), 20.0);
    CHECK(max_diff(gated_reconstruction(z, p), reference) < 1e-6 * (1.0 + inf_norm(reference.values())));

    // One channel: the normalized value is identically 0, leaving SiLU(beta).
    const auto z1 = random_feature(1, 3, 3, 23);
    auto p1 = GsgParams::random(1, 3, 3, 24);
    p1.ln_beta[0] = 0.7;
    const auto g1 = gated_reconstruction(z1, p1);
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t h = 0; h < 3; ++h) {
        const double gate = sig(p1.gate_weight[0] * z1.at(0, t, h) + p1.gate_bias[0]);
        CHECK(g1.at(0, t, h) == doctest::Approx(0.7 * sig(0.7) * gate).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("gate: matches the per-location reference") {
    const auto z = random_feature(3, 4, 5, 25, 2.0);
    const auto p = GsgParams::random(3, 4, 5, 26);
    CHECK(max_diff(gated_reconstruction(z, p), testing::naive_gate(z, p)) < 1e-12);
    CHECK(max_diff(gated_reconstruction(feature_cast<float>(z), p), testing::naive_gate(z, p)) < 1e-5);
  }

  TEST_CASE("forward: composition matches the reference chain") {
    for (auto [C, T, H] : {std::tuple{2u, 6u, 6u}, {3u, 5u, 7u}, {1u, 4u, 4u}}) {
      const auto x = random_feature(C, T, H, C + T + H);
      const auto p = GsgParams::random(C, T, H, 31);
      CHECK(max_diff(gsg_forward(x, p), testing::naive_gsg(x, p)) < 1e-10);
      CHECK(max_diff(gsg_forward(feature_cast<float>(x), p), testing::naive_gsg(x, p)) < 1e-5);
    }
  }

  TEST_CASE("forward: frozen reference from an independent autograd implementation") {
    // Closed-form inputs; tests/data/gsg_reference.py regenerates the values.
    constexpr std::size_t C = 2, T = 3, H = 4, K = 3;
    FeatureTensorD x(C, T, H), u(C, T, H);
    GsgParams p = GsgParams::identity(C, T, H);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t h = 0; h < H; ++h) {
          x.at(c, t, h) = std::sin(0.7 * c + 1.3 * t + 0.45 * h + 0.2);
          u.at(c, t, h) = std::cos(0.3 * c - 0.8 * t + 0.6 * h);
        }
      }
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) p.dw_kernel[c * 9 + i * 3 + j] = 0.1 * std::cos(c + 2.0 * i + 3.0 * j) + (i == 1 && j == 1);
      for (std::size_t j = 0; j < T; ++j)
        for (std::size_t q = 0; q < K; ++q)
          p.spectral_weight[(c * T + j) * K + q] = {1 + 0.3 * std::sin(c + j + 2.0 * q),
                                                    0.2 * std::cos(3.0 * c + static_cast<double>(j) - static_cast<double>(q))};
      p.ln_gamma[c] = 1 + 0.1 * c;
      p.ln_beta[c] = 0.05 - 0.1 * c;
      p.gate_bias[c] = 0.1 * c - 0.05;
      for (std::size_t i = 0; i < C; ++i) p.gate_weight[c * C + i] = 0.2 * std::sin(c + 2.0 * i + 1);
    }

    const std::vector<double> out = {
        0.063950847896740132, 0.46545860933217104, 1.3053766402459848,  1.413305673817709,
        1.4182281013621676,   1.3488033641469523,  1.0801234531849333,  0.6727355509507853,
        0.71823625464521779,  0.25834165727272423, -0.1809593810572,    -0.50136860454211785,
        1.1679228148544036,   1.370280695682299,   0.82931301238902488, 0.63354648855461537,
        0.66172231310987406,  0.32275252001631283, -0.10620653210767812, -0.54496913194314611,
        -0.500464523897727,   -0.86873814275736738, -1.0949706763836931, -1.1329978598353565};
    const std::vector<double> grad_re = {
        0.062303843226289027,  -0.00042719994993630677, 0.0020950833232347612, 0.0055745644436107815,
        -0.0089952945807204431, -0.0053178539611998801, 0.0055745644436107815, -0.007436141757046673,
        -0.0053178539611998801, 0.0034163172146585508,  -0.009162554753286237, -0.0029889091928644702,
        -0.036185231981771565, 0.0055281015173237269,   0.0016226557055693867, -0.036185231981771565,
        0.0038883259708963921, 0.0016226557055693867};
    const std::vector<double> grad_im = {
        0, -0.0072076118365800978, 0, -0.0035734839042584413, 0.0087446815208398199, 0.0010523108026812033,
        0.0035734839042584413, -0.00064771330896237289, -0.0010523108026812033, 0, -0.0043181634470732307, 0,
        -0.030153898183749552, -0.0023879357866058546, -0.00036636839182925161, 0.030153898183749552,
        -0.001642485152862995, 0.00036636839182925166};

    CHECK(max_abs_diff(gsg_forward(x, p).values(), out) < 1e-12);
    const auto g = grad_spectral_weight(x, p, u);
    REQUIRE(g.size() == grad_re.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(g[i].real() == doctest::Approx(grad_re[i]).epsilon(1e-10));
      CHECK(std::abs(g[i].imag() - grad_im[i]) < 1e-12);
    }
  }

  TEST_CASE("forward: identity parameters add the open-gated branch") {
    const auto x = random_feature(3, 4, 5, 41);
    const auto p = GsgParams::identity(3, 4, 5);
    const auto y = gsg_forward(x, p);
    const auto branch = silu_ln(x, p);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(y.values()[i] == doctest::Approx(x.values()[i] + branch.values()[i] * sig(20.0)).epsilon(1e-12));
    }
  }

  TEST_CASE("forward: closed gate leaves the residual") {
    const auto x = random_feature(4, 8, 8, 42, 5.0);
    auto p = GsgParams::random(4, 8, 8, 43);
    std::fill(p.gate_weight.begin(), p.gate_weight.end(), 0.0);
    std::fill(p.gate_bias.begin(), p.gate_bias.end(), -20.0);
    const auto y = gsg_forward(x, p);
    CHECK(max_diff(y, x) < 1e-6 * (1.0 + inf_norm(x.values())));
  }

  TEST_CASE("forward: shapes preserved, outputs finite") {
    for (std::size_t C : {1u, 2u, 7u, 8u}) {
      for (std::size_t T : {1u, 2u, 7u, 8u}) {
        for (std::size_t H : {1u, 2u, 7u, 8u}) {
          const auto x = random_feature(C, T, H, C * 100 + T * 10 + H);
          const auto y = gsg_forward(feature_cast<float>(x), GsgParams::random(C, T, H, 5));
          CHECK(y.channels() == C);
          CHECK(y.rows() == T);
          CHECK(y.cols() == H);
          for (float v : y.values()) CHECK(std::isfinite(v));
        }
      }
    }
  }

  TEST_CASE("forward: parameter validation") {
    const auto x = random_feature(2, 4, 6, 1);
    CHECK(kind_of([&] { gsg_forward(x, GsgParams::identity(2, 4, 5)); }) == ErrorKind::ShapeMismatch);
    CHECK(kind_of([&] { gsg_forward(x, GsgParams::identity(3, 4, 6)); }) == ErrorKind::ShapeMismatch);
    auto p = GsgParams::identity(2, 4, 6);
    p.ln_gamma.pop_back();
    CHECK(kind_of([&] { gsg_forward(x, p); }) == ErrorKind::ShapeMismatch);
    p = GsgParams::identity(2, 4, 6);
    p.gate_bias[1] = std::numeric_limits<double>::infinity();
    CHECK(kind_of([&] { gsg_forward(x, p); }) == ErrorKind::NonFinite);
  }

  TEST_CASE("gradient: zero upstream gives zero") {
    const auto x = random_feature(2, 4, 5, 51);
    const auto p = GsgParams::random(2, 4, 5, 52);
    for (const auto& g : grad_spectral_weight(x, p, FeatureTensorD(2, 4, 5))) CHECK(g == Complex{});
  }

  TEST_CASE("gradient: one component on 1x4x4 with a 1e-6 step") {
    const auto x = random_feature(1, 4, 4, 61);
    const auto p = GsgParams::random(1, 4, 4, 62);
    const auto u = random_feature(1, 4, 4, 63);
    const auto g = grad_spectral_weight(x, p, u);
    for (std::size_t i : {0u, 4u, 7u}) {
      const double fd = finite_difference_oracle(x, p, u, {ParamGroup::SpectralRe, i}, 1e-6);
      CHECK(relative_error(g[i].real(), fd) < 1e-4);
    }
  }

  TEST_CASE("gradient: every component on random cases") {
    for (auto [C, T, H] : {std::tuple{1u, 4u, 4u}, {2u, 6u, 6u}, {2u, 5u, 7u}, {3u, 3u, 4u}, {1u, 1u, 1u}, {2u, 1u, 6u}}) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto x = random_feature(C, T, H, seed);
        const auto p = GsgParams::random(C, T, H, seed + 7);
        const auto u = random_feature(C, T, H, seed + 100);
        const auto r = check_spectral_gradient(x, p, u);
        CHECK(r.components == 2 * C * T * (H / 2 + 1));
        CHECK_MESSAGE(r.max_relative_error < 1e-4, C << "x" << T << "x" << H << " seed " << seed);
      }
    }
  }

  TEST_CASE("gradient: imaginary parts at self-conjugate bins have no effect") {
    const auto x = random_feature(1, 4, 6, 71);
    const auto p = GsgParams::random(1, 4, 6, 72);
    const auto u = random_feature(1, 4, 6, 73);
    const auto g = grad_spectral_weight(x, p, u);
    // (j, k) in {0, 2} x {0, 3} with 4 half-spectrum columns.
    for (std::size_t i : {0u, 3u, 8u, 11u}) CHECK(std::abs(g[i].imag()) < 1e-14);
  }

  TEST_CASE("finite differences: exact on a quadratic, second order on the loss") {
    const auto quad = [](double v) { return 3.0 * v * v - 2.0 * v + 1.0; };
    for (double h : {1e-4, 1e-6, 1e-8}) CHECK(central_difference(quad, 0.75, h) == doctest::Approx(2.5).epsilon(1e-7));
    CHECK(std::abs(central_difference(quad, 0.75, 1e-4) - 2.5) < 1e-10);

    // Strongly curved component so truncation dominates rounding at these steps.
    const auto x = random_feature(2, 4, 4, 81, 30.0);
    const auto p = GsgParams::random(2, 4, 4, 82);
    const auto u = random_feature(2, 4, 4, 83);
    const auto g = grad_spectral_weight(x, p, u);
    std::size_t pick = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double e = std::abs(finite_difference_oracle(x, p, u, {ParamGroup::SpectralRe, i}, 1e-4) - g[i].real());
      if (e > worst) {
        worst = e;
        pick = i;
      }
    }
    const ParamSelector sel{ParamGroup::SpectralRe, pick};
    const double e1 = std::abs(finite_difference_oracle(x, p, u, sel, 1e-4) - g[pick].real());
    const double e2 = std::abs(finite_difference_oracle(x, p, u, sel, 5e-5) - g[pick].real());
    const double e3 = std::abs(finite_difference_oracle(x, p, u, sel, 2.5e-5) - g[pick].real());
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.25));
    CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.25));
  }

  TEST_CASE("finite differences: selector and step validation") {
    const auto x = random_feature(2, 3, 4, 91);
    auto p = GsgParams::random(2, 3, 4, 92);
    const auto u = random_feature(2, 3, 4, 93);
    CHECK(kind_of([&] { finite_difference_oracle(x, p, u, {ParamGroup::SpectralIm, 18}, 1e-6); }) ==
          ErrorKind::SelectorOutOfRange);
    CHECK(kind_of([&] { finite_difference_oracle(x, p, u, {ParamGroup::GateWeight, 4}, 1e-6); }) ==
          ErrorKind::SelectorOutOfRange);
    CHECK(kind_of([&] { finite_difference_oracle(x, p, u, {ParamGroup::LnBeta, 0}, 1e-3); }) == ErrorKind::ConfigInvalid);
    CHECK(kind_of([&] { finite_difference_oracle(x, p, u, {ParamGroup::LnBeta, 0}, 1e-9); }) == ErrorKind::ConfigInvalid);
    CHECK_NOTHROW(finite_difference_oracle(x, p, u, {ParamGroup::LnBeta, 1}, 1e-8));

    // Every group is reachable and the oracle does not modify its input.
    for (ParamGroup group : {ParamGroup::DwKernel, ParamGroup::SpectralRe, ParamGroup::SpectralIm, ParamGroup::LnGamma,
                             ParamGroup::LnBeta, ParamGroup::GateWeight, ParamGroup::GateBias}) {
      const auto before = param_ref(p, {group, 0});
      const double d = finite_difference_oracle(x, p, u, {group, 0}, 1e-5);
      CHECK(std::isfinite(d));
      CHECK(param_ref(p, {group, 0}) == before);
    }
  }

  TEST_CASE("relative error") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
    CHECK(relative_error(0.0, 1e-9) == doctest::Approx(1e-3));
    CHECK(relative_error(0.0, 1e-9, 1e-3) == doctest::Approx(1e-6));
  }
}
