#pragma once

// Event stream -> dense T-H representation with polarity densities and a
// sinusoidal embedding of horizontal position, plus the planar projection
// views it is compared against.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "holoev/event_core.hpp"
#include "holoev/tensor.hpp"

namespace holoev {

enum class Normalize { None, PerChannelMax, Log1p };

enum class ViewKind { HW, TW, TH };

std::optional<Normalize> parse_normalize(std::string_view name);
std::string_view to_string(Normalize mode);
std::optional<ViewKind> parse_view(std::string_view name);
std::string_view to_string(ViewKind view);

struct EncodeConfig {
  std::uint32_t t_bins = 224;
  /// Height bins; the sensor height when unset.
  std::optional<std::uint32_t> h_bins;
  /// Width bins (projection views only); the sensor width when unset.
  std::optional<std::uint32_t> w_bins;
  Normalize normalize = Normalize::None;
  /// Worker count for accumulation. Integer channels do not depend on it.
  unsigned threads = 1;
};

/// Channels: 0 = positive density, 1 = negative density, 2 = holographic map.
struct ChsrTensor {
  Tensor3 data;
  std::uint64_t dropped = 0;
  EncodeConfig config;
};

/// Channels: 0 = positive density, 1 = negative density.
struct ViewTensor {
  ViewKind view = ViewKind::TH;
  Tensor3 data;
  std::uint64_t dropped = 0;
};

/// Transverse embedding sin(pi * x / w_sensor).
double phi(double x, double w_sensor) noexcept;

/// Events outside the geometry (or with a polarity other than +/-1) are
/// counted in `dropped` and otherwise ignored. An empty stream encodes to an
/// all-zero tensor.
ChsrTensor encode_chsr(const EventStream& stream, const EncodeConfig& config = {});

ViewTensor encode_view(const EventStream& stream, ViewKind view, const EncodeConfig& config = {});

/// Binary PGM (P5, maxval 255) of one channel, min-max scaled.
std::vector<std::byte> export_channel_image(const Tensor3& tensor, std::size_t channel);
inline std::vector<std::byte> export_channel_image(const ChsrTensor& t, std::size_t channel) {
  return export_channel_image(t.data, channel);
}
inline std::vector<std::byte> export_channel_image(const ViewTensor& t, std::size_t channel) {
  return export_channel_image(t.data, channel);
}

}  // namespace holoev
