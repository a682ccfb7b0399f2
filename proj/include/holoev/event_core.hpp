#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace holoev {

struct Geometry {
  std::uint16_t width = 0;
  std::uint16_t height = 0;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// One asynchronous brightness-change sample. `t` is in microseconds.
struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint64_t t = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
  Geometry geometry;
  std::vector<Event> events;

  /// t_max - t_min over all events, 0 for an empty stream.
  std::uint64_t duration() const noexcept;
  std::size_t size() const noexcept { return events.size(); }

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

struct ValidationReport {
  std::size_t total = 0;
  std::size_t out_of_bounds = 0;
  std::size_t non_monotonic = 0;
  std::size_t bad_polarity = 0;

  std::size_t defects() const noexcept { return out_of_bounds + non_monotonic + bad_polarity; }
  std::size_t valid() const noexcept { return total - defects(); }
};

struct PeriodicGenSpec {
  double f0 = 3.21;
  double duration_s = 10.0;
  double base_rate = 20000.0;
  double peak_rate = 60000.0;
  Geometry geometry{346, 260};
  double motion_amplitude = 60.0;
  std::uint64_t seed = 42;
};

/// Stable sort by timestamp, then shift so the first event is at t = 0.
void normalize(EventStream& stream);

/// Parses the `x,y,t,p` text format. An explicit geometry overrides the
/// `# geometry WxH` comment line.
EventStream parse_events_csv(std::string_view text,
                             std::optional<Geometry> geometry = std::nullopt);

std::vector<std::byte> write_events_binary(const EventStream& stream);
EventStream parse_events_binary(std::span<const std::byte> bytes);

std::string write_events_csv(const EventStream& stream);

/// True when the buffer starts with the binary stream magic.
bool looks_like_binary_events(std::span<const std::byte> bytes) noexcept;

ValidationReport validate_stream(const EventStream& stream);

EventStream generate_periodic_stream(const PeriodicGenSpec& spec);

/// Uniform random events over the sensor and [0, duration_us], sorted.
/// Used by benchmarks and tests; polarity is +1/-1 with equal probability.
EventStream generate_uniform_stream(std::size_t count, Geometry geometry,
                                    std::uint64_t duration_us, std::uint64_t seed);

namespace detail {

// splitmix64-seeded xoshiro256**; the standard distributions are not
// reproducible across library implementations, so draws are done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;
  std::uint64_t next() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

 private:
  std::uint64_t s_[4];
};

}  // namespace detail

}  // namespace holoev
