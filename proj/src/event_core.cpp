#include "holoev/event_core.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "byte_io.hpp"
#include "holoev/error.hpp"

namespace holoev {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::GeometryMissing: return "GeometryMissing";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::TruncatedRecord: return "TruncatedRecord";
    case ErrorKind::BadPolarity: return "BadPolarity";
    case ErrorKind::SpecInvalid: return "SpecInvalid";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::ChannelOutOfRange: return "ChannelOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::BadBin: return "BadBin";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::SelectorOutOfRange: return "SelectorOutOfRange";
    case ErrorKind::DtypeUnknown: return "DtypeUnknown";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

namespace {

constexpr std::string_view kEventMagic = "HEVS";
constexpr std::uint8_t kEventVersion = 1;
constexpr std::size_t kEventHeaderSize = 20;
constexpr std::size_t kEventRecordSize = 13;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

// Accepts "# geometry 346x260" with arbitrary spacing.
std::optional<Geometry> parse_geometry_comment(std::string_view line) {
  line.remove_prefix(1);  // '#'
  line = trim(line);
  constexpr std::string_view kKey = "geometry";
  if (line.substr(0, kKey.size()) != kKey) return std::nullopt;
  line = trim(line.substr(kKey.size()));
  auto sep = line.find_first_of("xX");
  if (sep == std::string_view::npos) return std::nullopt;
  std::uint16_t w = 0, h = 0;
  if (!parse_number(line.substr(0, sep), w) || !parse_number(line.substr(sep + 1), h)) {
    return std::nullopt;
  }
  if (w == 0 || h == 0) return std::nullopt;
  return Geometry{w, h};
}

std::int8_t canonical_polarity(int p) { return p > 0 ? std::int8_t{1} : std::int8_t{-1}; }

}  // namespace

std::uint64_t EventStream::duration() const noexcept {
  if (events.empty()) return 0;
  auto [lo, hi] = std::minmax_element(events.begin(), events.end(),
                                      [](const Event& a, const Event& b) { return a.t < b.t; });
  return hi->t - lo->t;
}

void normalize(EventStream& stream) {
  auto& ev = stream.events;
  if (ev.empty()) return;
  if (!std::is_sorted(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; })) {
    std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  }
  const std::uint64_t t0 = ev.front().t;
  if (t0 != 0) {
    for (auto& e : ev) e.t -= t0;
  }
}

EventStream parse_events_csv(std::string_view text, std::optional<Geometry> geometry) {
  EventStream stream;
  std::optional<Geometry> comment_geometry;
  bool seen_header = false;
  std::size_t line_no = 0;

  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (auto g = parse_geometry_comment(line)) comment_geometry = g;
      continue;
    }
    if (!seen_header) {
      std::string compact;
      for (char c : line) {
        if (c != ' ' && c != '\t') compact.push_back(c);
      }
      if (compact != "x,y,t,p") {
        throw Error(ErrorKind::MalformedLine, "expected header 'x,y,t,p' at line " + std::to_string(line_no), line_no);
      }
      seen_header = true;
      continue;
    }

    std::string_view fields[4];
    std::size_t n = 0;
    std::string_view rest = line;
    while (true) {
      auto comma = rest.find(',');
      if (n == 4) {
        n = 5;
        break;
      }
      fields[n++] = rest.substr(0, comma);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    Event e;
    int p = 0;
    if (n != 4 || !parse_number(fields[0], e.x) || !parse_number(fields[1], e.y) ||
        !parse_number(fields[2], e.t) || !parse_number(fields[3], p) || p < -1 || p > 1) {
      throw Error(ErrorKind::MalformedLine, "cannot parse event at line " + std::to_string(line_no), line_no);
    }
    e.p = canonical_polarity(p);
    stream.events.push_back(e);
  }

  if (stream.events.empty()) throw Error(ErrorKind::EmptyInput, "no event lines");
  if (geometry) {
    stream.geometry = *geometry;
  } else if (comment_geometry) {
    stream.geometry = *comment_geometry;
  } else {
    throw Error(ErrorKind::GeometryMissing, "no '# geometry WxH' line and no explicit geometry");
  }
  if (stream.geometry.width == 0 || stream.geometry.height == 0) {
    throw Error(ErrorKind::GeometryMissing, "geometry must be non-zero");
  }
  normalize(stream);
  return stream;
}

std::string write_events_csv(const EventStream& stream) {
  std::string out = "# geometry " + std::to_string(stream.geometry.width) + "x" +
                    std::to_string(stream.geometry.height) + "\nx,y,t,p\n";
  for (const auto& e : stream.events) {
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += ',';
    out += std::to_string(e.t);
    out += ',';
    out += std::to_string(static_cast<int>(e.p));
    out += '\n';
  }
  return out;
}

std::vector<std::byte> write_events_binary(const EventStream& stream) {
  detail::ByteWriter w;
  w.reserve(kEventHeaderSize + kEventRecordSize * stream.events.size());
  w.bytes(kEventMagic);
  w.le<std::uint8_t>(kEventVersion);
  w.le<std::uint8_t>(0);
  w.le<std::uint8_t>(0);
  w.le<std::uint8_t>(0);
  w.le<std::uint16_t>(stream.geometry.width);
  w.le<std::uint16_t>(stream.geometry.height);
  w.le<std::uint64_t>(stream.events.size());
  for (const auto& e : stream.events) {
    w.le<std::uint16_t>(e.x);
    w.le<std::uint16_t>(e.y);
    w.le<std::uint64_t>(e.t);
    w.le<std::int8_t>(e.p);
  }
  return w.take();
}

bool looks_like_binary_events(std::span<const std::byte> bytes) noexcept {
  return detail::ByteReader(bytes).match(kEventMagic);
}

EventStream parse_events_binary(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  if (!r.match(kEventMagic)) throw Error(ErrorKind::BadMagic, "expected 'HEVS'");
  if (!r.has(kEventHeaderSize)) {
    throw Error(ErrorKind::TruncatedRecord, "header truncated at offset " + std::to_string(bytes.size()),
                bytes.size());
  }
  r.take(4);
  const auto version = r.le<std::uint8_t>();
  if (version != kEventVersion) {
    throw Error(ErrorKind::VersionUnsupported, "HEVS version " + std::to_string(version));
  }
  r.take(3);
  EventStream stream;
  stream.geometry.width = r.le<std::uint16_t>();
  stream.geometry.height = r.le<std::uint16_t>();
  const auto count = r.le<std::uint64_t>();

  const std::size_t available = r.remaining() / kEventRecordSize;
  if (count > available || r.remaining() != count * kEventRecordSize) {
    const std::size_t complete = std::min<std::uint64_t>(count, available);
    const std::size_t offset = kEventHeaderSize + complete * kEventRecordSize;
    throw Error(ErrorKind::TruncatedRecord,
                "declared " + std::to_string(count) + " records, payload is " +
                    std::to_string(r.remaining()) + " bytes; bad record at offset " + std::to_string(offset),
                offset);
  }

  stream.events.resize(count);
  for (auto& e : stream.events) {
    const std::size_t record_offset = r.offset();
    e.x = r.le<std::uint16_t>();
    e.y = r.le<std::uint16_t>();
    e.t = r.le<std::uint64_t>();
    const auto p = r.le<std::int8_t>();
    if (p < -1 || p > 1) {
      throw Error(ErrorKind::BadPolarity,
                  "polarity " + std::to_string(p) + " at offset " + std::to_string(record_offset), record_offset);
    }
    e.p = canonical_polarity(p);
  }
  normalize(stream);
  return stream;
}

ValidationReport validate_stream(const EventStream& stream) {
  ValidationReport report;
  report.total = stream.events.size();
  bool first = true;
  std::uint64_t latest = 0;
  for (const auto& e : stream.events) {
    if (e.x >= stream.geometry.width || e.y >= stream.geometry.height) {
      ++report.out_of_bounds;
    } else if (!first && e.t < latest) {
      ++report.non_monotonic;
    } else if (e.p != 1 && e.p != -1) {
      ++report.bad_polarity;
    }
    if (first || e.t > latest) latest = e.t;
    first = false;
  }
  return report;
}

EventStream generate_periodic_stream(const PeriodicGenSpec& spec) {
  auto bad = [](const std::string& why) { return Error(ErrorKind::SpecInvalid, why); };
  if (!(std::isfinite(spec.f0) && spec.f0 > 0)) throw bad("f0 must be > 0");
  if (!(std::isfinite(spec.duration_s) && spec.duration_s > 0)) throw bad("duration_s must be > 0");
  if (!(std::isfinite(spec.base_rate) && spec.base_rate >= 0)) throw bad("base_rate must be >= 0");
  if (!(std::isfinite(spec.peak_rate) && spec.peak_rate >= spec.base_rate)) {
    throw bad("peak_rate must be >= base_rate");
  }
  if (spec.geometry.width == 0 || spec.geometry.height == 0) throw bad("geometry must be non-zero");
  if (!(std::isfinite(spec.motion_amplitude) && spec.motion_amplitude >= 0)) {
    throw bad("motion_amplitude must be >= 0");
  }

  EventStream stream;
  stream.geometry = spec.geometry;
  if (spec.peak_rate == 0) return stream;

  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  detail::Rng rng(spec.seed);
  const double w = spec.geometry.width;
  const double h = spec.geometry.height;
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double body_half_height = h / 4.0;
  const double modulation = spec.peak_rate - spec.base_rate;

  stream.events.reserve(static_cast<std::size_t>(spec.peak_rate * spec.duration_s * 0.75) + 16);
  // Homogeneous process at peak_rate, thinned down to r(t).
  double t = 0.0;
  while (true) {
    t += -std::log1p(-rng.uniform()) / spec.peak_rate;
    if (t >= spec.duration_s) break;
    const double phase = kTwoPi * spec.f0 * t;
    const double rate = spec.base_rate + modulation * (1.0 + std::sin(phase)) / 2.0;
    const double accept = rng.uniform();
    const double jitter_x = rng.uniform() - 0.5;
    const double spread_y = 2.0 * rng.uniform() - 1.0;
    if (accept * spec.peak_rate >= rate) continue;

    const double xf = std::clamp(std::round(cx + spec.motion_amplitude * std::sin(phase) + 2.0 * jitter_x), 0.0, w - 1);
    const double yf = std::clamp(std::round(cy + body_half_height * spread_y), 0.0, h - 1);
    Event e;
    e.x = static_cast<std::uint16_t>(xf);
    e.y = static_cast<std::uint16_t>(yf);
    e.t = static_cast<std::uint64_t>(t * 1e6);
    e.p = std::cos(phase) >= 0 ? std::int8_t{1} : std::int8_t{-1};
    stream.events.push_back(e);
  }
  normalize(stream);
  return stream;
}

EventStream generate_uniform_stream(std::size_t count, Geometry geometry, std::uint64_t duration_us,
                                    std::uint64_t seed) {
  if (geometry.width == 0 || geometry.height == 0) {
    throw Error(ErrorKind::SpecInvalid, "geometry must be non-zero");
  }
  detail::Rng rng(seed);
  EventStream stream;
  stream.geometry = geometry;
  stream.events.resize(count);
  for (auto& e : stream.events) {
    e.x = static_cast<std::uint16_t>(rng.below(geometry.width));
    e.y = static_cast<std::uint16_t>(rng.below(geometry.height));
    e.t = rng.below(duration_us + 1);
    e.p = (rng.next() >> 63) ? std::int8_t{1} : std::int8_t{-1};
  }
  normalize(stream);
  return stream;
}

namespace detail {

namespace {
std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace

Rng::Rng(std::uint64_t seed) noexcept {
  for (auto& s : s_) s = splitmix64(seed);
}

std::uint64_t Rng::next() noexcept {
  const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift; the small bias is irrelevant for test data.
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * bound) >> 64);
}

}  // namespace detail

}  // namespace holoev
