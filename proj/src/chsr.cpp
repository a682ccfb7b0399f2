#include "holoev/chsr.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <thread>

#include "holoev/error.hpp"

namespace holoev {

std::optional<Normalize> parse_normalize(std::string_view name) {
  if (name == "none") return Normalize::None;
  if (name == "per_channel_max") return Normalize::PerChannelMax;
  if (name == "log1p") return Normalize::Log1p;
  return std::nullopt;
}

std::string_view to_string(Normalize mode) {
  switch (mode) {
    case Normalize::None: return "none";
    case Normalize::PerChannelMax: return "per_channel_max";
    case Normalize::Log1p: return "log1p";
  }
  return "none";
}

std::optional<ViewKind> parse_view(std::string_view name) {
  if (name == "hw") return ViewKind::HW;
  if (name == "tw") return ViewKind::TW;
  if (name == "th") return ViewKind::TH;
  return std::nullopt;
}

std::string_view to_string(ViewKind view) {
  switch (view) {
    case ViewKind::HW: return "hw";
    case ViewKind::TW: return "tw";
    case ViewKind::TH: return "th";
  }
  return "th";
}

double phi(double x, double w_sensor) noexcept { return std::sin(std::numbers::pi * x / w_sensor); }

namespace {

// Per-event bin lookups shared by every encoder.
class Binner {
 public:
  Binner(const EventStream& stream, const EncodeConfig& cfg)
      : width_(stream.geometry.width),
        height_(stream.geometry.height),
        t_bins_(cfg.t_bins),
        h_bins_(cfg.h_bins.value_or(stream.geometry.height)),
        w_bins_(cfg.w_bins.value_or(stream.geometry.width)) {
    if (t_bins_ == 0 || h_bins_ == 0 || w_bins_ == 0) {
      throw Error(ErrorKind::ConfigInvalid, "bin counts must be >= 1");
    }
    if (cfg.threads == 0) throw Error(ErrorKind::ConfigInvalid, "threads must be >= 1");

    if (!stream.events.empty()) {
      auto [lo, hi] = std::minmax_element(stream.events.begin(), stream.events.end(),
                                          [](const Event& a, const Event& b) { return a.t < b.t; });
      t_min_ = lo->t;
      span_ = static_cast<unsigned __int128>(hi->t - lo->t) + 1;
    }
    // duration * t_bins fits in 64 bits for any realistic recording.
    narrow_ = span_ <= (~std::uint64_t{0}) / t_bins_;

    y_bin_.resize(height_);
    for (std::uint32_t y = 0; y < height_; ++y) {
      y_bin_[y] = static_cast<std::uint32_t>(std::uint64_t{y} * h_bins_ / height_);
    }
    x_bin_.resize(width_);
    phi_.resize(width_);
    for (std::uint32_t x = 0; x < width_; ++x) {
      x_bin_[x] = static_cast<std::uint32_t>(std::uint64_t{x} * w_bins_ / width_);
      phi_[x] = phi(x, width_);
    }
  }

  bool in_domain(const Event& e) const noexcept {
    return e.x < width_ && e.y < height_ && (e.p == 1 || e.p == -1);
  }
  std::uint32_t t_bin(const Event& e) const noexcept {
    const std::uint64_t rel = e.t - t_min_;
    if (narrow_) return static_cast<std::uint32_t>(rel * t_bins_ / static_cast<std::uint64_t>(span_));
    return static_cast<std::uint32_t>(static_cast<unsigned __int128>(rel) * t_bins_ / span_);
  }
  std::uint32_t y_bin(const Event& e) const noexcept { return y_bin_[e.y]; }
  std::uint32_t x_bin(const Event& e) const noexcept { return x_bin_[e.x]; }
  double phi_of(const Event& e) const noexcept { return phi_[e.x]; }

  std::uint32_t t_bins() const noexcept { return t_bins_; }
  std::uint32_t h_bins() const noexcept { return h_bins_; }
  std::uint32_t w_bins() const noexcept { return w_bins_; }

 private:
  std::uint32_t width_, height_;
  std::uint32_t t_bins_, h_bins_, w_bins_;
  std::uint64_t t_min_ = 0;
  unsigned __int128 span_ = 1;
  bool narrow_ = true;
  std::vector<std::uint32_t> y_bin_, x_bin_;
  std::vector<double> phi_;
};

struct Accumulator {
  std::vector<std::uint64_t> positive, negative;
  std::vector<double> holo;  // empty for projection views
  std::uint64_t dropped = 0;

  Accumulator(std::size_t cells, bool with_holo)
      : positive(cells, 0), negative(cells, 0), holo(with_holo ? cells : 0, 0.0) {}
};

// Accumulates `events` into `acc`; `cell_of` maps an in-domain event to a
// flat cell index.
template <typename CellFn>
void accumulate(std::span<const Event> events, const Binner& binner, CellFn cell_of, Accumulator& acc) {
  const bool with_holo = !acc.holo.empty();
  for (const Event& e : events) {
    if (!binner.in_domain(e)) {
      ++acc.dropped;
      continue;
    }
    const std::size_t cell = cell_of(e);
    if (e.p > 0) {
      ++acc.positive[cell];
    } else {
      ++acc.negative[cell];
    }
    if (with_holo) acc.holo[cell] += binner.phi_of(e);
  }
}

// Splits events into `threads` contiguous chunks, accumulates each privately,
// then reduces in worker-index order.
template <typename CellFn>
Accumulator accumulate_parallel(const EventStream& stream, const Binner& binner, std::size_t cells,
                                bool with_holo, unsigned threads, CellFn cell_of) {
  const std::span<const Event> events(stream.events);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, events.size()));
  if (workers == 1) {
    Accumulator acc(cells, with_holo);
    accumulate(events, binner, cell_of, acc);
    return acc;
  }

  std::vector<Accumulator> partial;
  partial.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) partial.emplace_back(cells, with_holo);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (events.size() + workers - 1) / workers;
    for (std::size_t i = 0; i < workers; ++i) {
      const std::size_t begin = std::min(events.size(), i * chunk);
      const std::size_t end = std::min(events.size(), begin + chunk);
      pool.emplace_back([&, i, begin, end] {
        accumulate(events.subspan(begin, end - begin), binner, cell_of, partial[i]);
      });
    }
  }

  Accumulator total = std::move(partial[0]);
  for (std::size_t i = 1; i < workers; ++i) {
    const auto& p = partial[i];
    for (std::size_t c = 0; c < cells; ++c) {
      total.positive[c] += p.positive[c];
      total.negative[c] += p.negative[c];
    }
    for (std::size_t c = 0; c < total.holo.size(); ++c) total.holo[c] += p.holo[c];
    total.dropped += p.dropped;
  }
  return total;
}

void apply_normalization(Tensor3& t, Normalize mode) {
  switch (mode) {
    case Normalize::None:
      return;
    case Normalize::PerChannelMax:
      for (std::size_t c = 0; c < t.channels(); ++c) {
        auto ch = t.channel(c);
        const double peak = ch.empty() ? 0.0 : *std::max_element(ch.begin(), ch.end());
        if (peak > 0) {
          for (double& v : ch) v /= peak;
        }
      }
      return;
    case Normalize::Log1p:
      for (double& v : t.data) v = std::log1p(v);
      return;
  }
}

void fill_counts(Tensor3& out, const Accumulator& acc) {
  auto pos = out.channel(0);
  auto neg = out.channel(1);
  for (std::size_t c = 0; c < pos.size(); ++c) {
    pos[c] = static_cast<double>(acc.positive[c]);
    neg[c] = static_cast<double>(acc.negative[c]);
  }
}

}  // namespace

ChsrTensor encode_chsr(const EventStream& stream, const EncodeConfig& config) {
  const Binner binner(stream, config);
  const std::size_t rows = binner.t_bins();
  const std::size_t cols = binner.h_bins();

  ChsrTensor out;
  out.config = config;
  out.config.h_bins = binner.h_bins();
  out.config.w_bins = binner.w_bins();
  out.data = Tensor3(3, rows, cols);

  const auto acc = accumulate_parallel(stream, binner, rows * cols, true, config.threads,
                                       [&binner, cols](const Event& e) -> std::size_t {
                                         return std::size_t{binner.t_bin(e)} * cols + binner.y_bin(e);
                                       });
  fill_counts(out.data, acc);
  std::copy(acc.holo.begin(), acc.holo.end(), out.data.channel(2).begin());
  out.dropped = acc.dropped;
  apply_normalization(out.data, config.normalize);
  return out;
}

ViewTensor encode_view(const EventStream& stream, ViewKind view, const EncodeConfig& config) {
  const Binner binner(stream, config);
  ViewTensor out;
  out.view = view;

  auto run = [&](std::size_t rows, std::size_t cols, auto cell_of) {
    out.data = Tensor3(2, rows, cols);
    const auto acc = accumulate_parallel(stream, binner, rows * cols, false, config.threads, cell_of);
    fill_counts(out.data, acc);
    out.dropped = acc.dropped;
  };

  switch (view) {
    case ViewKind::HW: {
      const std::size_t cols = binner.w_bins();
      run(binner.h_bins(), cols, [&binner, cols](const Event& e) -> std::size_t {
        return std::size_t{binner.y_bin(e)} * cols + binner.x_bin(e);
      });
      break;
    }
    case ViewKind::TW: {
      const std::size_t cols = binner.w_bins();
      run(binner.t_bins(), cols, [&binner, cols](const Event& e) -> std::size_t {
        return std::size_t{binner.t_bin(e)} * cols + binner.x_bin(e);
      });
      break;
    }
    case ViewKind::TH: {
      const std::size_t cols = binner.h_bins();
      run(binner.t_bins(), cols, [&binner, cols](const Event& e) -> std::size_t {
        return std::size_t{binner.t_bin(e)} * cols + binner.y_bin(e);
      });
      break;
    }
  }
  apply_normalization(out.data, config.normalize);
  return out;
}

std::vector<std::byte> export_channel_image(const Tensor3& tensor, std::size_t channel) {
  if (channel >= tensor.channels()) {
    throw Error(ErrorKind::ChannelOutOfRange,
                "channel " + std::to_string(channel) + " of " + std::to_string(tensor.channels()));
  }
  const std::string header =
      "P5\n" + std::to_string(tensor.cols()) + " " + std::to_string(tensor.rows()) + "\n255\n";
  std::vector<std::byte> out;
  out.reserve(header.size() + tensor.plane_size());
  for (char c : header) out.push_back(static_cast<std::byte>(c));

  const auto ch = tensor.channel(channel);
  double lo = 0.0, hi = 0.0;
  if (!ch.empty()) {
    auto [mn, mx] = std::minmax_element(ch.begin(), ch.end());
    lo = *mn;
    hi = *mx;
  }
  const double range = hi - lo;
  for (double v : ch) {
    std::uint8_t px = 0;
    if (range > 0) px = static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / range));
    out.push_back(static_cast<std::byte>(px));
  }
  return out;
}

}  // namespace holoev
