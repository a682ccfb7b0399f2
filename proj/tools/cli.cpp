#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "holoev/chsr.hpp"
#include "holoev/error.hpp"
#include "holoev/event_core.hpp"
#include "holoev/gsg.hpp"
#include "holoev/io_formats.hpp"
#include "holoev/spectral.hpp"

namespace holoev::cli {

namespace {

namespace fs = std::filesystem;

// Raised for flag combinations CLI11 cannot express; maps to exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<Geometry> parse_geometry(const std::string& text) {
  const auto sep = text.find_first_of("xX");
  if (sep == std::string::npos) return std::nullopt;
  unsigned w = 0, h = 0;
  const char* b = text.data();
  const char* e = text.data() + text.size();
  auto r1 = std::from_chars(b, b + sep, w);
  auto r2 = std::from_chars(b + sep + 1, e, h);
  if (r1.ec != std::errc{} || r1.ptr != b + sep || r2.ec != std::errc{} || r2.ptr != e) return std::nullopt;
  if (w == 0 || h == 0 || w > 0xFFFF || h > 0xFFFF) return std::nullopt;
  return Geometry{static_cast<std::uint16_t>(w), static_cast<std::uint16_t>(h)};
}

Geometry require_geometry(const std::string& flag, const std::string& text) {
  auto g = parse_geometry(text);
  if (!g) throw UsageError(flag + " must look like WxH with 1 <= W, H <= 65535, got '" + text + "'");
  return *g;
}

EventStream load_stream(const fs::path& path, std::optional<Geometry> geometry) {
  const auto bytes = read_file(path);
  if (looks_like_binary_events(bytes)) return parse_events_binary(bytes);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return parse_events_csv(text, geometry);
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string dims_string(const Tensor3& t) {
  return std::to_string(t.channels()) + "x" + std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  double f0 = 3.21;
  double duration = 10.0;
  double rate_base = 20000.0;
  double rate_peak = 60000.0;
  std::string geometry = "346x260";
  double amplitude = 60.0;
  std::uint64_t seed = 42;
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  if (!(a.f0 > 0) || !std::isfinite(a.f0)) throw UsageError("--f0 must be > 0");
  if (!(a.duration > 0) || !std::isfinite(a.duration)) throw UsageError("--duration must be > 0");
  if (!(a.rate_base >= 0)) throw UsageError("--rate-base must be >= 0");
  if (!(a.rate_peak >= a.rate_base)) throw UsageError("--rate-peak must be >= --rate-base");
  if (!(a.amplitude >= 0)) throw UsageError("--amplitude must be >= 0");

  PeriodicGenSpec spec;
  spec.f0 = a.f0;
  spec.duration_s = a.duration;
  spec.base_rate = a.rate_base;
  spec.peak_rate = a.rate_peak;
  spec.geometry = require_geometry("--geometry", a.geometry);
  spec.motion_amplitude = a.amplitude;
  spec.seed = a.seed;

  const auto stream = generate_periodic_stream(spec);
  write_file_atomic(a.out, write_events_binary(stream));
  out << "events=" << stream.size() << " duration_us=" << stream.duration() << "\n";
  return kOk;
}

// ----------------------------------------------------------- validate

struct ValidateArgs {
  std::string in;
  std::string geometry;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  std::optional<Geometry> g;
  if (!a.geometry.empty()) g = require_geometry("--geometry", a.geometry);
  const auto stream = load_stream(a.in, g);
  const auto r = validate_stream(stream);
  out << "total=" << r.total << " valid=" << r.valid() << " out_of_bounds=" << r.out_of_bounds
      << " non_monotonic=" << r.non_monotonic << " bad_polarity=" << r.bad_polarity << "\n";
  return kOk;
}

// ------------------------------------------------------------- encode

struct EncodeArgs {
  std::string in;
  std::string view = "chsr";
  std::uint32_t t_bins = 224;
  std::uint32_t h_bins = 0;
  std::uint32_t w_bins = 0;
  std::string normalize = "none";
  std::string out;
  std::string pgm_dir;
  std::string geometry;
  std::string dtype = "f64";
  unsigned threads = 1;
};

int cmd_encode(const EncodeArgs& a, std::ostream& out) {
  if (a.t_bins == 0) throw UsageError("--t-bins must be >= 1");
  if (a.threads == 0) throw UsageError("--threads must be >= 1");
  const auto mode = parse_normalize(a.normalize);
  if (!mode) throw UsageError("--normalize must be one of none, per_channel_max, log1p");
  std::optional<ViewKind> view;
  if (a.view != "chsr") {
    view = parse_view(a.view);
    if (!view) throw UsageError("--view must be one of chsr, hw, tw, th");
  }
  if (a.dtype != "f64" && a.dtype != "f32") throw UsageError("--dtype must be f64 or f32");
  std::optional<Geometry> g;
  if (!a.geometry.empty()) g = require_geometry("--geometry", a.geometry);

  EncodeConfig cfg;
  cfg.t_bins = a.t_bins;
  if (a.h_bins > 0) cfg.h_bins = a.h_bins;
  if (a.w_bins > 0) cfg.w_bins = a.w_bins;
  cfg.normalize = *mode;
  cfg.threads = a.threads;

  const auto stream = load_stream(a.in, g);
  Tensor3 tensor;
  std::uint64_t dropped = 0;
  if (view) {
    auto v = encode_view(stream, *view, cfg);
    tensor = std::move(v.data);
    dropped = v.dropped;
  } else {
    auto c = encode_chsr(stream, cfg);
    tensor = std::move(c.data);
    dropped = c.dropped;
  }

  const DType dtype = a.dtype == "f32" ? DType::F32 : DType::F64;
  write_file_atomic(a.out, write_tensor(tensor_file(tensor, dtype)));
  if (!a.pgm_dir.empty()) {
    fs::create_directories(a.pgm_dir);
    for (std::size_t c = 0; c < tensor.channels(); ++c) {
      const auto name = a.view + "_c" + std::to_string(c) + ".pgm";
      write_file_atomic(fs::path(a.pgm_dir) / name, export_channel_image(tensor, c));
    }
  }
  out << "dims=" << dims_string(tensor) << " dropped=" << dropped << "\n";
  return kOk;
}

// ----------------------------------------------------------- spectrum

struct SpectrumArgs {
  std::string in;
  double bin_dt = 0.01;
  std::string out_csv;
  std::string geometry;
};

int cmd_spectrum(const SpectrumArgs& a, std::ostream& out) {
  if (!(a.bin_dt > 0) || !std::isfinite(a.bin_dt)) throw UsageError("--bin-dt must be > 0");
  std::optional<Geometry> g;
  if (!a.geometry.empty()) g = require_geometry("--geometry", a.geometry);

  const auto stream = load_stream(a.in, g);
  const auto series = event_rate_series(stream, a.bin_dt);
  const auto spectrum = rate_spectrum(series);
  const auto peak = dominant_frequency(series);

  if (!a.out_csv.empty()) {
    std::string base = a.out_csv;
    if (base.size() > 4 && base.ends_with(".csv")) base.resize(base.size() - 4);
    std::string rate = "t_s,count\n";
    for (std::size_t i = 0; i < series.values.size(); ++i) {
      rate += shortest(static_cast<double>(i) * series.bin_dt) + "," + shortest(series.values[i]) + "\n";
    }
    std::string spec = "freq_hz,magnitude\n";
    for (std::size_t k = 0; k < spectrum.magnitudes.size(); ++k) {
      spec += shortest(static_cast<double>(k) * spectrum.df) + "," + shortest(spectrum.magnitudes[k]) + "\n";
    }
    write_file_atomic(base + "_rate.csv", rate);
    write_file_atomic(base + "_spectrum.csv", spec);
  }

  if (peak) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", peak->f_peak);
    out << "dominant_hz=" << buf << "\n";
  } else {
    out << "dominant_hz=none\n";
  }
  return kOk;
}

// ----------------------------------------------------------- gsg-demo

struct GsgArgs {
  std::string in;
  std::string params;
  bool identity_init = false;
  std::string out;
  bool check_grads = false;
  std::uint64_t seed = 7;
};

// Channels [0, min(C, 2)), rows and columns sampled down to at most 6.
FeatureTensorD gradient_crop(const FeatureTensorD& x) {
  const std::size_t C = std::min<std::size_t>(x.channels(), 2);
  const std::size_t T = std::min<std::size_t>(x.rows(), 6);
  const std::size_t H = std::min<std::size_t>(x.cols(), 6);
  FeatureTensorD crop(C, T, H);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h) crop.at(c, t, h) = x.at(c, t * x.rows() / T, h * x.cols() / H);
    }
  }
  return crop;
}

FeatureTensorD random_like(std::size_t C, std::size_t T, std::size_t H, std::uint64_t seed) {
  detail::Rng rng(seed);
  FeatureTensorD u(C, T, H);
  for (auto& v : u.values()) v = 2.0 * rng.uniform() - 1.0;
  return u;
}

int cmd_gsg_demo(const GsgArgs& a, std::ostream& out) {
  if (a.params.empty() == !a.identity_init) throw UsageError("exactly one of --params or --identity-init is required");

  const auto file = read_tensor(read_file(a.in));
  const Tensor3 input = to_tensor3(file);
  const auto x = feature_from(input);
  const GsgParams params = a.identity_init ? GsgParams::identity(x.channels(), x.rows(), x.cols())
                                           : params_from_archive(read_archive(read_file(a.params)));

  if (file.dtype() == DType::F32) {
    const auto y = gsg_forward(feature_cast<float>(x), params);
    const auto vals = y.values();
    write_file_atomic(a.out, write_tensor(TensorFile::from_f32(file.dims, {vals.begin(), vals.end()})));
  } else {
    const auto y = gsg_forward(x, params);
    write_file_atomic(a.out, write_tensor(tensor_file(to_tensor3(y))));
  }
  out << "forward dims=" << dims_string(input) << "\n";

  if (a.check_grads) {
    const auto crop = gradient_crop(x);
    const auto p = GsgParams::random(crop.channels(), crop.rows(), crop.cols(), a.seed);
    const auto upstream = random_like(crop.channels(), crop.rows(), crop.cols(), a.seed + 1);
    const auto report = check_spectral_gradient(crop, p, upstream);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max_rel_err=%.3e components=%zu", report.max_relative_error, report.components);
    out << buf << "\n";
    if (!(report.max_relative_error < 1e-4)) return kData;
  }
  return kOk;
}

// -------------------------------------------------------------- bench

struct BenchArgs {
  std::string in;
  std::uint64_t synthetic = 0;
  int repeat = 5;
  std::string out_json;
  unsigned threads = 1;
  std::uint32_t t_bins = 224;
  std::uint64_t seed = 1;
  std::string geometry;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  if (a.repeat < 1) throw UsageError("--repeat must be >= 1");
  if (a.threads == 0) throw UsageError("--threads must be >= 1");
  if (a.in.empty() == (a.synthetic == 0)) throw UsageError("exactly one of --in or --synthetic N is required");
  std::optional<Geometry> g;
  if (!a.geometry.empty()) g = require_geometry("--geometry", a.geometry);

  const EventStream stream = a.in.empty()
                                 ? generate_uniform_stream(a.synthetic, g.value_or(Geometry{346, 260}), 10'000'000, a.seed)
                                 : load_stream(a.in, g);
  EncodeConfig cfg;
  cfg.t_bins = a.t_bins;
  cfg.threads = a.threads;

  std::vector<double> samples_ms;
  for (int i = 0; i < a.repeat; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const auto encoded = encode_chsr(stream, cfg);
    const auto stop = std::chrono::steady_clock::now();
    samples_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  double mean = 0.0;
  for (double s : samples_ms) mean += s;
  mean /= static_cast<double>(samples_ms.size());
  auto sorted = samples_ms;
  std::sort(sorted.begin(), sorted.end());
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size())));
  const double p95 = sorted[std::max<std::size_t>(rank, 1) - 1];

  nlohmann::json report;
  report["events"] = stream.size();
  report["repeats"] = a.repeat;
  report["threads"] = a.threads;
  report["encode_chsr_mean_ms"] = mean;
  report["encode_chsr_p95_ms"] = p95;
  report["events_per_sec"] = mean > 0 ? static_cast<double>(stream.size()) / (mean / 1000.0) : 0.0;
  report["samples_ms"] = samples_ms;
  const std::string text = report.dump(2) + "\n";
  if (!a.out_json.empty()) write_file_atomic(a.out_json, text);
  out << text;
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event-stream encoding, spectrum analysis and spectral gating tools", "holoev"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic periodic event stream (HEVS)");
  gen_cmd->add_option("--f0", gen.f0, "Oscillation frequency in Hz")->capture_default_str();
  gen_cmd->add_option("--duration", gen.duration, "Duration in seconds")->capture_default_str();
  gen_cmd->add_option("--rate-base", gen.rate_base, "Event rate at the trough (events/s)")->capture_default_str();
  gen_cmd->add_option("--rate-peak", gen.rate_peak, "Event rate at the crest (events/s)")->capture_default_str();
  gen_cmd->add_option("--geometry", gen.geometry, "Sensor size WxH")->capture_default_str();
  gen_cmd->add_option("--amplitude", gen.amplitude, "Horizontal motion amplitude in pixels")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output .hevs path")->required();

  ValidateArgs val;
  auto* val_cmd = app.add_subcommand("validate", "Count defects in an event file");
  val_cmd->add_option("--in", val.in, "Input .hevs or .csv")->required()->check(CLI::ExistingFile);
  val_cmd->add_option("--geometry", val.geometry, "Sensor size WxH for CSV input without a geometry line");

  EncodeArgs enc;
  auto* enc_cmd = app.add_subcommand("encode", "Encode events into a CHSR tensor or a projection view");
  enc_cmd->add_option("--in", enc.in, "Input .hevs or .csv")->required()->check(CLI::ExistingFile);
  enc_cmd->add_option("--view", enc.view, "chsr | hw | tw | th")->capture_default_str();
  enc_cmd->add_option("--t-bins", enc.t_bins, "Temporal bins")->capture_default_str();
  enc_cmd->add_option("--h-bins", enc.h_bins, "Height bins (default: sensor height)");
  enc_cmd->add_option("--w-bins", enc.w_bins, "Width bins (default: sensor width)");
  enc_cmd->add_option("--normalize", enc.normalize, "none | per_channel_max | log1p")->capture_default_str();
  enc_cmd->add_option("--out", enc.out, "Output HTEN path")->required();
  enc_cmd->add_option("--pgm-dir", enc.pgm_dir, "Also dump one PGM per channel here");
  enc_cmd->add_option("--geometry", enc.geometry, "Sensor size WxH for CSV input without a geometry line");
  enc_cmd->add_option("--dtype", enc.dtype, "f64 | f32")->capture_default_str();
  enc_cmd->add_option("--threads", enc.threads, "Accumulation workers")->capture_default_str();

  SpectrumArgs spec;
  auto* spec_cmd = app.add_subcommand("spectrum", "Event-rate series and its dominant frequency");
  spec_cmd->add_option("--in", spec.in, "Input .hevs or .csv")->required()->check(CLI::ExistingFile);
  spec_cmd->add_option("--bin-dt", spec.bin_dt, "Rate bin width in seconds")->capture_default_str();
  spec_cmd->add_option("--out-csv", spec.out_csv, "Writes <base>_rate.csv and <base>_spectrum.csv");
  spec_cmd->add_option("--geometry", spec.geometry, "Sensor size WxH for CSV input without a geometry line");

  GsgArgs gsg;
  auto* gsg_cmd = app.add_subcommand("gsg-demo", "Run the spectral gating block on a 3-D tensor");
  gsg_cmd->add_option("--in", gsg.in, "Input HTEN tensor (C x T x H)")->required()->check(CLI::ExistingFile);
  auto* params_opt = gsg_cmd->add_option("--params", gsg.params, "HARC parameter archive")->check(CLI::ExistingFile);
  gsg_cmd->add_flag("--identity-init", gsg.identity_init, "Use identity parameters with an open gate")
      ->excludes(params_opt);
  gsg_cmd->add_option("--out", gsg.out, "Output HTEN path")->required();
  gsg_cmd->add_flag("--check-grads", gsg.check_grads, "Verify dL/dW against central differences");
  gsg_cmd->add_option("--seed", gsg.seed, "Seed for the gradient-check parameters")->capture_default_str();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time encode_chsr");
  auto* bench_in = bench_cmd->add_option("--in", bench.in, "Input .hevs or .csv")->check(CLI::ExistingFile);
  bench_cmd->add_option("--synthetic", bench.synthetic, "Generate N uniform random events")->excludes(bench_in);
  bench_cmd->add_option("--repeat", bench.repeat, "Timed repetitions")->capture_default_str();
  bench_cmd->add_option("--out-json", bench.out_json, "Write the JSON report here");
  bench_cmd->add_option("--threads", bench.threads, "Accumulation workers")->capture_default_str();
  bench_cmd->add_option("--t-bins", bench.t_bins, "Temporal bins")->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Seed for --synthetic")->capture_default_str();
  bench_cmd->add_option("--geometry", bench.geometry, "Sensor size WxH");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*val_cmd) return cmd_validate(val, out);
    if (*enc_cmd) return cmd_encode(enc, out);
    if (*spec_cmd) return cmd_spectrum(spec, out);
    if (*gsg_cmd) return cmd_gsg_demo(gsg, out);
    if (*bench_cmd) return cmd_bench(bench, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace holoev::cli
