#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include <unistd.h>

#include "holoev/error.hpp"
#include "holoev/gsg.hpp"
#include "holoev/io_formats.hpp"
#include "oracles.hpp"

using namespace holoev;
namespace fs = std::filesystem;

namespace {

Error error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected holoev::Error");
  return Error(ErrorKind::Io, "");
}

std::uint64_t read_u64(std::span<const std::byte> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[at + static_cast<std::size_t>(i)]);
  return v;
}

TensorFile random_tensor(DType dtype, std::vector<std::uint64_t> dims, std::uint64_t seed) {
  detail::Rng rng(seed);
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  TensorFile t;
  t.dims = std::move(dims);
  switch (dtype) {
    case DType::F32: {
      std::vector<float> v(n);
      for (auto& x : v) x = static_cast<float>(rng.uniform() * 200.0 - 100.0);
      t.values = std::move(v);
      break;
    }
    case DType::F64: {
      std::vector<double> v(n);
      for (auto& x : v) x = (rng.uniform() - 0.5) * 1e6;
      t.values = std::move(v);
      break;
    }
    case DType::U32: {
      std::vector<std::uint32_t> v(n);
      for (auto& x : v) x = static_cast<std::uint32_t>(rng.below(std::uint64_t{1} << 32));
      t.values = std::move(v);
      break;
    }
  }
  return t;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("holoev_io_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("io_formats") {
  TEST_CASE("tensor: header layout") {
    const auto bytes = write_tensor(TensorFile::from_f32({2, 3}, {1, 2, 3, 4, 5, 6}));
    REQUIRE(bytes.size() == 8 + 2 * 8 + 6 * 4);
    CHECK(std::memcmp(bytes.data(), "HTEN", 4) == 0);
    CHECK(bytes[4] == std::byte{1});
    CHECK(bytes[5] == std::byte{1});
    CHECK(bytes[6] == std::byte{2});
    CHECK(bytes[7] == std::byte{0});
    CHECK(read_u64(bytes, 8) == 2);
    CHECK(read_u64(bytes, 16) == 3);
    float first;
    std::memcpy(&first, bytes.data() + 24, 4);
    CHECK(first == 1.0f);
  }

  TEST_CASE("tensor: 3x224x260 f32 round trip is bit-exact") {
    const auto t = random_tensor(DType::F32, {3, 224, 260}, 1);
    const auto bytes = write_tensor(t);
    const auto back = read_tensor(bytes);
    CHECK(back == t);
    CHECK(back.dtype() == DType::F32);
    CHECK(write_tensor(back) == bytes);
  }

  TEST_CASE("tensor: every dtype, dims containing ones") {
    for (DType d : {DType::F32, DType::F64, DType::U32}) {
      for (const auto& dims : std::vector<std::vector<std::uint64_t>>{{1}, {1, 1, 1}, {4, 1, 3}, {1, 7}, {2, 2, 2, 2, 2, 2, 2, 2}}) {
        const auto t = random_tensor(d, dims, dims.size());
        const auto bytes = write_tensor(t);
        CHECK(bytes.size() == 8 + 8 * dims.size() + t.element_count() * dtype_size(d));
        CHECK(read_tensor(bytes) == t);
      }
    }
  }

  TEST_CASE("tensor: special float values survive") {
    const std::vector<double> v = {0.0, -0.0, std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::max()};
    const auto back = read_tensor(write_tensor(TensorFile::from_f64({5}, v)));
    const auto& got = std::get<std::vector<double>>(back.values);
    CHECK(std::memcmp(got.data(), v.data(), v.size() * sizeof(double)) == 0);
  }

  TEST_CASE("tensor: rank limits") {
    TensorFile zero_dim;
    zero_dim.values = std::vector<double>{1.0};
    CHECK(error_of([&] { write_tensor(zero_dim); }).kind() == ErrorKind::ShapeMismatch);

    auto bytes = write_tensor(TensorFile::from_f64({1}, {2.0}));
    bytes[6] = std::byte{0};
    CHECK(error_of([&] { read_tensor(bytes); }).kind() == ErrorKind::ShapeMismatch);

    TensorFile nine;
    nine.dims.assign(9, 1);
    nine.values = std::vector<double>{1.0};
    CHECK(error_of([&] { write_tensor(nine); }).kind() == ErrorKind::ShapeMismatch);
  }

  TEST_CASE("tensor: truncated payload names the byte counts") {
    auto bytes = write_tensor(TensorFile::from_f64({2, 3}, {1, 2, 3, 4, 5, 6}));
    bytes.resize(bytes.size() - 5);
    const auto e = error_of([&] { read_tensor(bytes); });
    CHECK(e.kind() == ErrorKind::LengthMismatch);
    CHECK(std::string(e.what()).find("48") != std::string::npos);
    CHECK(std::string(e.what()).find("43") != std::string::npos);

    bytes = write_tensor(TensorFile::from_f64({2, 3}, {1, 2, 3, 4, 5, 6}));
    bytes.push_back(std::byte{0});
    CHECK(error_of([&] { read_tensor(bytes); }).kind() == ErrorKind::LengthMismatch);
    CHECK(error_of([&] { read_tensor(std::span(bytes).first(12)); }).kind() == ErrorKind::LengthMismatch);
  }

  TEST_CASE("tensor: magic, version, dtype, shape/payload mismatch") {
    const auto good = write_tensor(TensorFile::from_f64({2}, {1, 2}));
    auto bad = good;
    bad[1] = std::byte{'X'};
    CHECK(error_of([&] { read_tensor(bad); }).kind() == ErrorKind::BadMagic);
    bad = good;
    bad[4] = std::byte{9};
    CHECK(error_of([&] { read_tensor(bad); }).kind() == ErrorKind::VersionUnsupported);
    for (std::uint8_t code : {0, 4, 255}) {
      bad = good;
      bad[5] = std::byte{code};
      CHECK(error_of([&] { read_tensor(bad); }).kind() == ErrorKind::DtypeUnknown);
    }
    TensorFile lying;
    lying.dims = {3};
    lying.values = std::vector<double>{1, 2};
    CHECK(error_of([&] { write_tensor(lying); }).kind() == ErrorKind::LengthMismatch);
  }

  TEST_CASE("tensor: Tensor3 conversion") {
    Tensor3 t(2, 3, 4);
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = 0.5 * static_cast<double>(i);
    CHECK(to_tensor3(read_tensor(write_tensor(tensor_file(t)))) == t);
    CHECK(to_tensor3(read_tensor(write_tensor(tensor_file(t, DType::F32)))) == t);
    CHECK(error_of([] { to_tensor3(TensorFile::from_f64({4}, {1, 2, 3, 4})); }).kind() == ErrorKind::ShapeMismatch);
  }

  TEST_CASE("archive: seven parameter sections round trip") {
    const auto p = GsgParams::random(3, 5, 7, 11);
    const auto archive = params_to_archive(p);
    REQUIRE(archive.size() == 7);
    const std::vector<std::string> names = {"dw_kernel", "spectral_weight_re", "spectral_weight_im", "ln_gamma",
                                            "ln_beta",   "gate_weight",        "gate_bias"};
    for (std::size_t i = 0; i < names.size(); ++i) CHECK(archive[i].first == names[i]);
    CHECK(archive_entry(archive, "dw_kernel").dims == std::vector<std::uint64_t>{3, 3, 3});
    CHECK(archive_entry(archive, "spectral_weight_im").dims == std::vector<std::uint64_t>{3, 5, 4});
    CHECK(archive_entry(archive, "gate_weight").dims == std::vector<std::uint64_t>{3, 3});

    const auto bytes = write_archive(archive);
    const auto back = read_archive(bytes);
    CHECK(back == archive);
    CHECK(write_archive(back) == bytes);

    const auto q = params_from_archive(back);
    CHECK(q.dw_kernel == p.dw_kernel);
    CHECK(q.spectral_weight == p.spectral_weight);
    CHECK(q.ln_gamma == p.ln_gamma);
    CHECK(q.ln_beta == p.ln_beta);
    CHECK(q.gate_weight == p.gate_weight);
    CHECK(q.gate_bias == p.gate_bias);
    CHECK(q.channels == 3);
    CHECK(q.rows == 5);
    CHECK(q.cols_half == 4);
  }

  TEST_CASE("archive: duplicates, missing sections, empty archive") {
    TensorArchive dup = {{"a", TensorFile::from_f64({1}, {1})}, {"a", TensorFile::from_f64({1}, {2})}};
    CHECK(error_of([&] { write_archive(dup); }).kind() == ErrorKind::DuplicateName);

    // Forge a duplicate on disk by renaming the second entry's name bytes.
    auto bytes = write_archive({{"a", TensorFile::from_f64({1}, {1})}, {"b", TensorFile::from_f64({1}, {2})}});
    const std::size_t second_name = 4 + 1 + 2 + 2 + 1 + (8 + 8 + 8) + 2;
    REQUIRE(bytes[second_name] == std::byte{'b'});
    bytes[second_name] = std::byte{'a'};
    CHECK(error_of([&] { read_archive(bytes); }).kind() == ErrorKind::DuplicateName);

    const auto empty = write_archive({});
    CHECK(empty.size() == 7);
    CHECK(read_archive(empty).empty());

    auto archive = params_to_archive(GsgParams::identity(2, 3, 4));
    archive.erase(archive.begin() + 3);
    CHECK(error_of([&] { params_from_archive(archive); }).kind() == ErrorKind::ShapeMismatch);

    archive = params_to_archive(GsgParams::identity(2, 3, 4));
    archive[6].second = TensorFile::from_f64({3}, {0, 0, 0});
    CHECK(error_of([&] { params_from_archive(archive); }).kind() == ErrorKind::ShapeMismatch);
  }

  TEST_CASE("archive: corrupt framing") {
    const auto good = write_archive({{"x", TensorFile::from_f32({2}, {1, 2})}});
    auto bad = good;
    bad[0] = std::byte{'Z'};
    CHECK(error_of([&] { read_archive(bad); }).kind() == ErrorKind::BadMagic);
    CHECK(error_of([&] { read_archive(std::span(good).first(good.size() - 1)); }).kind() == ErrorKind::LengthMismatch);
    bad = good;
    bad.push_back(std::byte{1});
    CHECK(error_of([&] { read_archive(bad); }).kind() == ErrorKind::LengthMismatch);
    bad = good;
    bad[5] = std::byte{2};  // count says two entries, only one present
    CHECK(error_of([&] { read_archive(bad); }).kind() == ErrorKind::LengthMismatch);
  }

  TEST_CASE("property: random fixtures round trip byte-exactly") {
    detail::Rng rng(99);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto dtype = static_cast<DType>(1 + rng.below(3));
      std::vector<std::uint64_t> dims(1 + rng.below(4));
      for (auto& d : dims) d = 1 + rng.below(9);
      const auto t = random_tensor(dtype, dims, seed);
      const auto bytes = write_tensor(t);
      CHECK(read_tensor(bytes) == t);
      CHECK(write_tensor(read_tensor(bytes)) == bytes);

      TensorArchive a;
      for (std::uint64_t k = 0; k <= rng.below(4); ++k) a.emplace_back("t" + std::to_string(k), random_tensor(dtype, dims, seed * 10 + k));
      const auto ab = write_archive(a);
      CHECK(read_archive(ab) == a);
      CHECK(write_archive(read_archive(ab)) == ab);
    }
  }

  TEST_CASE("files: atomic write leaves no temporary and replaces content") {
    TempDir dir;
    const auto target = dir.path / "t.hten";
    const auto first = write_tensor(TensorFile::from_f64({1}, {1.0}));
    const auto second = write_tensor(TensorFile::from_f64({2}, {1.0, 2.0}));
    write_file_atomic(target, first);
    write_file_atomic(target, second);
    CHECK(read_file(target) == second);
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++entries;
    CHECK(entries == 1);

    CHECK(error_of([&] { read_file(dir.path / "missing"); }).kind() == ErrorKind::Io);
    CHECK(error_of([&] { write_file_atomic(dir.path / "no" / "such" / "dir", first); }).kind() == ErrorKind::Io);
  }
}
