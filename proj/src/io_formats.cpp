#include "holoev/io_formats.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <system_error>

#include <unistd.h>

#include "byte_io.hpp"
#include "holoev/error.hpp"
#include "holoev/gsg.hpp"

namespace holoev {

namespace {

constexpr std::string_view kTensorMagic = "HTEN";
constexpr std::string_view kArchiveMagic = "HARC";
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kMaxDims = 8;

std::size_t checked_count(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > (~std::uint64_t{0}) / d) throw Error(ErrorKind::LengthMismatch, "dims overflow");
    n *= d;
  }
  return static_cast<std::size_t>(n);
}

void check_rank(std::size_t ndim) {
  if (ndim == 0) throw Error(ErrorKind::ShapeMismatch, "tensors must have ndim >= 1");
  if (ndim > kMaxDims) throw Error(ErrorKind::ShapeMismatch, "tensors must have ndim <= 8");
}

void write_tensor_to(detail::ByteWriter& w, const TensorFile& t) {
  check_rank(t.dims.size());
  if (checked_count(t.dims) != t.element_count()) {
    throw Error(ErrorKind::LengthMismatch, "dims describe " + std::to_string(checked_count(t.dims)) +
                                               " elements, tensor holds " + std::to_string(t.element_count()));
  }
  w.bytes(kTensorMagic);
  w.le<std::uint8_t>(kVersion);
  w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dtype()));
  w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
  w.le<std::uint8_t>(0);
  for (auto d : t.dims) w.le<std::uint64_t>(d);
  std::visit(
      [&w](const auto& vals) {
        using V = typename std::decay_t<decltype(vals)>::value_type;
        for (V v : vals) {
          if constexpr (std::is_same_v<V, float>) {
            w.f32(v);
          } else if constexpr (std::is_same_v<V, double>) {
            w.f64(v);
          } else {
            w.le<std::uint32_t>(v);
          }
        }
      },
      t.values);
}

TensorFile read_tensor_from(detail::ByteReader& r) {
  const std::size_t start = r.offset();
  if (!r.match(kTensorMagic)) throw Error(ErrorKind::BadMagic, "expected 'HTEN' at offset " + std::to_string(start));
  if (!r.has(8)) throw Error(ErrorKind::LengthMismatch, "tensor header truncated");
  r.take(4);
  const auto version = r.le<std::uint8_t>();
  if (version != kVersion) throw Error(ErrorKind::VersionUnsupported, "HTEN version " + std::to_string(version));
  const auto dtype_code = r.le<std::uint8_t>();
  const auto ndim = r.le<std::uint8_t>();
  r.le<std::uint8_t>();
  if (dtype_code < 1 || dtype_code > 3) throw Error(ErrorKind::DtypeUnknown, "dtype code " + std::to_string(dtype_code));
  check_rank(ndim);
  if (!r.has(8 * std::size_t{ndim})) {
    throw Error(ErrorKind::LengthMismatch, "dims need " + std::to_string(8 * ndim) + " bytes, have " +
                                               std::to_string(r.remaining()));
  }
  TensorFile t;
  t.dims.resize(ndim);
  for (auto& d : t.dims) d = r.le<std::uint64_t>();

  const auto dtype = static_cast<DType>(dtype_code);
  const std::size_t count = checked_count(t.dims);
  const std::size_t esize = dtype_size(dtype);
  if (count > r.remaining() / esize) {
    throw Error(ErrorKind::LengthMismatch, "payload needs " + std::to_string(count * esize) + " bytes (" +
                                               std::to_string(count) + " x " + std::to_string(esize) + "), have " +
                                               std::to_string(r.remaining()));
  }
  switch (dtype) {
    case DType::F32: {
      std::vector<float> v(count);
      for (auto& x : v) x = r.f32();
      t.values = std::move(v);
      break;
    }
    case DType::F64: {
      std::vector<double> v(count);
      for (auto& x : v) x = r.f64();
      t.values = std::move(v);
      break;
    }
    case DType::U32: {
      std::vector<std::uint32_t> v(count);
      for (auto& x : v) x = r.le<std::uint32_t>();
      t.values = std::move(v);
      break;
    }
  }
  return t;
}

std::vector<std::uint64_t> as_dims(std::initializer_list<std::size_t> d) { return {d.begin(), d.end()}; }

}  // namespace

std::size_t dtype_size(DType dtype) noexcept {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U32: return 4;
  }
  return 0;
}

std::size_t TensorFile::element_count() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, values);
}

std::vector<double> TensorFile::as_f64() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, values);
}

TensorFile TensorFile::from_f64(std::vector<std::uint64_t> dims, std::vector<double> values) {
  return TensorFile{std::move(dims), std::move(values)};
}

TensorFile TensorFile::from_f32(std::vector<std::uint64_t> dims, std::vector<float> values) {
  return TensorFile{std::move(dims), std::move(values)};
}

std::vector<std::byte> write_tensor(const TensorFile& tensor) {
  detail::ByteWriter w;
  w.reserve(8 + 8 * tensor.dims.size() + tensor.element_count() * dtype_size(tensor.dtype()));
  write_tensor_to(w, tensor);
  return w.take();
}

TensorFile read_tensor(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  auto t = read_tensor_from(r);
  if (r.remaining() != 0) {
    throw Error(ErrorKind::LengthMismatch, "expected " + std::to_string(r.offset()) + " bytes, file has " +
                                               std::to_string(bytes.size()));
  }
  return t;
}

std::vector<std::byte> write_archive(const TensorArchive& archive) {
  if (archive.size() > 0xFFFF) throw Error(ErrorKind::LengthMismatch, "archive holds more than 65535 entries");
  std::set<std::string> seen;
  detail::ByteWriter w;
  w.bytes(kArchiveMagic);
  w.le<std::uint8_t>(kVersion);
  w.le<std::uint16_t>(static_cast<std::uint16_t>(archive.size()));
  for (const auto& [name, tensor] : archive) {
    if (!seen.insert(name).second) throw Error(ErrorKind::DuplicateName, "section '" + name + "' repeated");
    if (name.size() > 0xFFFF) throw Error(ErrorKind::LengthMismatch, "section name too long");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    write_tensor_to(w, tensor);
  }
  return w.take();
}

TensorArchive read_archive(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  if (!r.match(kArchiveMagic)) throw Error(ErrorKind::BadMagic, "expected 'HARC'");
  if (!r.has(7)) throw Error(ErrorKind::LengthMismatch, "archive header truncated");
  r.take(4);
  const auto version = r.le<std::uint8_t>();
  if (version != kVersion) throw Error(ErrorKind::VersionUnsupported, "HARC version " + std::to_string(version));
  const auto count = r.le<std::uint16_t>();

  TensorArchive archive;
  std::set<std::string> seen;
  for (std::uint16_t i = 0; i < count; ++i) {
    if (!r.has(2)) throw Error(ErrorKind::LengthMismatch, "entry " + std::to_string(i) + " truncated");
    const auto len = r.le<std::uint16_t>();
    if (!r.has(len)) throw Error(ErrorKind::LengthMismatch, "entry name truncated");
    const auto raw = r.take(len);
    std::string name(reinterpret_cast<const char*>(raw.data()), raw.size());
    if (!seen.insert(name).second) throw Error(ErrorKind::DuplicateName, "section '" + name + "' repeated");
    archive.emplace_back(std::move(name), read_tensor_from(r));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(r.remaining()) + " trailing bytes after archive");
  }
  return archive;
}

const TensorFile& archive_entry(const TensorArchive& archive, const std::string& name) {
  for (const auto& [n, t] : archive) {
    if (n == name) return t;
  }
  throw Error(ErrorKind::ShapeMismatch, "archive has no section '" + name + "'");
}

TensorFile tensor_file(const Tensor3& t, DType dtype) {
  auto dims = as_dims({t.channels(), t.rows(), t.cols()});
  switch (dtype) {
    case DType::F64: return TensorFile::from_f64(std::move(dims), t.data);
    case DType::F32: return TensorFile::from_f32(std::move(dims), std::vector<float>(t.data.begin(), t.data.end()));
    case DType::U32: {
      std::vector<std::uint32_t> v(t.data.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint32_t>(t.data[i]);
      return TensorFile{std::move(dims), std::move(v)};
    }
  }
  throw Error(ErrorKind::DtypeUnknown, "unknown dtype");
}

Tensor3 to_tensor3(const TensorFile& file) {
  if (file.dims.size() != 3) {
    throw Error(ErrorKind::ShapeMismatch, "expected a 3-D tensor, got ndim " + std::to_string(file.dims.size()));
  }
  Tensor3 t(file.dims[0], file.dims[1], file.dims[2]);
  t.data = file.as_f64();
  return t;
}

TensorArchive params_to_archive(const GsgParams& p) {
  const std::size_t C = p.channels;
  std::vector<double> re(p.spectral_weight.size()), im(p.spectral_weight.size());
  for (std::size_t i = 0; i < re.size(); ++i) {
    re[i] = p.spectral_weight[i].real();
    im[i] = p.spectral_weight[i].imag();
  }
  TensorArchive a;
  a.emplace_back("dw_kernel", TensorFile::from_f64(as_dims({C, 3, 3}), p.dw_kernel));
  a.emplace_back("spectral_weight_re", TensorFile::from_f64(as_dims({C, p.rows, p.cols_half}), std::move(re)));
  a.emplace_back("spectral_weight_im", TensorFile::from_f64(as_dims({C, p.rows, p.cols_half}), std::move(im)));
  a.emplace_back("ln_gamma", TensorFile::from_f64(as_dims({C}), p.ln_gamma));
  a.emplace_back("ln_beta", TensorFile::from_f64(as_dims({C}), p.ln_beta));
  a.emplace_back("gate_weight", TensorFile::from_f64(as_dims({C, C}), p.gate_weight));
  a.emplace_back("gate_bias", TensorFile::from_f64(as_dims({C}), p.gate_bias));
  return a;
}

GsgParams params_from_archive(const TensorArchive& archive) {
  const auto& re = archive_entry(archive, "spectral_weight_re");
  const auto& im = archive_entry(archive, "spectral_weight_im");
  if (re.dims.size() != 3 || re.dims != im.dims) {
    throw Error(ErrorKind::ShapeMismatch, "spectral_weight_re/_im must share a 3-D shape");
  }
  GsgParams p;
  p.channels = re.dims[0];
  p.rows = re.dims[1];
  p.cols_half = re.dims[2];
  const auto wr = re.as_f64();
  const auto wi = im.as_f64();
  p.spectral_weight.resize(wr.size());
  for (std::size_t i = 0; i < wr.size(); ++i) p.spectral_weight[i] = {wr[i], wi[i]};

  const std::size_t C = p.channels;
  auto load = [&](const char* name, std::vector<std::uint64_t> dims) {
    const auto& t = archive_entry(archive, name);
    if (t.dims != dims) throw Error(ErrorKind::ShapeMismatch, std::string("section '") + name + "' has wrong shape");
    return t.as_f64();
  };
  p.dw_kernel = load("dw_kernel", as_dims({C, 3, 3}));
  p.ln_gamma = load("ln_gamma", as_dims({C}));
  p.ln_beta = load("ln_beta", as_dims({C}));
  p.gate_weight = load("gate_weight", as_dims({C, C}));
  p.gate_bias = load("gate_bias", as_dims({C}));
  return p;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorKind::Io, "write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::Io, "cannot rename onto " + path.string());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

}  // namespace holoev
