#pragma once

// HTEN single-tensor files and HARC named-tensor archives. All integers and
// scalars are little-endian; there is no padding beyond the fixed headers.
//
//   HTEN: "HTEN" u8 version=1, u8 dtype, u8 ndim, u8 reserved,
//         ndim x u64 dims, row-major payload
//   HARC: "HARC" u8 version=1, u16 count,
//         count x { u16 name_len, name bytes, HTEN blob }

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "holoev/tensor.hpp"

namespace holoev {

struct GsgParams;

enum class DType : std::uint8_t { F32 = 1, F64 = 2, U32 = 3 };

std::size_t dtype_size(DType dtype) noexcept;

struct TensorFile {
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint32_t>> values;

  DType dtype() const noexcept { return static_cast<DType>(values.index() + 1); }
  std::size_t element_count() const noexcept;
  /// Values widened to double regardless of the stored dtype.
  std::vector<double> as_f64() const;

  static TensorFile from_f64(std::vector<std::uint64_t> dims, std::vector<double> values);
  static TensorFile from_f32(std::vector<std::uint64_t> dims, std::vector<float> values);

  friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

using TensorArchive = std::vector<std::pair<std::string, TensorFile>>;

std::vector<std::byte> write_tensor(const TensorFile& tensor);
TensorFile read_tensor(std::span<const std::byte> bytes);

std::vector<std::byte> write_archive(const TensorArchive& archive);
TensorArchive read_archive(std::span<const std::byte> bytes);

/// Looks up a section by name; throws ShapeMismatch when absent.
const TensorFile& archive_entry(const TensorArchive& archive, const std::string& name);

TensorFile tensor_file(const Tensor3& t, DType dtype = DType::F64);
/// Accepts any 3-D tensor file.
Tensor3 to_tensor3(const TensorFile& file);

TensorArchive params_to_archive(const GsgParams& params);
GsgParams params_from_archive(const TensorArchive& archive);

std::vector<std::byte> read_file(const std::filesystem::path& path);
/// Writes via a sibling temporary and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace holoev
