#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace holoev {

/// Dense row-major channels x rows x cols array of doubles.
struct Tensor3 {
  std::array<std::size_t, 3> dims{0, 0, 0};
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t rows, std::size_t cols)
      : dims{channels, rows, cols}, data(channels * rows * cols, 0.0) {}

  std::size_t channels() const noexcept { return dims[0]; }
  std::size_t rows() const noexcept { return dims[1]; }
  std::size_t cols() const noexcept { return dims[2]; }
  std::size_t plane_size() const noexcept { return dims[1] * dims[2]; }

  double& at(std::size_t c, std::size_t r, std::size_t k) { return data[(c * dims[1] + r) * dims[2] + k]; }
  double at(std::size_t c, std::size_t r, std::size_t k) const { return data[(c * dims[1] + r) * dims[2] + k]; }

  std::span<double> channel(std::size_t c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const double> channel(std::size_t c) const { return {data.data() + c * plane_size(), plane_size()}; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

}  // namespace holoev
