#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rawscore/error.hpp"

namespace rawscore {

struct Dims {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t depth = 1;

  std::size_t count() const { return width * height * depth; }
  std::size_t plane() const { return width * height; }
  bool is_2d() const { return depth == 1; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z = 0) const {
    return (z * height + y) * width + x;
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

// Physical sampling in micrometres.
struct VoxelSize {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  double volume() const { return x * y * z; }
  friend bool operator==(const VoxelSize&, const VoxelSize&) = default;
};

// Dense scalar field over a Dims lattice, x fastest.
template <typename T>
class Grid {
 public:
  Grid() = default;
  explicit Grid(Dims dims, T fill = T{}) : dims_(dims), values_(dims.count(), fill) {}
  Grid(Dims dims, std::vector<T> values) : dims_(dims), values_(std::move(values)) {
    require(values_.size() == dims_.count(), ErrorCode::kDimMismatch,
            "grid data length does not match dims");
  }

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return values_.size(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& at(std::size_t x, std::size_t y, std::size_t z = 0) { return values_[dims_.index(x, y, z)]; }
  const T& at(std::size_t x, std::size_t y, std::size_t z = 0) const {
    return values_[dims_.index(x, y, z)];
  }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  Dims dims_;
  std::vector<T> values_;
};

using RealImage = Grid<double>;
using LabelMap = Grid<std::uint32_t>;
using Mask = Grid<std::uint8_t>;

// Unsigned integer pixel payload (8 or 16 bit) with physical metadata.
// Samples are always held as uint16_t; the bit depth bounds their range.
class ImageStack {
 public:
  ImageStack() = default;
  ImageStack(Dims dims, int bit_depth, std::vector<std::uint16_t> data,
             VoxelSize voxel_size = {});

  static ImageStack filled(Dims dims, int bit_depth, std::uint16_t value,
                           VoxelSize voxel_size = {});

  const Dims& dims() const { return dims_; }
  int bit_depth() const { return bit_depth_; }
  const VoxelSize& voxel_size() const { return voxel_size_; }
  std::uint32_t max_value() const { return (1u << bit_depth_) - 1u; }
  std::size_t size() const { return data_.size(); }
  std::size_t byte_size() const { return data_.size() * (bit_depth_ == 16 ? 2 : 1); }

  std::uint16_t operator[](std::size_t i) const { return data_[i]; }
  std::uint16_t at(std::size_t x, std::size_t y, std::size_t z = 0) const {
    return data_[dims_.index(x, y, z)];
  }
  std::span<const std::uint16_t> data() const { return data_; }

  // Single z-slice as a 2D stack.
  ImageStack slice(std::size_t z) const;

  friend bool operator==(const ImageStack&, const ImageStack&) = default;

 private:
  Dims dims_;
  int bit_depth_ = 16;
  VoxelSize voxel_size_;
  std::vector<std::uint16_t> data_;
};

RealImage to_real(const ImageStack& stack);

// Stacks equally sized 2D images along z.
ImageStack stack_slices(std::span<const ImageStack> slices);

}  // namespace rawscore
