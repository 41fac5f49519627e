#include "rawscore/image.hpp"

#include <algorithm>
#include <string>

namespace rawscore {

ImageStack::ImageStack(Dims dims, int bit_depth, std::vector<std::uint16_t> data,
                       VoxelSize voxel_size)
    : dims_(dims), bit_depth_(bit_depth), voxel_size_(voxel_size), data_(std::move(data)) {
  require(bit_depth_ == 8 || bit_depth_ == 16, ErrorCode::kWrongBitDepth,
          "bit depth must be 8 or 16, got " + std::to_string(bit_depth_));
  require(dims_.width > 0 && dims_.height > 0 && dims_.depth > 0, ErrorCode::kInvalidSpec,
          "image dims must be positive");
  require(data_.size() == dims_.count(), ErrorCode::kDimMismatch,
          "sample count " + std::to_string(data_.size()) + " does not match dims");
  require(voxel_size_.x > 0 && voxel_size_.y > 0 && voxel_size_.z > 0, ErrorCode::kInvalidSpec,
          "voxel size components must be positive");
  if (bit_depth_ == 8) {
    const bool in_range =
        std::all_of(data_.begin(), data_.end(), [](std::uint16_t v) { return v < 256; });
    require(in_range, ErrorCode::kInvalidSpec, "8-bit stack holds a sample >= 256");
  }
}

ImageStack ImageStack::filled(Dims dims, int bit_depth, std::uint16_t value,
                              VoxelSize voxel_size) {
  return ImageStack(dims, bit_depth, std::vector<std::uint16_t>(dims.count(), value),
                    voxel_size);
}

ImageStack ImageStack::slice(std::size_t z) const {
  require(z < dims_.depth, ErrorCode::kDimMismatch, "slice index out of range");
  const Dims plane{dims_.width, dims_.height, 1};
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(z * plane.count());
  return ImageStack(plane, bit_depth_,
                    std::vector<std::uint16_t>(first, first + static_cast<std::ptrdiff_t>(
                                                              plane.count())),
                    voxel_size_);
}

RealImage to_real(const ImageStack& stack) {
  RealImage out(stack.dims());
  for (std::size_t i = 0; i < stack.size(); ++i) out[i] = stack[i];
  return out;
}

ImageStack stack_slices(std::span<const ImageStack> slices) {
  require(!slices.empty(), ErrorCode::kDimMismatch, "no slices to stack");
  const Dims plane = slices.front().dims();
  require(plane.depth == 1, ErrorCode::kDimMismatch, "stack_slices expects 2D slices");
  std::vector<std::uint16_t> data;
  data.reserve(plane.count() * slices.size());
  for (const auto& s : slices) {
    require(s.dims() == plane && s.bit_depth() == slices.front().bit_depth(),
            ErrorCode::kDimMismatch, "slices differ in dims or bit depth");
    data.insert(data.end(), s.data().begin(), s.data().end());
  }
  return ImageStack({plane.width, plane.height, slices.size()}, slices.front().bit_depth(),
                    std::move(data), slices.front().voxel_size());
}

}  // namespace rawscore
