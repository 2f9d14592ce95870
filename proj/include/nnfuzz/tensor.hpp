#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace nnfuzz {

using Shape = std::vector<std::size_t>;

/// Product of extents; the empty shape is a scalar with one element.
std::size_t element_count(const Shape& shape) noexcept;

std::string shape_to_string(const Shape& shape);

/// Dense row-major float32 tensor. Images are stored channel-major (C, H, W).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Element access for rank-3 (C, H, W) tensors.
  float& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

using Batch = std::vector<Tensor>;

/// Bitwise equality of every element; distinguishes -0 from +0.
bool bit_identical(const Tensor& a, const Tensor& b) noexcept;
bool bit_identical(const Batch& a, const Batch& b) noexcept;

}  // namespace nnfuzz
