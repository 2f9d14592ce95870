#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnfuzz/tensor.hpp"

namespace nnfuzz {

/// Half-open pixel rectangle [row_begin, row_end) x [col_begin, col_end).
struct PixelRect {
  std::size_t row_begin = 0, row_end = 0, col_begin = 0, col_end = 0;

  std::size_t pixel_count() const noexcept { return (row_end - row_begin) * (col_end - col_begin); }
  bool contains(std::size_t y, std::size_t x) const noexcept {
    return y >= row_begin && y < row_end && x >= col_begin && x < col_end;
  }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct RegionGrid {
  std::size_t rows = 3;
  std::size_t cols = 3;

  std::size_t region_count() const noexcept { return rows * cols; }
};

/// Tiles a height x width image in row-major region order. Extents are
/// floor(extent / parts) with the last row/column taking the remainder.
std::vector<PixelRect> enumerate_regions(std::size_t height, std::size_t width, RegionGrid grid);

enum class MutationFamily { brightness, contrast, blur };

struct MutationKind {
  MutationFamily family = MutationFamily::brightness;
  float amount = 0.0f;        // brightness: additive delta; contrast: gain about the pivot
  std::size_t blur_size = 3;  // odd box size, blur only

  static MutationKind brightness(float delta) { return {MutationFamily::brightness, delta, 3}; }
  static MutationKind contrast(float gain) { return {MutationFamily::contrast, gain, 3}; }
  static MutationKind blur(std::size_t size = 3) { return {MutationFamily::blur, 0.0f, size}; }

  std::string describe() const;
  friend bool operator==(const MutationKind&, const MutationKind&) = default;
};

inline constexpr float kDefaultBrightnessDelta = 0.05f;
inline constexpr float kDefaultContrastGain = 1.25f;

/// brightness(+d), brightness(-d), contrast(xg), contrast(x1/g), blur 3x3.
std::vector<MutationKind> default_mutations();

struct CompleteAction {
  std::size_t region = 0;
  std::size_t mutation = 0;

  friend bool operator==(const CompleteAction&, const CompleteAction&) = default;
};

enum class DistanceMetric { linf, l2, deephunter };

std::string_view metric_name(DistanceMetric m) noexcept;

struct DistanceConstraint {
  DistanceMetric metric = DistanceMetric::linf;
  double epsilon = 0.25;
  // Compound rule: few changed elements (L0 < alpha * size) may change by
  // any amount, otherwise L-inf must stay below beta.
  double alpha = 0.02;
  double beta = 0.2;
};

/// True iff d(mutated, seed) < epsilon under the configured metric.
bool within_distance(const Tensor& mutated, const Tensor& seed, const DistanceConstraint& constraint);
/// A batch passes iff every image passes against its own seed.
bool within_distance(const Batch& mutated, const Batch& seed, const DistanceConstraint& constraint);

struct MutatorConfig {
  RegionGrid grid;
  std::vector<MutationKind> mutations = default_mutations();
  float contrast_pivot = 0.5f;
  DistanceConstraint distance;
};

/// Applies a complete action (region r, mutation m) to images of one shape.
/// Writes stay inside region r; blur may read one box radius beyond it
/// (taps outside the image clamp to the edge). Results clamp to [0, 1].
class Mutator {
 public:
  Mutator(MutatorConfig config, const Shape& image_shape);

  const MutatorConfig& config() const noexcept { return config_; }
  const std::vector<PixelRect>& regions() const noexcept { return regions_; }
  std::size_t region_count() const noexcept { return regions_.size(); }
  std::size_t mutation_count() const noexcept { return config_.mutations.size(); }

  Tensor apply(const Tensor& image, CompleteAction action) const;
  Batch apply(const Batch& batch, CompleteAction action) const;
  Batch replay(const Batch& seed, std::span<const CompleteAction> actions) const;

  bool within_distance(const Batch& mutated, const Batch& seed) const {
    return nnfuzz::within_distance(mutated, seed, config_.distance);
  }

 private:
  void check(CompleteAction action) const;

  MutatorConfig config_;
  Shape shape_;
  std::vector<PixelRect> regions_;
};

/// Free-function form: builds a Mutator for the batch's image shape.
Batch apply_mutation(const Batch& batch, CompleteAction action, const MutatorConfig& config);

}  // namespace nnfuzz
