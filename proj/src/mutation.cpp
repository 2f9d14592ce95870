#include "nnfuzz/mutation.hpp"

#include <algorithm>
#include <cmath>

#include "nnfuzz/errors.hpp"
#include "nnfuzz/kernels.hpp"

namespace nnfuzz {

std::vector<PixelRect> enumerate_regions(std::size_t height, std::size_t width, RegionGrid grid) {
  if (grid.rows == 0 || grid.cols == 0 || grid.rows > height || grid.cols > width) {
    throw Error(ErrorCode::invalid_argument, "grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                                                 " does not fit a " + std::to_string(height) + "x" +
                                                 std::to_string(width) + " image");
  }
  const std::size_t rh = height / grid.rows, cw = width / grid.cols;
  std::vector<PixelRect> out;
  out.reserve(grid.region_count());
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      out.push_back({r * rh, r + 1 == grid.rows ? height : (r + 1) * rh, c * cw, c + 1 == grid.cols ? width : (c + 1) * cw});
    }
  }
  return out;
}

std::string MutationKind::describe() const {
  switch (family) {
    case MutationFamily::brightness: return "brightness(" + std::to_string(amount) + ")";
    case MutationFamily::contrast: return "contrast(" + std::to_string(amount) + ")";
    case MutationFamily::blur: return "blur(" + std::to_string(blur_size) + ")";
  }
  return "unknown";
}

std::vector<MutationKind> default_mutations() {
  return {MutationKind::brightness(kDefaultBrightnessDelta), MutationKind::brightness(-kDefaultBrightnessDelta),
          MutationKind::contrast(kDefaultContrastGain), MutationKind::contrast(1.0f / kDefaultContrastGain),
          MutationKind::blur(3)};
}

std::string_view metric_name(DistanceMetric m) noexcept {
  switch (m) {
    case DistanceMetric::linf: return "linf";
    case DistanceMetric::l2: return "l2";
    case DistanceMetric::deephunter: return "deephunter";
  }
  return "unknown";
}

bool within_distance(const Tensor& mutated, const Tensor& seed, const DistanceConstraint& constraint) {
  if (mutated.shape() != seed.shape()) {
    throw Error(ErrorCode::shape_mismatch, "mutated " + shape_to_string(mutated.shape()) + " vs seed " +
                                               shape_to_string(seed.shape()));
  }
  switch (constraint.metric) {
    case DistanceMetric::linf:
      return static_cast<double>(kernels::max_abs_diff(mutated.data(), seed.data())) < constraint.epsilon;
    case DistanceMetric::l2:
      return std::sqrt(static_cast<double>(kernels::squared_l2(mutated.data(), seed.data()))) < constraint.epsilon;
    case DistanceMetric::deephunter: {
      std::size_t changed = 0;
      for (std::size_t i = 0; i < mutated.size(); ++i) changed += mutated[i] != seed[i];
      if (static_cast<double>(changed) < constraint.alpha * static_cast<double>(mutated.size())) return true;
      return static_cast<double>(kernels::max_abs_diff(mutated.data(), seed.data())) < constraint.beta;
    }
  }
  return false;
}

bool within_distance(const Batch& mutated, const Batch& seed, const DistanceConstraint& constraint) {
  if (mutated.size() != seed.size()) throw Error(ErrorCode::shape_mismatch, "batch sizes differ");
  for (std::size_t i = 0; i < mutated.size(); ++i) {
    if (!within_distance(mutated[i], seed[i], constraint)) return false;
  }
  return true;
}

Mutator::Mutator(MutatorConfig config, const Shape& image_shape) : config_(std::move(config)), shape_(image_shape) {
  if (shape_.size() != 3) throw Error(ErrorCode::shape_mismatch, "mutator expects (C, H, W) images");
  if (config_.mutations.empty()) throw Error(ErrorCode::invalid_config, "mutation list is empty");
  for (const auto& m : config_.mutations) {
    if (m.family == MutationFamily::blur && (m.blur_size == 0 || m.blur_size % 2 == 0)) {
      throw Error(ErrorCode::invalid_config, "blur size must be odd");
    }
  }
  regions_ = enumerate_regions(shape_[1], shape_[2], config_.grid);
}

void Mutator::check(CompleteAction action) const {
  if (action.region >= regions_.size() || action.mutation >= config_.mutations.size()) {
    throw Error(ErrorCode::index_out_of_range, "action (" + std::to_string(action.region) + ", " +
                                                   std::to_string(action.mutation) + ") outside " +
                                                   std::to_string(regions_.size()) + " x " +
                                                   std::to_string(config_.mutations.size()));
  }
}

Tensor Mutator::apply(const Tensor& image, CompleteAction action) const {
  check(action);
  if (image.shape() != shape_) throw Error(ErrorCode::shape_mismatch, "image shape differs from mutator shape");
  const PixelRect& r = regions_[action.region];
  const MutationKind& m = config_.mutations[action.mutation];
  const std::size_t channels = shape_[0], height = shape_[1], width = shape_[2];
  auto clamp01 = [](float v) { return std::clamp(v, 0.0f, 1.0f); };

  Tensor out = image;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = r.row_begin; y < r.row_end; ++y) {
      for (std::size_t x = r.col_begin; x < r.col_end; ++x) {
        const float p = image.at(c, y, x);
        float v = p;
        switch (m.family) {
          case MutationFamily::brightness: v = p + m.amount; break;
          case MutationFamily::contrast: v = config_.contrast_pivot + m.amount * (p - config_.contrast_pivot); break;
          case MutationFamily::blur: {
            const auto radius = static_cast<std::ptrdiff_t>(m.blur_size / 2);
            double acc = 0.0;
            for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
              const auto yy = static_cast<std::size_t>(
                  std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + dy, 0, static_cast<std::ptrdiff_t>(height) - 1));
              for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
                const auto xx = static_cast<std::size_t>(
                    std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + dx, 0, static_cast<std::ptrdiff_t>(width) - 1));
                acc += image.at(c, yy, xx);
              }
            }
            v = static_cast<float>(acc / static_cast<double>(m.blur_size * m.blur_size));
            break;
          }
        }
        out.at(c, y, x) = clamp01(v);
      }
    }
  }
  return out;
}

Batch Mutator::apply(const Batch& batch, CompleteAction action) const {
  check(action);
  Batch out;
  out.reserve(batch.size());
  for (const Tensor& t : batch) out.push_back(apply(t, action));
  return out;
}

Batch Mutator::replay(const Batch& seed, std::span<const CompleteAction> actions) const {
  Batch cur = seed;
  for (const auto& a : actions) cur = apply(cur, a);
  return cur;
}

Batch apply_mutation(const Batch& batch, CompleteAction action, const MutatorConfig& config) {
  if (batch.empty()) return {};
  for (const auto& t : batch) {
    if (t.shape() != batch.front().shape()) throw Error(ErrorCode::shape_mismatch, "batch images differ in shape");
  }
  return Mutator(config, batch.front().shape()).apply(batch, action);
}

}  // namespace nnfuzz
