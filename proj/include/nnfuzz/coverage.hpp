#pragma once

// Coverage criteria as stateful trackers over a committed test set T.
//
// Ratio criteria (NC, KMN, NBC, SNAC) keep a bitmap of covered classes and
// report |covered| / total_classes. TFC keeps the list of penultimate-layer
// vectors that were novel when seen and reports their count.
//
// Class ids:
//   NC, SNAC  neuron
//   KMN       neuron * k + section
//   NBC       neuron * 2 + {0 = below low, 1 = above high}
//   TFC       index of the novel record within the queried span

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nnfuzz/model.hpp"

namespace nnfuzz {

enum class Criterion { nc, kmn, nbc, snac, tfc };

std::string_view criterion_name(Criterion c) noexcept;
std::optional<Criterion> parse_criterion(std::string_view name) noexcept;

inline constexpr double kDefaultNcThreshold = 0.75;
inline constexpr std::size_t kDefaultKmnSections = 10000;

/// Squared TFC distance thresholds tuned per model family: LeNet1 30^2,
/// LeNet4 13^2, LeNet5 11^2, CIFAR CNN 3^2.
std::optional<double> tfc_threshold_for_profile(std::string_view model_profile) noexcept;
std::vector<std::string> tfc_profiles();

struct CoverageConfig {
  Criterion criterion = Criterion::nc;
  double nc_threshold = kDefaultNcThreshold;
  /// Min-max scale each layer's activations per input before thresholding.
  bool nc_scaled = true;
  std::size_t kmn_sections = kDefaultKmnSections;
  double tfc_threshold = 30.0 * 30.0;

  bool needs_profile() const noexcept {
    return criterion == Criterion::kmn || criterion == Criterion::nbc || criterion == Criterion::snac;
  }
};

/// Per-neuron activation bounds observed on the training set.
struct NeuronProfile {
  std::vector<float> low;
  std::vector<float> high;

  std::size_t size() const noexcept { return low.size(); }
  friend bool operator==(const NeuronProfile&, const NeuronProfile&) = default;
};

NeuronProfile profile_records(std::span<const ActivationRecord> records);
/// Exact per-neuron min/max over all samples. Throws Error{empty_dataset}.
NeuronProfile profile_training_set(const Model& model, std::span<const Tensor> train);

void save_profile(const NeuronProfile& profile, const std::filesystem::path& path);
NeuronProfile load_profile(const std::filesystem::path& path);
std::filesystem::path profile_cache_path(const std::filesystem::path& dir, const std::string& model_name,
                                         const std::string& train_digest);

class CoverageState {
 public:
  CoverageState(CoverageConfig config, const Model& model, std::optional<NeuronProfile> profile = std::nullopt);

  const CoverageConfig& config() const noexcept { return config_; }
  std::size_t neuron_count() const noexcept { return neuron_count_; }

  /// Classes hit by `records` (sorted, unique). For ratio criteria this
  /// includes already-covered classes; for TFC it lists the records whose
  /// vectors are novel against the committed vectors and earlier records of
  /// the same call.
  std::vector<std::size_t> classes_covered_by(std::span<const ActivationRecord> records) const;

  /// Number of classes `records` would add on commit.
  std::size_t new_class_count(std::span<const ActivationRecord> records) const;

  /// cov(T u batch) - cov(T). Never mutates the committed state.
  double coverage_increase(std::span<const ActivationRecord> records) const;

  /// Unions the classes of `records` into the committed state.
  void commit(std::span<const ActivationRecord> records);

  double value() const noexcept { return value_for(covered_count_); }
  std::size_t covered_count() const noexcept { return covered_count_; }
  /// Denominator of ratio criteria; 0 for TFC, whose value is a count.
  std::size_t total_classes() const noexcept { return total_classes_; }
  const std::vector<float>& tfc_vectors() const noexcept { return tfc_vectors_; }

  nlohmann::json report() const;

 private:
  double value_for(std::size_t covered) const noexcept;
  void check_records(std::span<const ActivationRecord> records) const;
  void ratio_classes(const ActivationRecord& rec, std::vector<std::size_t>& out) const;
  std::vector<std::size_t> novel_vectors(std::span<const ActivationRecord> records) const;

  CoverageConfig config_;
  std::vector<NeuronGroup> groups_;
  std::size_t neuron_count_ = 0;
  std::size_t penultimate_size_ = 0;
  std::optional<NeuronProfile> profile_;

  std::size_t total_classes_ = 0;
  std::size_t covered_count_ = 0;
  std::vector<std::uint8_t> covered_;  // bitmap for ratio criteria
  std::vector<float> tfc_vectors_;     // row-major [covered_count_, penultimate_size_]
};

}  // namespace nnfuzz
