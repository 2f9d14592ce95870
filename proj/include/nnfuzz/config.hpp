#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "nnfuzz/chooser.hpp"
#include "nnfuzz/coverage.hpp"
#include "nnfuzz/mcts.hpp"
#include "nnfuzz/mutation.hpp"

namespace nnfuzz {

inline constexpr std::size_t kDefaultBatchSize = 64;

struct ChooserConfig {
  ChooserKind kind = ChooserKind::random;
  std::size_t batch_size = kDefaultBatchSize;
  std::size_t clusters = kDefaultClusters;
};

/// Campaign stop conditions. The loop ends at whichever triggers first;
/// checks happen between batches only.
struct TerminationConfig {
  std::size_t target_new_inputs = 256;
  std::optional<double> timeout_seconds;
  std::size_t max_batches = 1000;
};

struct CampaignConfig {
  std::filesystem::path model;
  std::filesystem::path train;
  std::filesystem::path test;
  std::optional<std::filesystem::path> train_labels;  // IDX label files, if the datasets are IDX
  std::optional<std::filesystem::path> test_labels;

  CoverageConfig coverage;
  std::optional<std::string> tfc_profile;
  ChooserConfig chooser;
  MutatorConfig mutation;
  SearchBudget search;
  TerminationConfig termination;

  std::uint64_t seed = 0;
  std::filesystem::path output = "campaign";
  std::optional<std::filesystem::path> profile_cache;
  bool trace = false;
};

/// Parses a config document. Relative paths resolve against `base_dir`.
/// Throws Error{invalid_config} on unknown kinds or bad values.
CampaignConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
CampaignConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const CampaignConfig& config);

/// Referenced files exist, and the campaign has a stop condition.
void validate_config(const CampaignConfig& config);

}  // namespace nnfuzz
