#pragma once

// The fuzzing loop: choose a seed batch, search mutation sequences for it,
// commit the best batch when it raises coverage, repeat until a stop
// condition. Two search arms share the loop: the MCTS selector and a
// uniform-random baseline with the same mutation-application budget.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnfuzz/config.hpp"
#include "nnfuzz/container_io.hpp"
#include "nnfuzz/coverage.hpp"
#include "nnfuzz/mcts.hpp"
#include "nnfuzz/model.hpp"

namespace nnfuzz {

enum class SearchArm { mcts, random };

std::string_view arm_name(SearchArm arm) noexcept;

/// Random (r, m) walks from the seed, restarting at the seed on a distance
/// violation or after max_depth_levels / 2 actions. Spends exactly
/// root_phases() * iterations_per_root mutation applications.
SearchResult random_search_batch(const Batch& seed, const Evaluator& evaluate, const Mutator& mutator,
                                 const SearchBudget& budget, Rng& rng);

struct CorpusEntry {
  std::size_t batch = 0;
  std::size_t seed_index = 0;
  std::uint8_t label = 0;
  std::vector<CompleteAction> actions;
  Tensor image;
};

struct AdversarialCount {
  std::size_t count = 0;
  std::size_t total = 0;
  double percent = 0.0;
};

/// Mutants whose prediction differs from their seed's ground-truth label,
/// counted only for seeds the model classifies correctly. total = corpus size.
AdversarialCount count_adversarial(std::span<const CorpusEntry> corpus, const Model& model, const Dataset& seeds);

struct IterationRecord {
  std::size_t batch = 0;
  std::vector<std::size_t> seed_indices;
  std::optional<std::size_t> cluster;
  double best_increase = 0.0;
  bool committed = false;
  std::vector<CompleteAction> actions;
  SearchStats stats;
};

struct CampaignReport {
  SearchArm arm = SearchArm::mcts;
  std::vector<IterationRecord> iterations;
  std::size_t new_inputs = 0;
  double initial_coverage = 0.0;
  double final_coverage = 0.0;
  std::size_t forward_evaluations = 0;
  std::optional<AdversarialCount> adversarial;
  nlohmann::json coverage;
  std::string stop_reason;
  bool complete = true;
  std::string config_digest;
  std::string model_digest;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;  // kept out of to_json() so reports are reproducible

  double coverage_increase() const noexcept { return final_coverage - initial_coverage; }
  nlohmann::json to_json() const;
};

struct CampaignInputs {
  const Model* model = nullptr;
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  std::optional<NeuronProfile> profile;  // computed from train when absent
};

struct CampaignOptions {
  SearchArm arm = SearchArm::mcts;
  /// Replaces the coverage-increase reward in both search and commit
  /// re-validation. Used to wire synthetic criteria into the loop.
  std::optional<Evaluator> reward_override;
  SearchObserver observer;
  /// Called after each commit with the new corpus entries and the committed
  /// batch ordinal. Returning false aborts the campaign as incomplete.
  std::function<bool(std::span<const CorpusEntry>, std::size_t)> on_commit;
};

struct CampaignResult {
  CampaignReport report;
  std::vector<CorpusEntry> corpus;
  std::optional<CoverageState> final_state;
};

/// In-memory campaign. Deterministic for a fixed config and seed unless a
/// timeout cuts it short.
CampaignResult run_campaign(const CampaignInputs& inputs, const CampaignConfig& config,
                            const CampaignOptions& options = {});

/// Loads the files named by `config`, runs, and writes config.json,
/// report.json, provenance.jsonl, corpus/batch_<i>.tds and timing.json into
/// config.output. On I/O failure the partial corpus is flushed and the report
/// is marked incomplete before rethrowing.
CampaignReport run_campaign_to_disk(const CampaignConfig& config, SearchArm arm = SearchArm::mcts);

/// Re-checks a campaign directory: every corpus image must replay bit-exactly
/// from its provenance and satisfy the distance constraint, and the final
/// coverage recomputed from scratch must equal the reported value.
struct ReplayResult {
  std::size_t entries = 0;
  std::size_t replay_mismatches = 0;
  std::size_t distance_violations = 0;
  double reported_coverage = 0.0;
  double recomputed_coverage = 0.0;
  bool ok() const noexcept {
    return replay_mismatches == 0 && distance_violations == 0 && reported_coverage == recomputed_coverage;
  }
};
ReplayResult replay_campaign(const std::filesystem::path& campaign_dir);

/// Coverage of T u corpus computed from scratch in corpus order.
CoverageState recompute_coverage(const Model& model, const CoverageConfig& coverage, const NeuronProfile* profile,
                                 const Dataset& test, std::span<const CorpusEntry> corpus);

}  // namespace nnfuzz
