#pragma once

// Mutation selector: a two-player game tree searched with UCT.
//
// Even levels hold region-choice nodes (Player I picks a region on the
// outgoing edge); odd levels hold mutation-choice nodes (Player II picks the
// mutation). A node at level 2j carries the seed batch with j complete
// actions applied. Levels are absolute: the original root is level 0 and
// stays level 0 after the working root advances.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "nnfuzz/mutation.hpp"
#include "nnfuzz/tensor.hpp"

namespace nnfuzz {

class CoverageState;
class Model;

using Rng = std::mt19937_64;

/// Uniform index in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

inline constexpr std::size_t kDefaultMaxDepthLevels = 8;
inline constexpr std::size_t kDefaultIterationsPerRoot = 25;

struct SearchBudget {
  std::size_t max_depth_levels = kDefaultMaxDepthLevels;     // tc1
  std::size_t iterations_per_root = kDefaultIterationsPerRoot;  // tc2
  double exploration = std::numbers::sqrt2;

  /// Working-root phases per batch; each phase ends with one root advancement.
  std::size_t root_phases() const noexcept { return max_depth_levels / 2; }
};

enum class NodeRole { region_choice, mutation_choice };

struct MctsNode {
  std::size_t level = 0;
  std::size_t action = 0;  // edge label from the parent: region on odd levels, mutation on even
  MctsNode* parent = nullptr;
  std::map<std::size_t, std::unique_ptr<MctsNode>> children;

  std::uint64_t visits = 0;
  double value_sum = 0.0;
  std::uint64_t own_backprops = 0;  // backpropagations that started here

  bool terminal = false;   // its batch broke the distance constraint
  bool exhausted = false;  // nothing in this subtree can be expanded any more

  std::optional<Batch> batch;  // cached for region-choice nodes

  NodeRole role() const noexcept { return level % 2 == 0 ? NodeRole::region_choice : NodeRole::mutation_choice; }
  double value() const noexcept { return visits ? value_sum / static_cast<double>(visits) : 0.0; }
};

/// v + e * sqrt(ln N / n); +infinity for an unvisited node.
double uct_potential(const MctsNode& node, std::uint64_t parent_visits, double exploration);

class GameTree {
 public:
  GameTree(Batch seed, const Mutator& mutator, SearchBudget budget);

  const Batch& seed() const noexcept { return origin_->batch.value(); }
  MctsNode& origin() noexcept { return *origin_; }
  const MctsNode& origin() const noexcept { return *origin_; }
  MctsNode& root() noexcept { return *root_; }
  const MctsNode& root() const noexcept { return *root_; }
  const SearchBudget& budget() const noexcept { return budget_; }
  const Mutator& mutator() const noexcept { return *mutator_; }

  std::size_t action_count(const MctsNode& node) const noexcept;
  bool expandable(const MctsNode& node) const noexcept;
  std::size_t node_count() const noexcept { return node_count_; }

  /// Descends from the working root by UCT argmax (seeded ties) to the first
  /// node with an unexpanded action. nullptr when the subtree is exhausted.
  MctsNode* select(Rng& rng);

  /// Adds one child for a uniformly chosen unexpanded action.
  /// Throws Error{depth_exceeded} or Error{fully_expanded}.
  MctsNode& expand(MctsNode& leaf, Rng& rng);

  /// Completes the pending (region, mutation) pair below `child`: a mutation
  /// node draws the mutation uniformly; a region node returns its own pair.
  CompleteAction simulate(const MctsNode& child, Rng& rng) const;

  /// Complete actions from the origin down to `node` (a trailing region edge is dropped).
  std::vector<CompleteAction> path_actions(const MctsNode& node) const;

  /// Batch of a node, materialized on first use.
  const Batch& batch_of(MctsNode& node);

  /// The candidate batch produced by `child` with its simulated action.
  Batch candidate_batch(MctsNode& child, CompleteAction simulated);

  /// n += 1 and value_sum += reward on every node from `child` up to the working root.
  void backpropagate(MctsNode& child, double reward);

  /// Marks `node` as past the distance wall and removes it from selection.
  void mark_terminal(MctsNode& node);

  /// Moves the working root to its best-valued child (unvisited children rank
  /// last, exhausted ones below open ones). nullptr if the root has no children.
  MctsNode* advance_root(Rng& rng);

 private:
  void refresh_exhausted(MctsNode* node);

  const Mutator* mutator_;
  SearchBudget budget_;
  std::unique_ptr<MctsNode> origin_;
  MctsNode* root_;
  std::size_t node_count_ = 1;
};

struct SearchStats {
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  std::size_t skipped_by_distance = 0;
  std::size_t root_advancements = 0;
  std::size_t nodes = 0;
};

struct SearchResult {
  Batch best_batch;
  double best_increase = 0.0;
  std::vector<CompleteAction> best_actions;
  SearchStats stats;
};

/// One select/expand/simulate step, reported to observers after it completes.
struct SearchEvent {
  std::size_t iteration = 0;
  std::vector<CompleteAction> actions;
  bool evaluated = false;
  double reward = 0.0;
  double best_so_far = 0.0;
  std::size_t root_level = 0;
};

using Evaluator = std::function<double(const Batch&)>;
using SearchObserver = std::function<void(const SearchEvent&, const GameTree&)>;

/// Searches mutation sequences for one seed batch. Candidates that break the
/// distance constraint are neither evaluated nor backpropagated. Returns the
/// first candidate with the strictly greatest reward, or (seed, 0).
SearchResult search_batch(const Batch& seed, const Evaluator& evaluate, const Mutator& mutator,
                          const SearchBudget& budget, Rng& rng, const SearchObserver& observer = {});

/// Coverage-increase reward against the committed state.
Evaluator coverage_evaluator(const Model& model, const CoverageState& state);

}  // namespace nnfuzz
