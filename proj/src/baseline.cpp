#include "nnfuzz/campaign.hpp"

namespace nnfuzz {

SearchResult random_search_batch(const Batch& seed, const Evaluator& evaluate, const Mutator& mutator,
                                 const SearchBudget& budget, Rng& rng) {
  SearchResult result;
  result.best_batch = seed;
  const std::size_t steps = budget.root_phases() * budget.iterations_per_root;
  const std::size_t max_actions = std::max<std::size_t>(budget.max_depth_levels / 2, 1);

  Batch current = seed;
  std::vector<CompleteAction> path;
  for (std::size_t s = 0; s < steps; ++s) {
    const CompleteAction action{uniform_index(rng, mutator.region_count()), uniform_index(rng, mutator.mutation_count())};
    Batch candidate = mutator.apply(current, action);
    path.push_back(action);
    ++result.stats.iterations;
    if (!mutator.within_distance(candidate, seed)) {
      ++result.stats.skipped_by_distance;
      current = seed;
      path.clear();
      continue;
    }
    const double reward = evaluate(candidate);
    ++result.stats.evaluations;
    if (reward > result.best_increase) {
      result.best_increase = reward;
      result.best_batch = candidate;
      result.best_actions = path;
    }
    if (path.size() >= max_actions) {
      current = seed;
      path.clear();
    } else {
      current = std::move(candidate);
    }
  }
  return result;
}

}  // namespace nnfuzz
