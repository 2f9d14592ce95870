#include "nnfuzz/mcts.hpp"

#include <cmath>
#include <limits>

#include "nnfuzz/coverage.hpp"
#include "nnfuzz/errors.hpp"
#include "nnfuzz/model.hpp"

namespace nnfuzz {

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double uct_potential(const MctsNode& node, std::uint64_t parent_visits, double exploration) {
  if (node.visits == 0) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(node.visits);
  const double big_n = static_cast<double>(std::max<std::uint64_t>(parent_visits, 1));
  return node.value() + exploration * std::sqrt(std::log(big_n) / n);
}

GameTree::GameTree(Batch seed, const Mutator& mutator, SearchBudget budget)
    : mutator_(&mutator), budget_(budget), origin_(std::make_unique<MctsNode>()), root_(origin_.get()) {
  if (budget_.max_depth_levels == 0 || budget_.iterations_per_root == 0 || !(budget_.exploration >= 0.0)) {
    throw Error(ErrorCode::invalid_config, "search budget must be positive");
  }
  origin_->batch = std::move(seed);
}

std::size_t GameTree::action_count(const MctsNode& node) const noexcept {
  return node.role() == NodeRole::region_choice ? mutator_->region_count() : mutator_->mutation_count();
}

bool GameTree::expandable(const MctsNode& node) const noexcept {
  return !node.terminal && node.level < budget_.max_depth_levels && node.children.size() < action_count(node);
}

void GameTree::refresh_exhausted(MctsNode* node) {
  for (; node; node = node->parent) {
    bool exhausted = node->terminal || node->level >= budget_.max_depth_levels;
    if (!exhausted && node->children.size() == action_count(*node)) {
      exhausted = true;
      for (const auto& [a, child] : node->children) {
        if (!child->exhausted) {
          exhausted = false;
          break;
        }
      }
    }
    if (exhausted == node->exhausted) return;
    node->exhausted = exhausted;
  }
}

MctsNode* GameTree::select(Rng& rng) {
  MctsNode* node = root_;
  if (node->exhausted) return nullptr;
  std::vector<MctsNode*> best;
  while (!expandable(*node)) {
    best.clear();
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& [a, child] : node->children) {
      if (child->exhausted) continue;
      const double score = uct_potential(*child, node->visits, budget_.exploration);
      if (score > best_score) {
        best_score = score;
        best.assign(1, child.get());
      } else if (score == best_score) {
        best.push_back(child.get());
      }
    }
    if (best.empty()) return nullptr;
    node = best.size() == 1 ? best.front() : best[uniform_index(rng, best.size())];
  }
  return node;
}

MctsNode& GameTree::expand(MctsNode& leaf, Rng& rng) {
  if (leaf.level >= budget_.max_depth_levels) {
    throw Error(ErrorCode::depth_exceeded, "node at level " + std::to_string(leaf.level) + " cannot grow");
  }
  const std::size_t actions = action_count(leaf);
  if (leaf.terminal || leaf.children.size() >= actions) {
    throw Error(ErrorCode::fully_expanded, "node at level " + std::to_string(leaf.level) + " has no unexpanded action");
  }
  std::vector<std::size_t> open;
  open.reserve(actions - leaf.children.size());
  for (std::size_t a = 0; a < actions; ++a) {
    if (!leaf.children.contains(a)) open.push_back(a);
  }
  const std::size_t action = open[uniform_index(rng, open.size())];
  auto child = std::make_unique<MctsNode>();
  child->level = leaf.level + 1;
  child->action = action;
  child->parent = &leaf;
  MctsNode& ref = *child;
  leaf.children.emplace(action, std::move(child));
  ++node_count_;
  refresh_exhausted(&ref);
  return ref;
}

CompleteAction GameTree::simulate(const MctsNode& child, Rng& rng) const {
  if (child.role() == NodeRole::mutation_choice) {
    return {child.action, uniform_index(rng, mutator_->mutation_count())};
  }
  if (!child.parent) throw Error(ErrorCode::invalid_argument, "cannot simulate from the origin");
  return {child.parent->action, child.action};
}

std::vector<CompleteAction> GameTree::path_actions(const MctsNode& node) const {
  std::vector<CompleteAction> out;
  for (const MctsNode* n = &node; n && n->parent; n = n->parent) {
    if (n->role() == NodeRole::region_choice) out.push_back({n->parent->action, n->action});
  }
  return {out.rbegin(), out.rend()};
}

const Batch& GameTree::batch_of(MctsNode& node) {
  if (node.role() == NodeRole::mutation_choice) return batch_of(*node.parent);
  if (!node.batch) {
    MctsNode& grandparent = *node.parent->parent;
    node.batch = mutator_->apply(batch_of(grandparent), {node.parent->action, node.action});
  }
  return *node.batch;
}

Batch GameTree::candidate_batch(MctsNode& child, CompleteAction simulated) {
  if (child.role() == NodeRole::region_choice) return batch_of(child);
  return mutator_->apply(batch_of(child), simulated);
}

void GameTree::backpropagate(MctsNode& child, double reward) {
  ++child.own_backprops;
  for (MctsNode* n = &child;; n = n->parent) {
    ++n->visits;
    n->value_sum += reward;
    if (n == root_ || !n->parent) break;
  }
}

void GameTree::mark_terminal(MctsNode& node) {
  node.terminal = true;
  node.batch.reset();
  refresh_exhausted(&node);
}

MctsNode* GameTree::advance_root(Rng& rng) {
  if (root_->children.empty()) return nullptr;
  // Rank: open before exhausted, visited before unvisited, then by mean value.
  auto rank = [](const MctsNode& n) {
    return std::tuple(!n.exhausted, n.visits > 0, n.visits > 0 ? n.value() : 0.0);
  };
  std::vector<MctsNode*> best;
  for (const auto& [a, child] : root_->children) {
    if (best.empty() || rank(*child) > rank(*best.front())) {
      best.assign(1, child.get());
    } else if (rank(*child) == rank(*best.front())) {
      best.push_back(child.get());
    }
  }
  root_ = best.size() == 1 ? best.front() : best[uniform_index(rng, best.size())];
  return root_;
}

SearchResult search_batch(const Batch& seed, const Evaluator& evaluate, const Mutator& mutator,
                          const SearchBudget& budget, Rng& rng, const SearchObserver& observer) {
  GameTree tree(seed, mutator, budget);
  SearchResult result;
  result.best_batch = seed;

  std::size_t iteration = 0;
  for (std::size_t phase = 0; phase < budget.root_phases(); ++phase) {
    for (std::size_t i = 0; i < budget.iterations_per_root; ++i) {
      MctsNode* leaf = tree.select(rng);
      if (!leaf) break;
      MctsNode& child = tree.expand(*leaf, rng);
      const CompleteAction simulated = tree.simulate(child, rng);
      Batch candidate = tree.candidate_batch(child, simulated);

      SearchEvent event;
      event.iteration = iteration++;
      event.actions = tree.path_actions(child);
      if (child.role() == NodeRole::mutation_choice) event.actions.push_back(simulated);
      event.root_level = tree.root().level;
      ++result.stats.iterations;

      if (!mutator.within_distance(candidate, tree.seed())) {
        ++result.stats.skipped_by_distance;
        if (child.role() == NodeRole::region_choice) tree.mark_terminal(child);
      } else {
        const double reward = evaluate(candidate);
        ++result.stats.evaluations;
        if (reward > result.best_increase) {
          result.best_increase = reward;
          result.best_batch = std::move(candidate);
          result.best_actions = event.actions;
        }
        tree.backpropagate(child, reward);
        event.evaluated = true;
        event.reward = reward;
      }
      event.best_so_far = result.best_increase;
      if (observer) observer(event, tree);
    }
    if (!tree.advance_root(rng)) break;
    ++result.stats.root_advancements;
  }
  result.stats.nodes = tree.node_count();
  return result;
}

Evaluator coverage_evaluator(const Model& model, const CoverageState& state) {
  return [&model, &state](const Batch& batch) {
    const auto records = forward_batch(model, batch);
    return state.coverage_increase(records);
  };
}

}  // namespace nnfuzz
