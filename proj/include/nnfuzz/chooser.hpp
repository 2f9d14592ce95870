#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nnfuzz/mcts.hpp"
#include "nnfuzz/tensor.hpp"

namespace nnfuzz {

enum class ChooserKind { random, clustered };

std::string_view chooser_name(ChooserKind k) noexcept;

struct BatchSelection {
  std::vector<std::size_t> indices;
  ChooserKind kind = ChooserKind::random;
  std::optional<std::size_t> cluster;
};

/// Uniform sample of min(batch_size, |pool|) distinct indices, in draw order.
BatchSelection choose_random(std::size_t pool_size, std::size_t batch_size, Rng& rng);

inline constexpr std::size_t kDefaultClusters = 10;
inline constexpr std::size_t kDefaultLloydIterations = 100;
inline constexpr double kDefaultLloydTolerance = 1e-4;

struct KMeansOptions {
  std::size_t k = kDefaultClusters;
  std::size_t max_iterations = kDefaultLloydIterations;
  double tolerance = kDefaultLloydTolerance;  // max centroid movement (L2) to stop
};

struct ClusterAssignment {
  std::vector<std::size_t> labels;           // cluster of each point
  std::vector<std::vector<float>> centroids;
  std::vector<std::vector<std::size_t>> members;
  std::vector<double> objective_history;  // sum of squared distances after each assignment step
  std::size_t iterations = 0;
};

/// Lloyd's algorithm on flattened pixels. The first centroid is a seeded
/// random point, the rest are chosen farthest-point. Empty clusters are
/// re-seeded with the point farthest from its centroid.
ClusterAssignment kmeans_fit(std::span<const Tensor> points, const KMeansOptions& options, Rng& rng);

/// Uniform cluster, then a uniform sample without replacement inside it
/// (the whole cluster when it is smaller than batch_size).
BatchSelection choose_clustered(const ClusterAssignment& assignment, std::size_t batch_size, Rng& rng);

}  // namespace nnfuzz
