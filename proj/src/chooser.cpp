#include "nnfuzz/chooser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nnfuzz/errors.hpp"
#include "nnfuzz/kernels.hpp"

namespace nnfuzz {

std::string_view chooser_name(ChooserKind k) noexcept {
  return k == ChooserKind::random ? "random" : "clustered";
}

namespace {

std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

BatchSelection choose_random(std::size_t pool_size, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "batch size must be positive");
  if (pool_size == 0) throw Error(ErrorCode::empty_dataset, "cannot choose from an empty test set");
  std::vector<std::size_t> all(pool_size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return {sample_without_replacement(std::move(all), batch_size, rng), ChooserKind::random, std::nullopt};
}

ClusterAssignment kmeans_fit(std::span<const Tensor> points, const KMeansOptions& options, Rng& rng) {
  const std::size_t n = points.size();
  const std::size_t k = options.k;
  if (k == 0 || k > n) {
    throw Error(ErrorCode::invalid_argument, "k-means needs 1 <= k <= |T| (k = " + std::to_string(k) +
                                                 ", |T| = " + std::to_string(n) + ")");
  }
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw Error(ErrorCode::shape_mismatch, "k-means points differ in size");
  }
  const auto& kern = kernels::table(kernels::active_backend());
  auto dist = [&](std::size_t i, const std::vector<float>& c) {
    return static_cast<double>(kern.squared_l2(points[i].data().data(), c.data(), dim));
  };

  ClusterAssignment out;
  out.centroids.push_back(points[uniform_index(rng, n)].values());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (out.centroids.size() < k) {
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dist(i, out.centroids.back()));
      if (nearest[i] > far_d) {
        far_d = nearest[i];
        far = i;
      }
    }
    out.centroids.push_back(points[far].values());
  }

  out.labels.assign(n, 0);
  std::vector<double> point_cost(n, 0.0);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = dist(i, out.centroids[c]);
        if (d < best) {
          best = d;
          out.labels[i] = c;
        }
      }
      point_cost[i] = best;
      objective += best;
    }

    // Re-seed empty clusters from the worst-fit points.
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t l : out.labels) ++counts[l];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (counts[out.labels[i]] > 1 && (counts[out.labels[far]] <= 1 || point_cost[i] > point_cost[far])) far = i;
      }
      objective -= point_cost[far];
      point_cost[far] = 0.0;
      --counts[out.labels[far]];
      out.labels[far] = c;
      counts[c] = 1;
      out.centroids[c] = points[far].values();
    }
    out.objective_history.push_back(objective);
    out.iterations = iter + 1;

    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> acc(dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (out.labels[i] != c) continue;
        const auto v = points[i].data();
        for (std::size_t d = 0; d < dim; ++d) acc[d] += v[d];
      }
      std::vector<float> next(dim);
      for (std::size_t d = 0; d < dim; ++d) next[d] = static_cast<float>(acc[d] / static_cast<double>(counts[c]));
      movement = std::max(movement, std::sqrt(static_cast<double>(kern.squared_l2(next.data(), out.centroids[c].data(), dim))));
      out.centroids[c] = std::move(next);
    }
    if (movement < options.tolerance) break;
  }

  out.members.assign(k, {});
  for (std::size_t i = 0; i < n; ++i) out.members[out.labels[i]].push_back(i);
  return out;
}

BatchSelection choose_clustered(const ClusterAssignment& assignment, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "batch size must be positive");
  if (assignment.members.empty()) throw Error(ErrorCode::empty_dataset, "no clusters fitted");
  const std::size_t cluster = uniform_index(rng, assignment.members.size());
  return {sample_without_replacement(assignment.members[cluster], batch_size, rng), ChooserKind::clustered, cluster};
}

}  // namespace nnfuzz
