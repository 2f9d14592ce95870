#include <random>

#include "doctest.h"
#include "nnfuzz/errors.hpp"
#include "nnfuzz/mutation.hpp"
#include "oracles.hpp"

using namespace nnfuzz;

namespace {

std::vector<std::size_t> extents(const std::vector<PixelRect>& rs, bool rows, std::size_t grid) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid; ++i) {
    const auto& r = rs[rows ? i * grid : i];
    out.push_back(rows ? r.row_end - r.row_begin : r.col_end - r.col_begin);
  }
  return out;
}

constexpr std::size_t kBrightUp = 0, kBrightDown = 1, kContrastUp = 2, kContrastDown = 3, kBlur = 4;

}  // namespace

TEST_CASE("region tiling") {
  CHECK(extents(enumerate_regions(28, 28, {}), true, 3) == std::vector<std::size_t>{9, 9, 10});
  CHECK(extents(enumerate_regions(28, 28, {}), false, 3) == std::vector<std::size_t>{9, 9, 10});
  CHECK(extents(enumerate_regions(32, 32, {}), true, 3) == std::vector<std::size_t>{10, 10, 12});
  for (const auto& r : enumerate_regions(9, 9, {})) CHECK(r.pixel_count() == 9);

  for (std::size_t h : {3u, 7u, 12u, 28u})
    for (std::size_t w : {4u, 9u, 31u})
      for (std::size_t gr : {1u, 2u, 3u})
        for (std::size_t gc : {1u, 3u}) {
          const auto rs = enumerate_regions(h, w, {gr, gc});
          REQUIRE(rs.size() == gr * gc);
          std::size_t total = 0;
          for (const auto& r : rs) total += r.pixel_count();
          CHECK(total == h * w);
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              int hits = 0;
              for (const auto& r : rs) hits += r.contains(y, x);
              CHECK(hits == 1);
            }
        }
  CHECK_THROWS_AS(enumerate_regions(2, 2, {3, 3}), Error);
}

TEST_CASE("default mutation set") {
  const auto ms = default_mutations();
  REQUIRE(ms.size() == 5);
  CHECK(ms[kBrightUp] == MutationKind::brightness(0.05f));
  CHECK(ms[kBrightDown] == MutationKind::brightness(-0.05f));
  CHECK(ms[kContrastUp] == MutationKind::contrast(1.25f));
  CHECK(ms[kContrastDown] == MutationKind::contrast(1.0f / 1.25f));
  CHECK(ms[kBlur] == MutationKind::blur(3));
  const MutatorConfig cfg;
  CHECK(cfg.grid.region_count() == 9);
  CHECK(cfg.distance.metric == DistanceMetric::linf);
  CHECK(cfg.distance.epsilon == 0.25);
  CHECK(cfg.contrast_pivot == 0.5f);
}

TEST_CASE("closed-form cases") {
  const Mutator m({}, {1, 9, 9});
  const Tensor ones({1, 9, 9}, 1.0f);
  CHECK(m.apply(ones, {4, kBrightUp}) == ones);

  const Tensor c({1, 9, 9}, 0.7f);
  const Tensor up = m.apply(c, {0, kContrastUp});
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 9; ++x) {
      const float want = (y < 3 && x < 3) ? std::clamp(0.5f + 1.25f * (0.7f - 0.5f), 0.0f, 1.0f) : 0.7f;
      CHECK(up.at(0, y, x) == want);
    }
  const Tensor hi({1, 9, 9}, 0.95f);
  CHECK(m.apply(hi, {8, kContrastUp}).at(0, 8, 8) == 1.0f);

  const Tensor blurred = m.apply(c, {4, kBlur});
  CHECK(blurred == c);
  CHECK(m.apply(Tensor({1, 9, 9}, 0.3f), {0, kBlur}) == Tensor({1, 9, 9}, 0.3f));
}

TEST_CASE("two small steps approximate one double step") {
  MutatorConfig cfg;
  cfg.mutations.push_back(MutationKind::brightness(-0.1f));
  const Mutator m(cfg, {1, 12, 12});
  std::mt19937_64 rng(3);
  const Tensor img = oracle::random_tensor({1, 12, 12}, rng, 0.2f, 0.8f);
  const Tensor twice = m.apply(m.apply(img, {4, kBrightDown}), {4, kBrightDown});
  const Tensor once = m.apply(img, {4, 5});
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-6));
}

TEST_CASE("blur reads beyond the region but writes only inside") {
  const Mutator m({}, {1, 9, 9});
  Tensor img({1, 9, 9}, 0.0f);
  img.at(0, 2, 3) = 0.9f;  // just outside region 0 (rows 0-2, cols 0-2)
  const Tensor out = m.apply(img, {0, kBlur});
  CHECK(out.at(0, 2, 2) == doctest::Approx(0.1));
  CHECK(out.at(0, 1, 2) == doctest::Approx(0.1));
  CHECK(out.at(0, 2, 3) == 0.9f);
  // edge clamping: corner pixel averages itself three times per axis
  Tensor corner({1, 9, 9}, 0.0f);
  corner.at(0, 0, 0) = 0.9f;
  CHECK(m.apply(corner, {0, kBlur}).at(0, 0, 0) == doctest::Approx(0.4));
}

TEST_CASE("locality, purity, uniformity and range") {
  std::mt19937_64 rng(12);
  for (const Shape& shape : {Shape{1, 28, 28}, Shape{3, 32, 32}, Shape{1, 10, 7}}) {
    const Mutator m({}, shape);
    Batch b;
    for (int i = 0; i < 4; ++i) b.push_back(oracle::random_tensor(shape, rng, 0.0f, 1.0f));
    const Batch copy = b;
    for (std::size_t r = 0; r < m.region_count(); ++r) {
      for (std::size_t k = 0; k < m.mutation_count(); ++k) {
        const Batch out = m.apply(b, {r, k});
        CHECK(bit_identical(b, copy));
        CHECK(bit_identical(out, m.apply(b, {r, k})));
        const auto& rect = m.regions()[r];
        for (std::size_t i = 0; i < out.size(); ++i) {
          for (std::size_t c = 0; c < shape[0]; ++c)
            for (std::size_t y = 0; y < shape[1]; ++y)
              for (std::size_t x = 0; x < shape[2]; ++x) {
                const float v = out[i].at(c, y, x);
                CHECK((v >= 0.0f && v <= 1.0f));
                if (!rect.contains(y, x)) CHECK(v == b[i].at(c, y, x));
              }
        }
      }
    }
  }
  // same pixel set changes on every image of the batch
  const Mutator m({}, {1, 9, 9});
  const Batch flat{Tensor({1, 9, 9}, 0.4f), Tensor({1, 9, 9}, 0.6f)};
  const Batch out = m.apply(flat, {5, kBrightUp});
  for (std::size_t p = 0; p < 81; ++p) CHECK((out[0][p] != flat[0][p]) == (out[1][p] != flat[1][p]));
}

TEST_CASE("action bounds and shapes") {
  const Mutator m({}, {1, 9, 9});
  try {
    m.apply(Tensor({1, 9, 9}), {9, 0});
    FAIL("expected index error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::index_out_of_range);
  }
  CHECK_THROWS_AS(m.apply(Tensor({1, 9, 9}), {0, 5}), Error);
  CHECK_THROWS_AS(m.apply(Tensor({1, 8, 9}), {0, 0}), Error);
  CHECK_THROWS_AS(apply_mutation({Tensor({1, 9, 9}), Tensor({1, 8, 9})}, {0, 0}, {}), Error);
  MutatorConfig even;
  even.mutations = {MutationKind::blur(2)};
  CHECK_THROWS_AS(Mutator(even, {1, 9, 9}), Error);
}

TEST_CASE("replay applies actions in order") {
  const Mutator m({}, {1, 9, 9});
  std::mt19937_64 rng(2);
  const Batch seed{oracle::random_tensor({1, 9, 9}, rng, 0.0f, 1.0f)};
  const std::vector<CompleteAction> acts{{0, 0}, {4, 4}, {0, 2}, {8, 1}};
  Batch cur = seed;
  for (const auto& a : acts) cur = m.apply(cur, a);
  CHECK(bit_identical(m.replay(seed, acts), cur));
  CHECK(bit_identical(m.replay(seed, {}), seed));
  CHECK(bit_identical(apply_mutation(seed, {4, 4}, {}), m.apply(seed, {4, 4})));
}

TEST_CASE("distance constraint") {
  const Tensor seed({1, 4, 4}, 0.5f);
  const DistanceConstraint linf{};
  CHECK(within_distance(seed, seed, linf));
  Tensor one = seed;
  one[5] = 0.75f;  // exactly epsilon away
  CHECK_FALSE(within_distance(one, seed, linf));
  one[5] = 0.7f;
  CHECK(within_distance(one, seed, linf));

  const Mutator m({}, {1, 9, 9});
  Batch b{Tensor({1, 9, 9}, 0.3f)};
  const Batch seed_batch = b;
  for (int i = 0; i < 4; ++i) b = m.apply(b, {4, kBrightUp});
  CHECK(m.within_distance(b, seed_batch));
  for (int i = 0; i < 4; ++i) b = m.apply(b, {4, kBrightUp});
  CHECK_FALSE(m.within_distance(b, seed_batch));

  DistanceConstraint l2{.metric = DistanceMetric::l2, .epsilon = 0.5};
  Tensor two = seed;
  two[0] = 0.8f;
  two[1] = 0.8f;  // sqrt(0.09 + 0.09) = 0.424
  CHECK(within_distance(two, seed, l2));
  two[2] = 0.8f;  // sqrt(0.27) = 0.52
  CHECK_FALSE(within_distance(two, seed, l2));

  // compound rule: 16 pixels, alpha 0.1 -> fewer than 1.6 changed pixels may move freely
  DistanceConstraint dh{.metric = DistanceMetric::deephunter, .alpha = 0.1, .beta = 0.2};
  Tensor few = seed;
  few[3] = 1.0f;
  CHECK(within_distance(few, seed, dh));
  few[4] = 0.6f;
  CHECK_FALSE(within_distance(few, seed, dh));
  few[3] = 0.65f;
  CHECK(within_distance(few, seed, dh));

  CHECK_THROWS_AS(within_distance(Tensor({1, 2, 2}), seed, linf), Error);
  CHECK_THROWS_AS(within_distance(Batch{seed}, Batch{}, linf), Error);
}
