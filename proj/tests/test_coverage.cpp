#include <filesystem>
#include <random>

#include "doctest.h"
#include "nnfuzz/coverage.hpp"
#include "nnfuzz/fixtures.hpp"
#include "nnfuzz/mcts.hpp"
#include "nnfuzz/mutation.hpp"
#include "oracles.hpp"

using namespace nnfuzz;

namespace {

// flatten -> dense(3) -> relu -> dense(2): five neurons in groups {0,1,2} and {3,4},
// penultimate vector of length 3.
const Model& tiny_model() {
  static const Model m = make_fixture_model("dense-only", 1);
  return m;
}

ActivationRecord rec(std::vector<float> neurons, std::vector<float> pen = {0, 0, 0}) {
  ActivationRecord r;
  r.neurons = std::move(neurons);
  r.penultimate = std::move(pen);
  r.logits = {0, 0};
  return r;
}

NeuronProfile unit_profile() { return {{0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}}; }

const Fixture& micro() {
  static const Fixture fx = [] {
    FixtureSpec spec;
    spec.architecture = "micro-cnn";
    spec.weight_seed = 3;
    spec.tfc_threshold = 4.0;
    return build_fixture(spec);
  }();
  return fx;
}

Batch random_batch(const Fixture& fx, std::size_t n, std::mt19937_64& rng) {
  const Mutator mut({}, fx.model.input_shape());
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor t = fx.test.samples[uniform_index(rng, fx.test.size())];
    const std::size_t steps = uniform_index(rng, 6);
    for (std::size_t s = 0; s < steps; ++s)
      t = mut.apply(t, {uniform_index(rng, mut.region_count()), uniform_index(rng, mut.mutation_count())});
    if (uniform_index(rng, 4) == 0) t = oracle::random_tensor(t.shape(), rng, 0.0f, 1.0f);
    b.push_back(std::move(t));
  }
  return b;
}

std::vector<CoverageConfig> all_configs() {
  return {{.criterion = Criterion::nc},
          {.criterion = Criterion::nc, .nc_threshold = 0.3, .nc_scaled = false},
          {.criterion = Criterion::kmn},
          {.criterion = Criterion::kmn, .kmn_sections = 7},
          {.criterion = Criterion::nbc},
          {.criterion = Criterion::snac},
          {.criterion = Criterion::tfc, .tfc_threshold = 4.0}};
}

}  // namespace

TEST_CASE("hyperparameter defaults") {
  const CoverageConfig c;
  CHECK(c.nc_threshold == 0.75);
  CHECK(c.nc_scaled);
  CHECK(c.kmn_sections == 10000);
  CHECK(tfc_threshold_for_profile("lenet1") == 900.0);
  CHECK(tfc_threshold_for_profile("lenet4") == 169.0);
  CHECK(tfc_threshold_for_profile("lenet5") == 121.0);
  CHECK(tfc_threshold_for_profile("cifar") == 9.0);
  CHECK_FALSE(tfc_threshold_for_profile("vgg"));
  CHECK(parse_criterion("snac") == Criterion::snac);
  CHECK_FALSE(parse_criterion("mcdc"));
}

TEST_CASE("total classes per criterion") {
  const Model& m = tiny_model();
  CHECK(CoverageState({.criterion = Criterion::nc}, m).total_classes() == 5);
  CHECK(CoverageState({.criterion = Criterion::snac}, m, unit_profile()).total_classes() == 5);
  CHECK(CoverageState({.criterion = Criterion::nbc}, m, unit_profile()).total_classes() == 10);
  CHECK(CoverageState({.criterion = Criterion::kmn}, m, unit_profile()).total_classes() == 50000);
  CHECK(CoverageState({.criterion = Criterion::tfc}, m).total_classes() == 0);
}

TEST_CASE("profile checks") {
  const Model& m = tiny_model();
  CHECK_THROWS_AS(CoverageState({.criterion = Criterion::kmn}, m), Error);
  CHECK_THROWS_AS(CoverageState({.criterion = Criterion::nbc}, m, NeuronProfile{{0}, {1}}), Error);
  CoverageState s({.criterion = Criterion::nc}, m);
  CHECK_THROWS_AS(s.coverage_increase(std::vector{rec({1, 2})}), Error);
  CHECK_THROWS_AS(profile_records({}), Error);
  CHECK_THROWS_AS(profile_training_set(m, {}), Error);

  const auto r1 = rec({1, 5, 0, 2, 3}), r2 = rec({2, 4, 0, -1, 3});
  const auto p = profile_records(std::vector{r1, r2});
  CHECK(p.low == std::vector<float>{1, 4, 0, -1, 3});
  CHECK(p.high == std::vector<float>{2, 5, 0, 2, 3});
}

TEST_CASE("profile over the training set matches store-then-reduce") {
  const Fixture& fx = micro();
  const NeuronProfile p = profile_training_set(fx.model, fx.train.samples);
  std::vector<float> lo(fx.model.neuron_count(), 1e30f), hi(fx.model.neuron_count(), -1e30f);
  for (const auto& x : fx.train.samples) {
    const auto r = oracle::naive_forward(fx.model, x);
    for (std::size_t i = 0; i < lo.size(); ++i) {
      lo[i] = std::min(lo[i], r.neurons[i]);
      hi[i] = std::max(hi[i], r.neurons[i]);
    }
  }
  for (std::size_t i = 0; i < lo.size(); ++i) {
    CHECK(p.low[i] == doctest::Approx(lo[i]).epsilon(1e-5));
    CHECK(p.high[i] == doctest::Approx(hi[i]).epsilon(1e-5));
    CHECK(p.low[i] <= p.high[i]);
  }
  const NeuronProfile zero = profile_training_set(
      Model("z", {1, 1, 2}, 0, {Layer::flatten(), Layer::dense(Tensor({2, 2}, 1.0f), Tensor({2}, 0.0f))}),
      std::vector{Tensor({1, 1, 2}, 0.0f)});
  CHECK(zero.low == std::vector<float>{0, 0});
  CHECK(zero.high == std::vector<float>{0, 0});
}

TEST_CASE("profile persists through the cache file") {
  const auto dir = std::filesystem::temp_directory_path() / "nnfuzz_test_profile";
  std::filesystem::remove_all(dir);
  const NeuronProfile p{{-1.5f, 0, 2}, {3, 0, 2.25f}};
  const auto path = profile_cache_path(dir, "m", std::string(64, 'a'));
  CHECK(path.filename() == "profile_m_aaaaaaaaaaaaaaaa.tds");
  save_profile(p, path);
  CHECK(load_profile(path) == p);
}

TEST_CASE("NC hand cases") {
  const Model& m = tiny_model();
  CoverageState s({.criterion = Criterion::nc}, m);
  CHECK(s.classes_covered_by(std::vector{rec({0, 0, 0, 0, 0})}).empty());
  // group 0 scaled: (0, 0.75, 1) -> only the unit at 1 passes the strict threshold
  // group 1 scaled: (0, 1)
  CHECK(s.classes_covered_by(std::vector{rec({0, 0.75f, 1, 2, 4})}) == std::vector<std::size_t>{2, 4});
  CoverageState raw({.criterion = Criterion::nc, .nc_threshold = 0.75, .nc_scaled = false}, m);
  CHECK(raw.classes_covered_by(std::vector{rec({0, 0.75f, 1, 2, 4})}) == std::vector<std::size_t>{2, 3, 4});
}

TEST_CASE("KMN section formula") {
  const Model& m = tiny_model();
  CoverageState s({.criterion = Criterion::kmn}, m, unit_profile());
  const std::size_t k = 10000;
  auto sections = [&](float a) { return s.classes_covered_by(std::vector{rec({a, -1, 2, -1, -1})}); };
  CHECK(sections(0.5f) == std::vector<std::size_t>{5000});
  CHECK(sections(0.0f) == std::vector<std::size_t>{0});
  CHECK(sections(1.0f) == std::vector<std::size_t>{k - 1});
  CHECK(sections(-0.0001f).empty());
  CHECK(sections(1.0001f).empty());

  // brute-force scan of every section boundary on a coarse k
  CoverageState s7({.criterion = Criterion::kmn, .kmn_sections = 7}, m, NeuronProfile{{-2, 0, 0, 0, 0}, {5, 1, 1, 1, 1}});
  for (std::size_t j = 0; j < 7; ++j) {
    const float at = -2.0f + 7.0f * static_cast<float>(j) / 7.0f;
    const auto got = s7.classes_covered_by(std::vector{rec({at, -1, -1, -1, -1})});
    REQUIRE(got.size() == 1);
    const double exact = (static_cast<double>(at) + 2.0) / 7.0 * 7.0;
    CHECK(got[0] == std::min<std::size_t>(static_cast<std::size_t>(std::floor(exact)), 6));
  }

  CoverageState flat({.criterion = Criterion::kmn}, m, NeuronProfile{{0.5f, 0, 0, 0, 0}, {0.5f, 1, 1, 1, 1}});
  CHECK(flat.classes_covered_by(std::vector{rec({0.5f, -1, -1, -1, -1})}) == std::vector<std::size_t>{0});
  CHECK(flat.classes_covered_by(std::vector{rec({0.6f, -1, -1, -1, -1})}).empty());
}

TEST_CASE("NBC and SNAC are strict") {
  const Model& m = tiny_model();
  CoverageState nbc({.criterion = Criterion::nbc}, m, unit_profile());
  CHECK(nbc.classes_covered_by(std::vector{rec({1, 0, 0.5f, 0, 1})}).empty());
  CHECK(nbc.classes_covered_by(std::vector{rec({1.01f, -0.01f, 0.5f, 0, 1})}) == std::vector<std::size_t>{1, 2});
  CoverageState snac({.criterion = Criterion::snac}, m, unit_profile());
  CHECK(snac.classes_covered_by(std::vector{rec({1, 0, 0.5f, 0, 1})}).empty());
  CHECK(snac.classes_covered_by(std::vector{rec({1.01f, -0.01f, 0.5f, 0, 2})}) == std::vector<std::size_t>{0, 4});
}

TEST_CASE("TFC novelty is sequential and order sensitive") {
  const Model& m = tiny_model();
  CoverageState s({.criterion = Criterion::tfc, .tfc_threshold = 900.0}, m);
  const auto v = rec({0, 0, 0, 0, 0}, {0, 0, 0});
  CHECK(s.classes_covered_by(std::vector{v, v}) == std::vector<std::size_t>{0});
  CHECK(s.coverage_increase(std::vector{v, v}) == 1.0);

  // |w - v|^2 = 20^2 + 20^2 = 800 <= 900; |x - v|^2 = 31^2 = 961 > 900; |x - w|^2 = 11^2 + 20^2 = 521
  const auto w = rec({0, 0, 0, 0, 0}, {20, 20, 0});
  const auto x = rec({0, 0, 0, 0, 0}, {31, 0, 0});
  CHECK(s.classes_covered_by(std::vector{v, w, x}) == std::vector<std::size_t>{0, 2});
  CHECK(s.classes_covered_by(std::vector{w, v, x}) == std::vector<std::size_t>{0});

  s.commit(std::vector{v});
  s.commit(std::vector{w});
  CHECK(s.value() == 1.0);
  CHECK(s.tfc_vectors() == std::vector<float>{0, 0, 0});

  // exactly at the threshold is not novel: 30^2 = 900
  CHECK(s.coverage_increase(std::vector{rec({0, 0, 0, 0, 0}, {30, 0, 0})}) == 0.0);
}

TEST_CASE("coverage_increase equals from-scratch recomputation") {
  const Fixture& fx = micro();
  const NeuronProfile profile = profile_training_set(fx.model, fx.train.samples);
  for (const auto& cfg : all_configs()) {
    CAPTURE(criterion_name(cfg.criterion));
    CAPTURE(cfg.kmn_sections);
    std::mt19937_64 rng(100 + static_cast<int>(cfg.criterion));
    for (int trial = 0; trial < 20; ++trial) {
      const Batch t = random_batch(fx, 1 + uniform_index(rng, 40), rng);
      const Batch b = random_batch(fx, uniform_index(rng, 20), rng);
      const auto rt = forward_batch(fx.model, t), rb = forward_batch(fx.model, b);
      CoverageState s(cfg, fx.model, profile);
      s.commit(rt);
      auto all = rt;
      all.insert(all.end(), rb.begin(), rb.end());
      const double before = oracle::recompute_coverage(rt, cfg, fx.model, &profile);
      const double after = oracle::recompute_coverage(all, cfg, fx.model, &profile);
      CHECK(s.value() == before);
      CHECK(s.coverage_increase(rb) == after - before);
      s.commit(rb);
      CHECK(s.value() == after);
      if (cfg.criterion != Criterion::tfc) {
        CHECK(s.value() >= 0.0);
        CHECK(s.value() <= 1.0);
      }
    }
  }
}

TEST_CASE("queries are pure, commits are monotone and idempotent") {
  const Fixture& fx = micro();
  const NeuronProfile profile = profile_training_set(fx.model, fx.train.samples);
  std::mt19937_64 rng(42);
  for (const auto& cfg : all_configs()) {
    CoverageState s(cfg, fx.model, profile);
    s.commit(forward_batch(fx.model, fx.test.samples));
    double last = s.value();
    for (int i = 0; i < 10; ++i) {
      const auto rb = forward_batch(fx.model, random_batch(fx, 8, rng));
      const auto vectors = s.tfc_vectors();
      const std::size_t covered = s.covered_count();
      const double q1 = s.coverage_increase(rb);
      CHECK(s.coverage_increase(rb) == q1);
      CHECK(s.tfc_vectors() == vectors);
      CHECK(s.covered_count() == covered);
      CHECK(q1 >= 0.0);
      s.commit(rb);
      CHECK(s.value() >= last);
      CHECK(s.value() - last == doctest::Approx(q1));
      CHECK(s.coverage_increase(rb) == 0.0);
      last = s.value();
    }
    CHECK(s.coverage_increase({}) == 0.0);
  }
}

TEST_CASE("ratio commits commute") {
  const Fixture& fx = micro();
  const NeuronProfile profile = profile_training_set(fx.model, fx.train.samples);
  std::mt19937_64 rng(5);
  for (const auto& cfg : all_configs()) {
    if (cfg.criterion == Criterion::tfc) continue;
    const auto b1 = forward_batch(fx.model, random_batch(fx, 10, rng));
    const auto b2 = forward_batch(fx.model, random_batch(fx, 10, rng));
    CoverageState a(cfg, fx.model, profile), b(cfg, fx.model, profile);
    a.commit(b1);
    a.commit(b2);
    b.commit(b2);
    b.commit(b1);
    CHECK(a.value() == b.value());
    CHECK(a.covered_count() == b.covered_count());
  }
}

TEST_CASE("report document") {
  CoverageState s({.criterion = Criterion::kmn, .kmn_sections = 10}, tiny_model(), unit_profile());
  s.commit(std::vector{rec({0.5f, 0.5f, 0.5f, 0.5f, 0.5f})});
  const auto j = s.report();
  CHECK(j["criterion"] == "kmn");
  CHECK(j["covered"] == 5);
  CHECK(j["total_classes"] == 50);
  CHECK(j["value"] == 0.1);
  CHECK(j["hyperparameters"]["k"] == 10);
}
