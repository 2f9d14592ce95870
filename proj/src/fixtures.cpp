#include "nnfuzz/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "nnfuzz/coverage.hpp"
#include "nnfuzz/digest.hpp"
#include "nnfuzz/errors.hpp"

namespace nnfuzz {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_config, what); }

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Tensor uniform_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  for (float& v : t.data()) v = u(rng);
  return t;
}

Layer conv(std::size_t out, std::size_t in, std::size_t k, std::size_t pad, std::mt19937_64& rng) {
  Tensor w = uniform_tensor({out, in, k, k}, rng);
  return Layer::conv2d(std::move(w), uniform_tensor({out}, rng), 1, pad);
}

Layer dense(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  Tensor w = uniform_tensor({out, in}, rng);
  return Layer::dense(std::move(w), uniform_tensor({out}, rng));
}

struct Pattern {
  float cx, cy, sigma, angle, period, phase;
};

float pattern_value(std::size_t cls, const Pattern& p, float x, float y) {
  if (cls % 10 < 5) {
    const float dx = x - p.cx, dy = y - p.cy;
    return std::exp(-(dx * dx + dy * dy) / (2.0f * p.sigma * p.sigma));
  }
  const float t = x * std::cos(p.angle) + y * std::sin(p.angle);
  return 0.5f + 0.5f * std::sin(2.0f * std::numbers::pi_v<float> * t / p.period + p.phase);
}

Pattern draw_pattern(std::size_t cls, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> jitter(-0.08f, 0.08f);
  std::uniform_real_distribution<float> phase(0.0f, 2.0f * std::numbers::pi_v<float>);
  static constexpr float kCentres[5][2] = {{0.3f, 0.3f}, {0.7f, 0.3f}, {0.5f, 0.5f}, {0.3f, 0.7f}, {0.7f, 0.7f}};
  const auto fw = static_cast<float>(w), fh = static_cast<float>(h);
  Pattern p{};
  const std::size_t c = cls % 10;
  if (c < 5) {
    p.cx = (kCentres[c][0] + jitter(rng)) * fw;
    p.cy = (kCentres[c][1] + jitter(rng)) * fh;
    p.sigma = std::max(0.5f, 0.15f * std::min(fw, fh) * (1.0f + jitter(rng)));
  } else {
    p.angle = static_cast<float>(c - 5) * std::numbers::pi_v<float> / 5.0f + jitter(rng);
    p.period = std::max(2.0f, std::min(fw, fh) * (0.25f + 0.05f * static_cast<float>(c - 5)));
    p.phase = phase(rng);
  }
  return p;
}

}  // namespace

std::vector<std::string> fixture_architectures() { return {"lenet1-shape", "micro-cnn", "dense-only"}; }
std::vector<std::string> synthetic_generators() { return {"blobs-stripes"}; }

Shape default_input_shape(const std::string& arch) {
  if (arch == "lenet1-shape") return {1, 28, 28};
  if (arch == "micro-cnn") return {1, 12, 12};
  if (arch == "dense-only") return {1, 2, 2};
  bad("unknown architecture '" + arch + "'");
}

std::size_t default_label_count(const std::string& arch) {
  if (arch == "dense-only") return 2;
  default_input_shape(arch);
  return 10;
}

Model make_fixture_model(const std::string& arch, std::uint64_t weight_seed) {
  std::mt19937_64 rng(weight_seed);
  std::vector<Layer> layers;
  if (arch == "lenet1-shape") {
    layers.push_back(conv(4, 1, 5, 2, rng));
    layers.push_back(Layer::relu());
    layers.push_back(Layer::maxpool2d(2, 2));
    layers.push_back(conv(12, 4, 5, 2, rng));
    layers.push_back(Layer::relu());
    layers.push_back(Layer::maxpool2d(2, 2));
    layers.push_back(Layer::flatten());
    layers.push_back(dense(10, 588, rng));
    layers.push_back(Layer::softmax());
  } else if (arch == "micro-cnn") {
    layers.push_back(conv(4, 1, 3, 0, rng));
    layers.push_back(Layer::relu());
    layers.push_back(Layer::maxpool2d(2, 2));
    layers.push_back(Layer::flatten());
    layers.push_back(dense(16, 100, rng));
    layers.push_back(Layer::relu());
    layers.push_back(dense(10, 16, rng));
    layers.push_back(Layer::softmax());
  } else if (arch == "dense-only") {
    layers.push_back(Layer::flatten());
    layers.push_back(dense(3, 4, rng));
    layers.push_back(Layer::relu());
    layers.push_back(dense(2, 3, rng));
  } else {
    bad("unknown architecture '" + arch + "'");
  }
  return Model(arch, default_input_shape(arch), default_label_count(arch), std::move(layers));
}

Dataset make_synthetic_dataset(const std::string& generator, std::size_t count, const Shape& shape,
                               std::size_t classes, std::uint64_t seed) {
  if (generator != "blobs-stripes") bad("unknown generator '" + generator + "'");
  if (shape.size() != 3 || element_count(shape) == 0) bad("synthetic shape must be [C,H,W]");
  if (classes == 0 || classes > 256) bad("synthetic class count must be in 1..256");
  const std::size_t ch = shape[0], h = shape[1], w = shape[2];
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.03f);
  std::uniform_real_distribution<float> tint(0.6f, 1.0f);
  Dataset ds;
  ds.sample_shape = shape;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % classes;
    const Pattern p = draw_pattern(cls, h, w, rng);
    Tensor img(shape);
    for (std::size_t c = 0; c < ch; ++c) {
      const float gain = tint(rng);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const float v = 0.15f + 0.7f * gain * pattern_value(cls, p, static_cast<float>(x), static_cast<float>(y));
          img.at(c, y, x) = std::clamp(v + noise(rng), 0.0f, 1.0f);
        }
      }
    }
    ds.samples.push_back(std::move(img));
    ds.labels.push_back(static_cast<std::uint8_t>(cls));
  }
  return ds;
}

namespace {

std::vector<Layer> prefix(const Model& m, std::size_t last) {
  return {m.layers().begin(), m.layers().begin() + static_cast<std::ptrdiff_t>(last) + 1};
}

void scale_layer(Layer& layer, float scale, std::span<const float> bias_shift) {
  auto rescale = [&](Tensor& w, Tensor& b) {
    for (float& v : w.data()) v *= scale;
    for (std::size_t u = 0; u < b.size(); ++u) b[u] = b[u] * scale + (bias_shift.empty() ? 0.0f : bias_shift[u]);
  };
  if (auto* c = std::get_if<Conv2dParams>(&layer.params)) rescale(c->kernel, c->bias);
  if (auto* d = std::get_if<DenseParams>(&layer.params)) rescale(d->weight, d->bias);
}

double median_nn_sq(const std::vector<std::vector<float>>& v) {
  std::vector<double> nn;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (i == j) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < v[i].size(); ++k) {
        const double e = static_cast<double>(v[i][k]) - v[j][k];
        d += e * e;
      }
      best = std::min(best, d);
    }
    nn.push_back(best);
  }
  std::sort(nn.begin(), nn.end());
  return nn.empty() ? 0.0 : nn[nn.size() / 2];
}

}  // namespace

Model calibrate_model(const Model& model, const Dataset& train, double target_nn_sq, std::uint64_t seed) {
  if (train.size() == 0) throw Error(ErrorCode::empty_dataset, "calibration needs training samples");
  std::vector<Layer> layers = model.layers();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> offset(-0.5f, 0.5f);

  std::optional<std::size_t> feeder;
  for (const auto& g : model.neuron_groups()) {
    if (g.layer_index < model.classifier_layer()) feeder = g.layer_index;
  }

  for (const auto& g : model.neuron_groups()) {
    const std::size_t i = g.layer_index;
    if (i == model.classifier_layer() && feeder && target_nn_sq > 0.0) {
      const Model probe(model.name(), model.input_shape(), 0, layers);
      std::vector<std::vector<float>> pen;
      for (const auto& r : forward_batch(probe, train.samples)) pen.push_back(r.penultimate);
      const double d = median_nn_sq(pen);
      if (d > 0.0) scale_layer(layers[*feeder], static_cast<float>(std::sqrt(target_nn_sq / d)), {});
    }
    const Model probe(model.name(), model.input_shape(), 0, prefix(Model(model.name(), model.input_shape(), 0, layers), i));
    const std::size_t units = g.count;
    std::vector<double> sum(units, 0.0), sq(units, 0.0);
    std::size_t per_unit = 0;
    for (const auto& r : forward_batch(probe, train.samples)) {
      const std::size_t chunk = r.logits.size() / units;
      per_unit += chunk;
      for (std::size_t u = 0; u < units; ++u) {
        for (std::size_t k = 0; k < chunk; ++k) {
          const double v = r.logits[u * chunk + k];
          sum[u] += v;
          sq[u] += v * v;
        }
      }
    }
    double pooled = 0.0;
    std::vector<float> shift(units);
    for (std::size_t u = 0; u < units; ++u) {
      const double mean = sum[u] / static_cast<double>(per_unit);
      pooled += std::max(0.0, sq[u] / static_cast<double>(per_unit) - mean * mean);
      shift[u] = static_cast<float>(-mean);
    }
    const double sd = std::sqrt(pooled / static_cast<double>(units));
    const float scale = sd > 1e-12 ? static_cast<float>(1.0 / sd) : 1.0f;
    for (float& s : shift) s = s * scale + offset(rng);
    scale_layer(layers[i], scale, shift);
  }
  return Model(model.name(), model.input_shape(), model.label_count(), std::move(layers));
}

FixtureSpec parse_fixture_spec(const json& doc) {
  if (!doc.is_object()) bad("fixture spec must be a JSON object");
  FixtureSpec s;
  try {
    s.architecture = doc.value("architecture", s.architecture);
    s.weight_seed = doc.value("weight_seed", s.weight_seed);
    s.tfc_threshold = doc.value("tfc_threshold", s.tfc_threshold);
    s.tfc_ratio = doc.value("tfc_ratio", s.tfc_ratio);
    s.max_attempts = doc.value("max_attempts", s.max_attempts);
    if (doc.contains("tfc_profile")) {
      const auto t = tfc_threshold_for_profile(doc.at("tfc_profile").get<std::string>());
      if (!t) bad("unknown tfc_profile");
      s.tfc_threshold = *t;
    }
    const json ds = doc.value("dataset", json::object());
    s.dataset.generator = ds.value("generator", s.dataset.generator);
    s.dataset.train_count = ds.value("train", s.dataset.train_count);
    s.dataset.test_count = ds.value("test", s.dataset.test_count);
    s.dataset.seed = ds.value("seed", s.dataset.seed);
    if (ds.contains("shape")) s.dataset.shape = ds.at("shape").get<Shape>();
  } catch (const json::exception& e) {
    bad(std::string("fixture spec: ") + e.what());
  }
  default_input_shape(s.architecture);
  if (s.max_attempts == 0) bad("max_attempts must be positive");
  return s;
}

json fixture_spec_to_json(const FixtureSpec& s) {
  json ds = {{"generator", s.dataset.generator},
             {"train", s.dataset.train_count},
             {"test", s.dataset.test_count},
             {"seed", s.dataset.seed}};
  if (s.dataset.shape) ds["shape"] = *s.dataset.shape;
  return {{"architecture", s.architecture}, {"weight_seed", s.weight_seed}, {"dataset", ds},
          {"tfc_threshold", s.tfc_threshold}, {"tfc_ratio", s.tfc_ratio}, {"max_attempts", s.max_attempts}};
}

Fixture build_fixture(const FixtureSpec& spec) {
  const Shape shape = spec.dataset.shape.value_or(default_input_shape(spec.architecture));
  const std::size_t classes = default_label_count(spec.architecture);
  Dataset train = make_synthetic_dataset(spec.dataset.generator, spec.dataset.train_count, shape, classes,
                                         mix(spec.dataset.seed, 1));
  Dataset test = make_synthetic_dataset(spec.dataset.generator, spec.dataset.test_count, shape, classes,
                                        mix(spec.dataset.seed, 2));
  if (train.size() == 0) throw Error(ErrorCode::empty_dataset, "fixture needs at least one training sample");

  for (std::size_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
    const std::uint64_t wseed = attempt == 0 ? spec.weight_seed : mix(spec.weight_seed, attempt);
    Model raw = make_fixture_model(spec.architecture, wseed);
    if (raw.input_shape() != shape) {
      bad("dataset shape " + shape_to_string(shape) + " does not fit " + spec.architecture);
    }
    Model model = calibrate_model(raw, train, spec.tfc_threshold * spec.tfc_ratio, mix(wseed, 3));
    const auto records = forward_batch(model, train.samples);

    CoverageState nc({.criterion = Criterion::nc}, model);
    nc.commit(records);
    CoverageState kmn({.criterion = Criterion::kmn}, model, profile_records(records));
    kmn.commit(records);
    if (nc.value() >= 1.0 || kmn.value() >= 0.2) continue;

    std::vector<std::vector<float>> pen;
    for (const auto& r : records) pen.push_back(r.penultimate);
    json calibration = {{"attempt", attempt},
                        {"weight_seed", wseed},
                        {"train_nc", nc.value()},
                        {"train_kmn", kmn.value()},
                        {"median_nn_sq", median_nn_sq(pen)},
                        {"tfc_threshold", spec.tfc_threshold}};
    return {spec, std::move(model), std::move(train), std::move(test), std::move(calibration)};
  }
  bad("no weight seed within " + std::to_string(spec.max_attempts) + " attempts leaves coverage headroom");
}

json generate_fixture(const FixtureSpec& spec, const fs::path& out_dir) {
  const Fixture fx = build_fixture(spec);
  fs::create_directories(out_dir);
  save_model(fx.model, out_dir / "model.nnwc");
  save_dataset(fx.train, out_dir / "train.tds");
  save_dataset(fx.test, out_dir / "test.tds");

  json golden = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(4, fx.test.size()); ++i) {
    const auto r = forward(fx.model, fx.test.samples[i]);
    golden.push_back({{"index", i},
                      {"neurons", r.neurons},
                      {"penultimate", r.penultimate},
                      {"logits", r.logits},
                      {"predicted_label", r.predicted_label}});
  }
  write_text_file(out_dir / "golden.json", golden.dump() + "\n");

  json files = json::object();
  for (const char* name : {"model.nnwc", "train.tds", "test.tds", "golden.json"}) {
    files[name] = {{"sha256", sha256_file(out_dir / name)}, {"bytes", fs::file_size(out_dir / name)}};
  }
  json manifest = {{"spec", fixture_spec_to_json(spec)},
                   {"parameter_count", fx.model.parameter_count()},
                   {"neuron_count", fx.model.neuron_count()},
                   {"input_shape", fx.model.input_shape()},
                   {"calibration", fx.calibration},
                   {"files", files}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace nnfuzz
