#pragma once

// Deterministic desk-scale assets: seeded untrained models and procedural
// image sets, so tests and campaigns run without downloads.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnfuzz/container_io.hpp"
#include "nnfuzz/model.hpp"

namespace nnfuzz {

struct SyntheticSpec {
  std::string generator = "blobs-stripes";
  std::size_t train_count = 100;
  std::size_t test_count = 100;
  std::uint64_t seed = 7;
  std::optional<Shape> shape;  // defaults to the architecture's input shape
};

struct FixtureSpec {
  std::string architecture = "lenet1-shape";
  std::uint64_t weight_seed = 1;
  SyntheticSpec dataset;
  /// Squared TFC threshold the penultimate layer is calibrated against.
  double tfc_threshold = 30.0 * 30.0;
  /// Target median nearest-neighbour squared distance among train
  /// penultimate vectors, as a multiple of tfc_threshold.
  double tfc_ratio = 1.0;
  std::size_t max_attempts = 32;
};

std::vector<std::string> fixture_architectures();
std::vector<std::string> synthetic_generators();

FixtureSpec parse_fixture_spec(const nlohmann::json& doc);
nlohmann::json fixture_spec_to_json(const FixtureSpec& spec);

Shape default_input_shape(const std::string& architecture);
std::size_t default_label_count(const std::string& architecture);

/// Uncalibrated model with weights and biases drawn from uniform(-0.5, 0.5).
Model make_fixture_model(const std::string& architecture, std::uint64_t weight_seed);

/// Procedural labelled images in [0, 1]; label of sample i is i % classes.
Dataset make_synthetic_dataset(const std::string& generator, std::size_t count, const Shape& shape,
                               std::size_t classes, std::uint64_t seed);

/// Rescales every conv/dense layer so its pre-activations have unit spread
/// and per-unit offsets in (-0.5, 0.5) on `train`, then scales the layer
/// feeding the classifier so the median nearest-neighbour squared distance
/// of train penultimate vectors equals `target_nn_sq`.
Model calibrate_model(const Model& model, const Dataset& train, double target_nn_sq, std::uint64_t seed);

struct Fixture {
  FixtureSpec spec;
  Model model;
  Dataset train;
  Dataset test;
  nlohmann::json calibration;
};

/// Throws Error{invalid_config} for unknown ids or when no weight seed
/// within max_attempts meets the headroom checks.
Fixture build_fixture(const FixtureSpec& spec);

/// Writes model.nnwc, train.tds, test.tds, golden.json and manifest.json.
nlohmann::json generate_fixture(const FixtureSpec& spec, const std::filesystem::path& out_dir);

}  // namespace nnfuzz
