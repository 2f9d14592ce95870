#pragma once

// Binary containers exchanged with the exporter and written by campaigns.
//
// .nnwc (weights):  "NNWC0001" | u32 LE header length | JSON header | float32 LE blobs
// .tds  (dataset):  "TDS00001" | u32 LE header length | JSON header | float32 LE samples | u8 labels
// MNIST IDX image (0x00000803) and label (0x00000801) files are read as well;
// pixels are divided by 255.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nnfuzz/model.hpp"
#include "nnfuzz/tensor.hpp"

namespace nnfuzz {

inline constexpr char kModelMagic[9] = "NNWC0001";
inline constexpr char kDatasetMagic[9] = "TDS00001";

struct Dataset {
  Shape sample_shape;
  std::vector<Tensor> samples;
  std::vector<std::uint8_t> labels;  // empty when the container carries no labels

  std::size_t size() const noexcept { return samples.size(); }
  bool has_labels() const noexcept { return !labels.empty(); }
};

std::vector<std::uint8_t> encode_model(const Model& model);
Model decode_model(const std::vector<std::uint8_t>& bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

/// Reads a .tds container or an IDX image file (labels attached when
/// `idx_labels` names a matching IDX label file).
Dataset load_dataset(const std::filesystem::path& path,
                     const std::optional<std::filesystem::path>& idx_labels = std::nullopt);

Dataset decode_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>* labels);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace nnfuzz
