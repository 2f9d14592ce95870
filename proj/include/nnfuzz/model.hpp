#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nnfuzz/errors.hpp"
#include "nnfuzz/tensor.hpp"

namespace nnfuzz {

enum class LayerKind { conv2d, dense, relu, maxpool2d, flatten, softmax };

std::string_view layer_kind_name(LayerKind kind) noexcept;
std::optional<LayerKind> parse_layer_kind(std::string_view name) noexcept;

struct Conv2dParams {
  Tensor kernel;  // [out_channels, in_channels, kernel_h, kernel_w]
  Tensor bias;    // [out_channels]
  std::size_t stride = 1;
  std::size_t padding = 0;  // symmetric zero padding; 0 is "valid"
};

struct DenseParams {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

struct PoolParams {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct Layer {
  LayerKind kind = LayerKind::relu;
  std::variant<std::monostate, Conv2dParams, DenseParams, PoolParams> params;

  static Layer conv2d(Tensor kernel, Tensor bias, std::size_t stride = 1, std::size_t padding = 0);
  static Layer dense(Tensor weight, Tensor bias);
  static Layer maxpool2d(std::size_t window, std::size_t stride);
  static Layer relu() { return {LayerKind::relu, {}}; }
  static Layer flatten() { return {LayerKind::flatten, {}}; }
  static Layer softmax() { return {LayerKind::softmax, {}}; }

  bool neuron_bearing() const noexcept { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  std::size_t parameter_count() const noexcept;
};

/// Neurons of one conv2d/dense layer inside the flat neuron vector.
/// Neuron id = (layer_index, unit) with flat index offset + unit.
struct NeuronGroup {
  std::size_t layer_index = 0;
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Immutable validated network. Construction checks every layer's shape against
/// the output of the previous one and throws Error{shape_mismatch} otherwise.
class Model {
 public:
  Model(std::string name, Shape input_shape, std::size_t label_count, std::vector<Layer> layers);

  const std::string& name() const noexcept { return name_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t label_count() const noexcept { return label_count_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  /// Output shape of layer i (input of layer i + 1).
  const Shape& output_shape(std::size_t i) const { return output_shapes_.at(i); }
  const std::vector<NeuronGroup>& neuron_groups() const noexcept { return groups_; }
  std::size_t neuron_count() const noexcept { return neuron_count_; }
  std::size_t parameter_count() const noexcept;
  /// Layer whose input is recorded as the penultimate vector (the last conv/dense layer).
  std::size_t classifier_layer() const noexcept { return classifier_layer_; }
  std::size_t penultimate_size() const noexcept { return penultimate_size_; }

 private:
  std::string name_;
  Shape input_shape_;
  std::size_t label_count_;
  std::vector<Layer> layers_;
  std::vector<Shape> output_shapes_;
  std::vector<NeuronGroup> groups_;
  std::size_t neuron_count_ = 0;
  std::size_t classifier_layer_ = 0;
  std::size_t penultimate_size_ = 0;
};

/// Everything the coverage criteria read from one forward pass.
///
/// `neurons` holds one value per neuron in Model::neuron_groups() order. A
/// dense unit's value is its output after the following relu, if any. A conv
/// channel's value is the spatial mean of its (post-relu) feature map.
struct ActivationRecord {
  std::vector<float> neurons;
  std::vector<float> penultimate;
  std::vector<float> logits;
  std::size_t predicted_label = 0;

  std::span<const float> group(const NeuronGroup& g) const {
    return std::span<const float>(neurons).subspan(g.offset, g.count);
  }
  friend bool operator==(const ActivationRecord&, const ActivationRecord&) = default;
};

/// Raised by forward_batch; carries the position of the offending element.
class BatchError : public Error {
 public:
  BatchError(ErrorCode code, std::size_t index, const std::string& what)
      : Error(code, "batch element " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Pure and deterministic for a fixed kernel backend.
ActivationRecord forward(const Model& model, const Tensor& input);

/// Elementwise forward(); a bad element fails the call with its index in the message.
std::vector<ActivationRecord> forward_batch(const Model& model, std::span<const Tensor> batch);

}  // namespace nnfuzz
