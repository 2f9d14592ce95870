#include "nnfuzz/model.hpp"

#include <algorithm>
#include <cmath>

#include "nnfuzz/kernels.hpp"

namespace nnfuzz {

std::string_view layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) noexcept {
  for (LayerKind k : {LayerKind::conv2d, LayerKind::dense, LayerKind::relu, LayerKind::maxpool2d,
                      LayerKind::flatten, LayerKind::softmax}) {
    if (layer_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

Layer Layer::conv2d(Tensor kernel, Tensor bias, std::size_t stride, std::size_t padding) {
  return {LayerKind::conv2d, Conv2dParams{std::move(kernel), std::move(bias), stride, padding}};
}

Layer Layer::dense(Tensor weight, Tensor bias) {
  return {LayerKind::dense, DenseParams{std::move(weight), std::move(bias)}};
}

Layer Layer::maxpool2d(std::size_t window, std::size_t stride) {
  return {LayerKind::maxpool2d, PoolParams{window, stride}};
}

std::size_t Layer::parameter_count() const noexcept {
  if (const auto* c = std::get_if<Conv2dParams>(&params)) return c->kernel.size() + c->bias.size();
  if (const auto* d = std::get_if<DenseParams>(&params)) return d->weight.size() + d->bias.size();
  return 0;
}

namespace {

[[noreturn]] void shape_error(std::size_t layer, const std::string& what) {
  throw Error(ErrorCode::shape_mismatch, "layer " + std::to_string(layer) + ": " + what);
}

Shape infer_output(std::size_t index, const Layer& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::conv2d: {
      const auto* p = std::get_if<Conv2dParams>(&layer.params);
      if (!p) shape_error(index, "conv2d without parameters");
      const Shape& k = p->kernel.shape();
      if (k.size() != 4) shape_error(index, "conv2d kernel must be rank 4, got " + shape_to_string(k));
      if (p->bias.shape() != Shape{k[0]}) shape_error(index, "conv2d bias length must equal out_channels");
      if (p->stride == 0) shape_error(index, "conv2d stride must be positive");
      if (in.size() != 3) shape_error(index, "conv2d input must be (C, H, W), got " + shape_to_string(in));
      if (in[0] != k[1]) shape_error(index, "conv2d in_channels " + std::to_string(k[1]) + " != input channels " +
                                                std::to_string(in[0]));
      const std::size_t h = in[1] + 2 * p->padding;
      const std::size_t w = in[2] + 2 * p->padding;
      if (k[2] == 0 || k[3] == 0 || k[2] > h || k[3] > w) shape_error(index, "conv2d kernel larger than input");
      return {k[0], (h - k[2]) / p->stride + 1, (w - k[3]) / p->stride + 1};
    }
    case LayerKind::dense: {
      const auto* p = std::get_if<DenseParams>(&layer.params);
      if (!p) shape_error(index, "dense without parameters");
      const Shape& ws = p->weight.shape();
      if (ws.size() != 2) shape_error(index, "dense weight must be rank 2");
      if (p->bias.shape() != Shape{ws[0]}) shape_error(index, "dense bias length must equal out");
      if (in.size() != 1 || in[0] != ws[1]) {
        shape_error(index, "dense expects input [" + std::to_string(ws[1]) + "], got " + shape_to_string(in));
      }
      return {ws[0]};
    }
    case LayerKind::maxpool2d: {
      const auto* p = std::get_if<PoolParams>(&layer.params);
      if (!p || p->window == 0 || p->stride == 0) shape_error(index, "maxpool2d needs positive window and stride");
      if (in.size() != 3 || p->window > in[1] || p->window > in[2]) shape_error(index, "maxpool2d window exceeds input");
      return {in[0], (in[1] - p->window) / p->stride + 1, (in[2] - p->window) / p->stride + 1};
    }
    case LayerKind::flatten: return {element_count(in)};
    case LayerKind::relu:
    case LayerKind::softmax: return in;
  }
  throw Error(ErrorCode::unsupported_layer, "layer " + std::to_string(index));
}

bool followed_by_relu(const std::vector<Layer>& layers, std::size_t i) {
  return i + 1 < layers.size() && layers[i + 1].kind == LayerKind::relu;
}

}  // namespace

Model::Model(std::string name, Shape input_shape, std::size_t label_count, std::vector<Layer> layers)
    : name_(std::move(name)), input_shape_(std::move(input_shape)), label_count_(label_count), layers_(std::move(layers)) {
  if (layers_.empty()) throw Error(ErrorCode::empty_model, "model '" + name_ + "' has no layers");
  Shape cur = input_shape_;
  bool any_neurons = false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = infer_output(i, layers_[i], cur);
    output_shapes_.push_back(cur);
    if (layers_[i].neuron_bearing()) {
      const std::size_t units = cur[0];  // channels for conv2d, units for dense
      groups_.push_back({i, neuron_count_, units});
      neuron_count_ += units;
      classifier_layer_ = i;
      any_neurons = true;
    }
  }
  if (!any_neurons) throw Error(ErrorCode::empty_model, "model '" + name_ + "' has no conv2d or dense layer");
  const Shape& classifier_in = classifier_layer_ == 0 ? input_shape_ : output_shapes_[classifier_layer_ - 1];
  penultimate_size_ = element_count(classifier_in);
  if (label_count_ != 0 && element_count(output_shapes_.back()) != label_count_) {
    throw Error(ErrorCode::shape_mismatch, "model output has " + std::to_string(element_count(output_shapes_.back())) +
                                               " values but label_count is " + std::to_string(label_count_));
  }
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

namespace {

Tensor pad_chw(const Tensor& in, std::size_t pad) {
  if (pad == 0) return in;
  const std::size_t c = in.extent(0), h = in.extent(1), w = in.extent(2);
  Tensor out({c, h + 2 * pad, w + 2 * pad}, 0.0f);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(in.data().data() + (ch * h + y) * w, w, &out.at(ch, y + pad, pad));
  return out;
}

Tensor conv2d(const Conv2dParams& p, const Tensor& input, const Shape& out_shape) {
  const Tensor padded = pad_chw(input, p.padding);
  const std::size_t in_c = padded.extent(0);
  const std::size_t kh = p.kernel.extent(2), kw = p.kernel.extent(3);
  const std::size_t oc = out_shape[0], oh = out_shape[1], ow = out_shape[2];
  const std::size_t s = p.stride;
  const auto& k = kernels::table(kernels::active_backend());

  Tensor out(out_shape, 0.0f);
  for (std::size_t o = 0; o < oc; ++o) {
    float* plane = &out.at(o, 0, 0);
    std::fill_n(plane, oh * ow, p.bias[o]);
    for (std::size_t c = 0; c < in_c; ++c) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const float w = p.kernel[((o * in_c + c) * kh + ky) * kw + kx];
          for (std::size_t y = 0; y < oh; ++y) {
            float* row = plane + y * ow;
            const float* src = padded.data().data() + (c * padded.extent(1) + y * s + ky) * padded.extent(2) + kx;
            if (s == 1) {
              k.axpy(row, src, w, ow);
            } else {
              for (std::size_t x = 0; x < ow; ++x) row[x] = row[x] + w * src[x * s];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor dense(const DenseParams& p, const Tensor& input) {
  const std::size_t out_n = p.weight.extent(0), in_n = p.weight.extent(1);
  const auto& k = kernels::table(kernels::active_backend());
  Tensor out({out_n}, 0.0f);
  for (std::size_t o = 0; o < out_n; ++o) {
    out[o] = p.bias[o] + k.dot(&p.weight.values()[o * in_n], input.data().data(), in_n);
  }
  return out;
}

Tensor maxpool(const PoolParams& p, const Tensor& input, const Shape& out_shape) {
  Tensor out(out_shape, 0.0f);
  for (std::size_t c = 0; c < out_shape[0]; ++c)
    for (std::size_t y = 0; y < out_shape[1]; ++y)
      for (std::size_t x = 0; x < out_shape[2]; ++x) {
        float m = input.at(c, y * p.stride, x * p.stride);
        for (std::size_t dy = 0; dy < p.window; ++dy)
          for (std::size_t dx = 0; dx < p.window; ++dx) m = std::max(m, input.at(c, y * p.stride + dy, x * p.stride + dx));
        out.at(c, y, x) = m;
      }
  return out;
}

void softmax_inplace(Tensor& t) {
  if (t.size() == 0) return;
  const float m = *std::max_element(t.data().begin(), t.data().end());
  float total = 0.0f;
  for (float& v : t.data()) total += (v = std::exp(v - m));
  for (float& v : t.data()) v /= total;
}

void record_group(const NeuronGroup& g, const Tensor& t, std::vector<float>& neurons) {
  if (t.rank() == 3) {
    const std::size_t plane = t.extent(1) * t.extent(2);
    const auto& k = kernels::table(kernels::active_backend());
    for (std::size_t c = 0; c < g.count; ++c) {
      neurons[g.offset + c] = k.sum(t.data().data() + c * plane, plane) / static_cast<float>(plane);
    }
  } else {
    std::copy_n(t.data().begin(), g.count, neurons.begin() + static_cast<std::ptrdiff_t>(g.offset));
  }
}

}  // namespace

ActivationRecord forward(const Model& model, const Tensor& input) {
  if (input.shape() != model.input_shape()) {
    throw Error(ErrorCode::shape_mismatch, "input shape " + shape_to_string(input.shape()) + " != model input shape " +
                                               shape_to_string(model.input_shape()));
  }
  const auto& layers = model.layers();
  const auto& groups = model.neuron_groups();
  ActivationRecord rec;
  rec.neurons.assign(model.neuron_count(), 0.0f);

  Tensor cur = input;
  std::size_t next_group = 0;
  const NeuronGroup* pending = nullptr;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& layer = layers[i];
    if (i == model.classifier_layer()) rec.penultimate = cur.values();
    switch (layer.kind) {
      case LayerKind::conv2d: cur = conv2d(std::get<Conv2dParams>(layer.params), cur, model.output_shape(i)); break;
      case LayerKind::dense: cur = dense(std::get<DenseParams>(layer.params), cur); break;
      case LayerKind::relu: kernels::relu(cur.data()); break;
      case LayerKind::maxpool2d: cur = maxpool(std::get<PoolParams>(layer.params), cur, model.output_shape(i)); break;
      case LayerKind::flatten: cur = cur.reshaped({cur.size()}); break;
      case LayerKind::softmax: softmax_inplace(cur); break;
    }
    if (layer.neuron_bearing()) {
      pending = &groups[next_group++];
      if (i == model.classifier_layer()) rec.logits = cur.values();
      if (followed_by_relu(layers, i)) continue;
    }
    if (pending) {
      record_group(*pending, cur, rec.neurons);
      pending = nullptr;
    }
  }
  if (rec.logits.empty()) rec.logits = cur.values();
  rec.predicted_label = static_cast<std::size_t>(
      std::distance(rec.logits.begin(), std::max_element(rec.logits.begin(), rec.logits.end())));
  return rec;
}

std::vector<ActivationRecord> forward_batch(const Model& model, std::span<const Tensor> batch) {
  std::vector<ActivationRecord> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].shape() != model.input_shape()) {
      throw BatchError(ErrorCode::shape_mismatch, i,
                       "shape " + shape_to_string(batch[i].shape()) + " != " + shape_to_string(model.input_shape()));
    }
    out.push_back(forward(model, batch[i]));
  }
  return out;
}

}  // namespace nnfuzz
