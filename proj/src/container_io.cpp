#include "nnfuzz/container_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "nnfuzz/errors.hpp"

namespace nnfuzz {
namespace {

using json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

void put_u32le(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

std::uint32_t get_u32be(const std::uint8_t* p) {
  return std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[0]} << 24;
}

void put_floats(Bytes& out, std::span<const float> values) {
  for (float f : values) put_u32le(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<float> get_floats(const std::uint8_t* p, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(get_u32le(p + 4 * i));
  return out;
}

struct Framed {
  json header;
  std::size_t payload_offset = 0;
};

Framed read_frame(const Bytes& bytes, const char (&magic)[9]) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), magic, 8) != 0) {
    throw Error(ErrorCode::bad_magic, std::string("expected magic ") + magic);
  }
  const std::uint32_t header_len = get_u32le(bytes.data() + 8);
  if (bytes.size() < 12 + std::size_t{header_len}) throw Error(ErrorCode::malformed_header, "header runs past end of file");
  Framed f;
  try {
    f.header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_header, e.what());
  }
  if (!f.header.is_object()) throw Error(ErrorCode::malformed_header, "header is not an object");
  f.payload_offset = 12 + header_len;
  return f;
}

Bytes write_frame(const json& header, const char (&magic)[9]) {
  const std::string text = header.dump();
  Bytes out(magic, magic + 8);
  put_u32le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

Shape parse_shape(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::malformed_header, std::string(what) + " must be an array");
  Shape s;
  for (const auto& e : j) {
    if (!e.is_number_unsigned()) throw Error(ErrorCode::malformed_header, std::string(what) + " must hold non-negative integers");
    s.push_back(e.get<std::size_t>());
  }
  return s;
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::malformed_header, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_header, std::string("field '") + key + "': " + e.what());
  }
}

json blob_entry(const char* name, const Tensor& t, Bytes& blobs) {
  json e = {{"name", name}, {"shape", t.shape()}, {"offset", blobs.size()}, {"length", 4 * t.size()}};
  put_floats(blobs, t.data());
  return e;
}

Tensor read_blob(const json& entry, const Bytes& bytes, std::size_t blob_base, std::size_t layer) {
  const Shape shape = parse_shape(required<json>(entry, "shape"), "param shape");
  const auto offset = required<std::size_t>(entry, "offset");
  const auto length = required<std::size_t>(entry, "length");
  if (length != 4 * element_count(shape)) {
    throw Error(ErrorCode::shape_mismatch, "layer " + std::to_string(layer) + ": blob length " + std::to_string(length) +
                                               " does not hold shape " + shape_to_string(shape));
  }
  if (blob_base + offset + length > bytes.size() || blob_base + offset < blob_base) {
    throw Error(ErrorCode::truncated_blob, "layer " + std::to_string(layer) + ": blob at offset " +
                                               std::to_string(offset) + " runs past end of file");
  }
  return Tensor(shape, get_floats(bytes.data() + blob_base + offset, element_count(shape)));
}

const json& find_param(const json& params, const char* name, std::size_t layer) {
  for (const auto& p : params) {
    if (p.value("name", "") == name) return p;
  }
  throw Error(ErrorCode::malformed_header, "layer " + std::to_string(layer) + ": missing parameter '" + name + "'");
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file(path, Bytes(text.begin(), text.end()));
}

Bytes encode_model(const Model& model) {
  Bytes blobs;
  json layers = json::array();
  for (const Layer& l : model.layers()) {
    json e = {{"kind", layer_kind_name(l.kind)}};
    if (const auto* c = std::get_if<Conv2dParams>(&l.params)) {
      e["stride"] = c->stride;
      e["padding"] = c->padding;
      e["params"] = json::array({blob_entry("kernel", c->kernel, blobs), blob_entry("bias", c->bias, blobs)});
    } else if (const auto* d = std::get_if<DenseParams>(&l.params)) {
      e["params"] = json::array({blob_entry("weight", d->weight, blobs), blob_entry("bias", d->bias, blobs)});
    } else if (const auto* p = std::get_if<PoolParams>(&l.params)) {
      e["window"] = p->window;
      e["stride"] = p->stride;
    }
    layers.push_back(std::move(e));
  }
  const json header = {{"name", model.name()},
                       {"input_shape", model.input_shape()},
                       {"label_count", model.label_count()},
                       {"layers", layers}};
  Bytes out = write_frame(header, kModelMagic);
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

Model decode_model(const Bytes& bytes) {
  const Framed f = read_frame(bytes, kModelMagic);
  const json& h = f.header;
  const auto name = required<std::string>(h, "name");
  const Shape input_shape = parse_shape(required<json>(h, "input_shape"), "input_shape");
  const auto label_count = required<std::size_t>(h, "label_count");
  const json layers_json = required<json>(h, "layers");
  if (!layers_json.is_array()) throw Error(ErrorCode::malformed_header, "layers must be an array");
  if (layers_json.empty()) throw Error(ErrorCode::empty_model, "container '" + name + "' has no layers");

  std::vector<Layer> layers;
  for (std::size_t i = 0; i < layers_json.size(); ++i) {
    const json& lj = layers_json[i];
    const auto kind_name = required<std::string>(lj, "kind");
    const auto kind = parse_layer_kind(kind_name);
    if (!kind) throw Error(ErrorCode::unsupported_layer, "layer " + std::to_string(i) + ": '" + kind_name + "'");
    switch (*kind) {
      case LayerKind::conv2d: {
        const json params = required<json>(lj, "params");
        layers.push_back(Layer::conv2d(read_blob(find_param(params, "kernel", i), bytes, f.payload_offset, i),
                                       read_blob(find_param(params, "bias", i), bytes, f.payload_offset, i),
                                       lj.value("stride", std::size_t{1}), lj.value("padding", std::size_t{0})));
        break;
      }
      case LayerKind::dense: {
        const json params = required<json>(lj, "params");
        layers.push_back(Layer::dense(read_blob(find_param(params, "weight", i), bytes, f.payload_offset, i),
                                      read_blob(find_param(params, "bias", i), bytes, f.payload_offset, i)));
        break;
      }
      case LayerKind::maxpool2d:
        layers.push_back(Layer::maxpool2d(required<std::size_t>(lj, "window"), required<std::size_t>(lj, "stride")));
        break;
      case LayerKind::relu: layers.push_back(Layer::relu()); break;
      case LayerKind::flatten: layers.push_back(Layer::flatten()); break;
      case LayerKind::softmax: layers.push_back(Layer::softmax()); break;
    }
  }
  return Model(name, input_shape, label_count, std::move(layers));
}

void save_model(const Model& model, const std::filesystem::path& path) { write_file(path, encode_model(model)); }

Model load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

Bytes encode_dataset(const Dataset& ds) {
  const json header = {{"count", ds.size()}, {"shape", ds.sample_shape}, {"has_labels", ds.has_labels()}};
  Bytes out = write_frame(header, kDatasetMagic);
  out.reserve(out.size() + ds.size() * (4 * element_count(ds.sample_shape) + 1));
  for (const Tensor& t : ds.samples) {
    if (t.shape() != ds.sample_shape) throw Error(ErrorCode::shape_mismatch, "dataset sample shape differs from header");
    put_floats(out, t.data());
  }
  if (ds.has_labels()) {
    if (ds.labels.size() != ds.size()) throw Error(ErrorCode::shape_mismatch, "label count differs from sample count");
    out.insert(out.end(), ds.labels.begin(), ds.labels.end());
  }
  return out;
}

Dataset decode_dataset(const Bytes& bytes) {
  const Framed f = read_frame(bytes, kDatasetMagic);
  Dataset ds;
  ds.sample_shape = parse_shape(required<json>(f.header, "shape"), "shape");
  const auto count = required<std::size_t>(f.header, "count");
  const bool has_labels = required<bool>(f.header, "has_labels");
  const std::size_t per = element_count(ds.sample_shape);
  const std::size_t need = f.payload_offset + count * per * 4 + (has_labels ? count : 0);
  if (bytes.size() < need) throw Error(ErrorCode::truncated_blob, "dataset payload shorter than header promises");
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ds.samples.emplace_back(ds.sample_shape, get_floats(bytes.data() + f.payload_offset + i * per * 4, per));
  }
  if (has_labels) {
    const auto* lp = bytes.data() + f.payload_offset + count * per * 4;
    ds.labels.assign(lp, lp + count);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) { write_file(path, encode_dataset(ds)); }

Dataset decode_idx(const Bytes& images, const Bytes* labels) {
  if (images.size() < 16 || get_u32be(images.data()) != 0x00000803) {
    throw Error(ErrorCode::bad_magic, "expected IDX image magic 0x00000803");
  }
  const std::size_t count = get_u32be(images.data() + 4);
  const std::size_t rows = get_u32be(images.data() + 8);
  const std::size_t cols = get_u32be(images.data() + 12);
  if (images.size() < 16 + count * rows * cols) throw Error(ErrorCode::truncated_blob, "IDX image payload truncated");
  Dataset ds;
  ds.sample_shape = {1, rows, cols};
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> px(rows * cols);
    const auto* p = images.data() + 16 + i * rows * cols;
    for (std::size_t j = 0; j < px.size(); ++j) px[j] = static_cast<float>(p[j]) / 255.0f;
    ds.samples.emplace_back(ds.sample_shape, std::move(px));
  }
  if (labels) {
    if (labels->size() < 8 || get_u32be(labels->data()) != 0x00000801) {
      throw Error(ErrorCode::bad_magic, "expected IDX label magic 0x00000801");
    }
    const std::size_t n = get_u32be(labels->data() + 4);
    if (n != count) throw Error(ErrorCode::shape_mismatch, "IDX label count differs from image count");
    if (labels->size() < 8 + n) throw Error(ErrorCode::truncated_blob, "IDX label payload truncated");
    ds.labels.assign(labels->begin() + 8, labels->begin() + 8 + static_cast<std::ptrdiff_t>(n));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const std::optional<std::filesystem::path>& idx_labels) {
  const Bytes bytes = read_file(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kDatasetMagic, 8) == 0) return decode_dataset(bytes);
  if (bytes.size() >= 4 && get_u32be(bytes.data()) == 0x00000803) {
    if (idx_labels) {
      const Bytes lb = read_file(*idx_labels);
      return decode_idx(bytes, &lb);
    }
    return decode_idx(bytes, nullptr);
  }
  throw Error(ErrorCode::bad_magic, path.string() + " is neither a TDS container nor an IDX image file");
}

}  // namespace nnfuzz
