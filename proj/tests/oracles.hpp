#pragma once

// Independent reference implementations used only by tests. They share no
// code with the engine: plain loops, double accumulation, explicit bounds
// checks instead of padded copies.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "nnfuzz/coverage.hpp"
#include "nnfuzz/model.hpp"

namespace oracle {

using nnfuzz::ActivationRecord;
using nnfuzz::Layer;
using nnfuzz::LayerKind;
using nnfuzz::Model;
using nnfuzz::Tensor;

struct Volume {
  std::size_t c = 0, h = 1, w = 1;
  std::vector<double> v;
  double& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }
};

inline Volume naive_conv(const nnfuzz::Conv2dParams& p, const Volume& in) {
  const std::size_t oc = p.kernel.extent(0), ic = p.kernel.extent(1), kh = p.kernel.extent(2), kw = p.kernel.extent(3);
  const long pad = static_cast<long>(p.padding);
  const std::size_t oh = (in.h + 2 * p.padding - kh) / p.stride + 1;
  const std::size_t ow = (in.w + 2 * p.padding - kw) / p.stride + 1;
  Volume out{oc, oh, ow, std::vector<double>(oc * oh * ow)};
  for (std::size_t o = 0; o < oc; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = p.bias[o];
        for (std::size_t c = 0; c < ic; ++c)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long sy = static_cast<long>(y * p.stride + i) - pad;
              const long sx = static_cast<long>(x * p.stride + j) - pad;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(in.h) || sx >= static_cast<long>(in.w)) continue;
              acc += static_cast<double>(p.kernel[((o * ic + c) * kh + i) * kw + j]) *
                     in.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
        out.at(o, y, x) = acc;
      }
  return out;
}

inline Volume naive_dense(const nnfuzz::DenseParams& p, const Volume& in) {
  const std::size_t n_out = p.weight.extent(0), n_in = p.weight.extent(1);
  Volume out{n_out, 1, 1, std::vector<double>(n_out)};
  for (std::size_t o = 0; o < n_out; ++o) {
    double acc = p.bias[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += static_cast<double>(p.weight[o * n_in + i]) * in.v[i];
    out.v[o] = acc;
  }
  return out;
}

inline Volume naive_pool(const nnfuzz::PoolParams& p, const Volume& in) {
  const std::size_t oh = (in.h - p.window) / p.stride + 1, ow = (in.w - p.window) / p.stride + 1;
  Volume out{in.c, oh, ow, std::vector<double>(in.c * oh * ow)};
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < p.window; ++i)
          for (std::size_t j = 0; j < p.window; ++j) m = std::max(m, in.at(c, y * p.stride + i, x * p.stride + j));
        out.at(c, y, x) = m;
      }
  return out;
}

/// Layer-by-layer forward pass with the record semantics: conv neurons are
/// spatial means of the (post-relu when followed by relu) map, dense neurons
/// likewise take the following relu, logits are the last conv/dense output.
inline ActivationRecord naive_forward(const Model& m, const Tensor& input) {
  Volume cur;
  const auto& s = input.shape();
  cur.c = s.size() == 3 ? s[0] : input.size();
  cur.h = s.size() == 3 ? s[1] : 1;
  cur.w = s.size() == 3 ? s[2] : 1;
  cur.v.assign(input.values().begin(), input.values().end());

  ActivationRecord rec;
  std::size_t last_neural = 0;
  for (std::size_t i = 0; i < m.layers().size(); ++i)
    if (m.layers()[i].neuron_bearing()) last_neural = i;

  const auto& layers = m.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (i == last_neural) rec.penultimate.assign(cur.v.begin(), cur.v.end());
        cur = naive_conv(std::get<nnfuzz::Conv2dParams>(l.params), cur);
        break;
      }
      case LayerKind::dense: {
        if (i == last_neural) rec.penultimate.assign(cur.v.begin(), cur.v.end());
        cur = naive_dense(std::get<nnfuzz::DenseParams>(l.params), cur);
        break;
      }
      case LayerKind::relu:
        for (double& v : cur.v) v = std::max(v, 0.0);
        break;
      case LayerKind::maxpool2d: cur = naive_pool(std::get<nnfuzz::PoolParams>(l.params), cur); break;
      case LayerKind::flatten: cur = Volume{cur.v.size(), 1, 1, cur.v}; break;
      case LayerKind::softmax: {
        const double mx = *std::max_element(cur.v.begin(), cur.v.end());
        double z = 0.0;
        for (double& v : cur.v) z += (v = std::exp(v - mx));
        for (double& v : cur.v) v /= z;
        break;
      }
    }
    if (l.neuron_bearing()) {
      Volume after = cur;
      if (i + 1 < layers.size() && layers[i + 1].kind == LayerKind::relu)
        for (double& v : after.v) v = std::max(v, 0.0);
      const std::size_t plane = after.h * after.w;
      for (std::size_t c = 0; c < after.c; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < plane; ++k) acc += after.v[c * plane + k];
        rec.neurons.push_back(static_cast<float>(acc / static_cast<double>(plane)));
      }
      if (i == last_neural) {
        for (double v : cur.v) rec.logits.push_back(static_cast<float>(v));
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < rec.logits.size(); ++k)
    if (rec.logits[k] > rec.logits[best]) best = k;
  rec.predicted_label = best;
  return rec;
}

inline Tensor random_tensor(nnfuzz::Shape shape, std::mt19937_64& rng, float lo = -0.5f, float hi = 0.5f) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : t.data()) v = u(rng);
  return t;
}

/// Small random conv/dense stacks covering stride, padding, pooling and both
/// relu placements.
inline Model random_micro_model(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  const std::size_t in_c = pick(1, 3), h = pick(6, 13), w = pick(6, 13);
  std::vector<Layer> layers;
  std::size_t c = in_c, ch = h, cw = w;
  const std::size_t convs = pick(1, 2);
  for (std::size_t k = 0; k < convs; ++k) {
    const std::size_t oc = pick(1, 4), ks = pick(1, 3), stride = pick(1, 2), pad = pick(0, 1);
    if (ch + 2 * pad < ks || cw + 2 * pad < ks) break;
    layers.push_back(Layer::conv2d(random_tensor({oc, c, ks, ks}, rng), random_tensor({oc}, rng), stride, pad));
    ch = (ch + 2 * pad - ks) / stride + 1;
    cw = (cw + 2 * pad - ks) / stride + 1;
    c = oc;
    if (pick(0, 1)) layers.push_back(Layer::relu());
    if (ch >= 2 && cw >= 2 && pick(0, 1)) {
      layers.push_back(Layer::maxpool2d(2, 2));
      ch /= 2;
      cw /= 2;
    }
  }
  layers.push_back(Layer::flatten());
  std::size_t n = c * ch * cw;
  if (pick(0, 1)) {
    const std::size_t hidden = pick(2, 12);
    layers.push_back(Layer::dense(random_tensor({hidden, n}, rng), random_tensor({hidden}, rng)));
    layers.push_back(Layer::relu());
    n = hidden;
  }
  const std::size_t labels = pick(2, 10);
  layers.push_back(Layer::dense(random_tensor({labels, n}, rng), random_tensor({labels}, rng)));
  if (pick(0, 1)) layers.push_back(Layer::softmax());
  return Model("micro", {in_c, h, w}, labels, std::move(layers));
}

/// Store every record, then reduce: the coverage of the whole list computed
/// from scratch with no incremental state.
inline double recompute_coverage(const std::vector<ActivationRecord>& all, const nnfuzz::CoverageConfig& cfg,
                                 const Model& model, const nnfuzz::NeuronProfile* profile) {
  using nnfuzz::Criterion;
  const std::size_t n = model.neuron_count();
  if (cfg.criterion == Criterion::tfc) {
    std::vector<const std::vector<float>*> kept;
    for (const auto& r : all) {
      bool novel = true;
      for (const auto* k : kept) {
        double d = 0.0;
        for (std::size_t i = 0; i < r.penultimate.size(); ++i) {
          const double e = static_cast<double>(r.penultimate[i]) - (*k)[i];
          d += e * e;
        }
        if (d <= cfg.tfc_threshold) {
          novel = false;
          break;
        }
      }
      if (novel) kept.push_back(&r.penultimate);
    }
    return static_cast<double>(kept.size());
  }
  std::set<std::size_t> covered;
  for (const auto& r : all) {
    if (cfg.criterion == Criterion::nc) {
      for (const auto& g : model.neuron_groups()) {
        float lo = std::numeric_limits<float>::infinity(), hi = -lo;
        for (std::size_t u = 0; u < g.count; ++u) {
          lo = std::min(lo, r.neurons[g.offset + u]);
          hi = std::max(hi, r.neurons[g.offset + u]);
        }
        for (std::size_t u = 0; u < g.count; ++u) {
          const double a = r.neurons[g.offset + u];
          double v = a;
          if (cfg.nc_scaled) v = hi > lo ? (a - lo) / (static_cast<double>(hi) - lo) : 0.0;
          if (v > cfg.nc_threshold) covered.insert(g.offset + u);
        }
      }
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double a = r.neurons[i], lo = profile->low[i], hi = profile->high[i];
      switch (cfg.criterion) {
        case Criterion::kmn: {
          if (a < lo || a > hi) break;
          const std::size_t k = cfg.kmn_sections;
          std::size_t s = 0;
          if (hi > lo) s = std::min<std::size_t>(static_cast<std::size_t>(std::floor((a - lo) / (hi - lo) * k)), k - 1);
          covered.insert(i * k + s);
          break;
        }
        case Criterion::nbc:
          if (a < lo) covered.insert(2 * i);
          if (a > hi) covered.insert(2 * i + 1);
          break;
        case Criterion::snac:
          if (a > hi) covered.insert(i);
          break;
        default: break;
      }
    }
  }
  std::size_t total = n;
  if (cfg.criterion == Criterion::kmn) total = n * cfg.kmn_sections;
  if (cfg.criterion == Criterion::nbc) total = 2 * n;
  return static_cast<double>(covered.size()) / static_cast<double>(total);
}

}  // namespace oracle
