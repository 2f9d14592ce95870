#include "nnfuzz/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nnfuzz/container_io.hpp"
#include "nnfuzz/errors.hpp"
#include "nnfuzz/kernels.hpp"

namespace nnfuzz {

std::string_view criterion_name(Criterion c) noexcept {
  switch (c) {
    case Criterion::nc: return "nc";
    case Criterion::kmn: return "kmn";
    case Criterion::nbc: return "nbc";
    case Criterion::snac: return "snac";
    case Criterion::tfc: return "tfc";
  }
  return "unknown";
}

std::optional<Criterion> parse_criterion(std::string_view name) noexcept {
  for (Criterion c : {Criterion::nc, Criterion::kmn, Criterion::nbc, Criterion::snac, Criterion::tfc}) {
    if (criterion_name(c) == name) return c;
  }
  return std::nullopt;
}

namespace {

struct TfcProfile {
  std::string_view name;
  double threshold;
};

constexpr TfcProfile kTfcProfiles[] = {
    {"lenet1", 30.0 * 30.0},
    {"lenet4", 13.0 * 13.0},
    {"lenet5", 11.0 * 11.0},
    {"cifar", 3.0 * 3.0},
};

}  // namespace

std::optional<double> tfc_threshold_for_profile(std::string_view model_profile) noexcept {
  for (const auto& p : kTfcProfiles) {
    if (p.name == model_profile) return p.threshold;
  }
  return std::nullopt;
}

std::vector<std::string> tfc_profiles() {
  std::vector<std::string> out;
  for (const auto& p : kTfcProfiles) out.emplace_back(p.name);
  return out;
}

NeuronProfile profile_records(std::span<const ActivationRecord> records) {
  if (records.empty()) throw Error(ErrorCode::empty_dataset, "cannot profile an empty training set");
  NeuronProfile p{records.front().neurons, records.front().neurons};
  for (const auto& rec : records.subspan(1)) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      p.low[i] = std::min(p.low[i], rec.neurons[i]);
      p.high[i] = std::max(p.high[i], rec.neurons[i]);
    }
  }
  return p;
}

NeuronProfile profile_training_set(const Model& model, std::span<const Tensor> train) {
  if (train.empty()) throw Error(ErrorCode::empty_dataset, "cannot profile an empty training set");
  NeuronProfile p;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].shape() != model.input_shape()) {
      throw BatchError(ErrorCode::shape_mismatch, i, "training sample does not match model input shape");
    }
    const ActivationRecord rec = forward(model, train[i]);
    if (i == 0) {
      p.low = rec.neurons;
      p.high = rec.neurons;
      continue;
    }
    for (std::size_t n = 0; n < p.size(); ++n) {
      p.low[n] = std::min(p.low[n], rec.neurons[n]);
      p.high[n] = std::max(p.high[n], rec.neurons[n]);
    }
  }
  return p;
}

void save_profile(const NeuronProfile& profile, const std::filesystem::path& path) {
  Dataset ds;
  ds.sample_shape = {profile.size()};
  ds.samples.emplace_back(ds.sample_shape, profile.low);
  ds.samples.emplace_back(ds.sample_shape, profile.high);
  save_dataset(ds, path);
}

NeuronProfile load_profile(const std::filesystem::path& path) {
  const Dataset ds = load_dataset(path);
  if (ds.size() != 2 || ds.sample_shape.size() != 1) {
    throw Error(ErrorCode::malformed_header, path.string() + " is not a profile (expected two rank-1 rows)");
  }
  return {ds.samples[0].values(), ds.samples[1].values()};
}

std::filesystem::path profile_cache_path(const std::filesystem::path& dir, const std::string& model_name,
                                         const std::string& train_digest) {
  return dir / ("profile_" + model_name + "_" + train_digest.substr(0, 16) + ".tds");
}

CoverageState::CoverageState(CoverageConfig config, const Model& model, std::optional<NeuronProfile> profile)
    : config_(config),
      groups_(model.neuron_groups()),
      neuron_count_(model.neuron_count()),
      penultimate_size_(model.penultimate_size()),
      profile_(std::move(profile)) {
  if (config_.needs_profile()) {
    if (!profile_) {
      throw Error(ErrorCode::profile_mismatch, std::string(criterion_name(config_.criterion)) + " needs a training profile");
    }
    if (profile_->size() != neuron_count_ || profile_->high.size() != neuron_count_) {
      throw Error(ErrorCode::profile_mismatch, "profile has " + std::to_string(profile_->size()) +
                                                   " neurons, model has " + std::to_string(neuron_count_));
    }
  }
  if (config_.criterion == Criterion::kmn && config_.kmn_sections == 0) {
    throw Error(ErrorCode::invalid_config, "kmn needs at least one section");
  }
  switch (config_.criterion) {
    case Criterion::nc:
    case Criterion::snac: total_classes_ = neuron_count_; break;
    case Criterion::nbc: total_classes_ = 2 * neuron_count_; break;
    case Criterion::kmn: total_classes_ = config_.kmn_sections * neuron_count_; break;
    case Criterion::tfc: total_classes_ = 0; break;
  }
  covered_.assign(total_classes_, 0);
}

double CoverageState::value_for(std::size_t covered) const noexcept {
  if (config_.criterion == Criterion::tfc) return static_cast<double>(covered);
  return total_classes_ == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total_classes_);
}

void CoverageState::check_records(std::span<const ActivationRecord> records) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].neurons.size() != neuron_count_) {
      throw Error(ErrorCode::profile_mismatch, "record " + std::to_string(i) + " has " +
                                                   std::to_string(records[i].neurons.size()) + " neurons, expected " +
                                                   std::to_string(neuron_count_));
    }
    if (config_.criterion == Criterion::tfc && records[i].penultimate.size() != penultimate_size_) {
      throw Error(ErrorCode::profile_mismatch, "record " + std::to_string(i) + " penultimate vector has wrong length");
    }
  }
}

void CoverageState::ratio_classes(const ActivationRecord& rec, std::vector<std::size_t>& out) const {
  const auto& a = rec.neurons;
  switch (config_.criterion) {
    case Criterion::nc:
      for (const auto& g : groups_) {
        const auto vals = rec.group(g);
        double lo = 0.0, span = 1.0;
        if (config_.nc_scaled) {
          const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
          lo = *mn;
          span = static_cast<double>(*mx) - lo;
        }
        for (std::size_t u = 0; u < g.count; ++u) {
          double v = vals[u];
          if (config_.nc_scaled) v = span > 0.0 ? (v - lo) / span : 0.0;
          if (v > config_.nc_threshold) out.push_back(g.offset + u);
        }
      }
      break;
    case Criterion::kmn: {
      const std::size_t k = config_.kmn_sections;
      for (std::size_t n = 0; n < neuron_count_; ++n) {
        const double lo = profile_->low[n], hi = profile_->high[n], v = a[n];
        if (v < lo || v > hi) continue;
        std::size_t section = 0;
        if (hi > lo) {
          section = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(k)));
          section = std::min(section, k - 1);
        }
        out.push_back(n * k + section);
      }
      break;
    }
    case Criterion::nbc:
      for (std::size_t n = 0; n < neuron_count_; ++n) {
        if (a[n] < profile_->low[n]) out.push_back(2 * n);
        if (a[n] > profile_->high[n]) out.push_back(2 * n + 1);
      }
      break;
    case Criterion::snac:
      for (std::size_t n = 0; n < neuron_count_; ++n) {
        if (a[n] > profile_->high[n]) out.push_back(n);
      }
      break;
    case Criterion::tfc: break;
  }
}

std::vector<std::size_t> CoverageState::novel_vectors(std::span<const ActivationRecord> records) const {
  const auto& k = kernels::table(kernels::active_backend());
  const std::size_t dim = penultimate_size_;
  const std::size_t committed = covered_count_;
  std::vector<std::size_t> novel;
  auto is_novel = [&](const float* v) {
    for (std::size_t s = 0; s < committed; ++s) {
      if (static_cast<double>(k.squared_l2(v, tfc_vectors_.data() + s * dim, dim)) <= config_.tfc_threshold) return false;
    }
    for (std::size_t j : novel) {
      if (static_cast<double>(k.squared_l2(v, records[j].penultimate.data(), dim)) <= config_.tfc_threshold) return false;
    }
    return true;
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (is_novel(records[i].penultimate.data())) novel.push_back(i);
  }
  return novel;
}

std::vector<std::size_t> CoverageState::classes_covered_by(std::span<const ActivationRecord> records) const {
  check_records(records);
  if (config_.criterion == Criterion::tfc) return novel_vectors(records);
  std::vector<std::size_t> out;
  for (const auto& rec : records) ratio_classes(rec, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t CoverageState::new_class_count(std::span<const ActivationRecord> records) const {
  const auto classes = classes_covered_by(records);
  if (config_.criterion == Criterion::tfc) return classes.size();
  return static_cast<std::size_t>(std::count_if(classes.begin(), classes.end(), [&](std::size_t c) { return !covered_[c]; }));
}

double CoverageState::coverage_increase(std::span<const ActivationRecord> records) const {
  const std::size_t added = new_class_count(records);
  if (added == 0) return 0.0;
  return value_for(covered_count_ + added) - value_for(covered_count_);
}

void CoverageState::commit(std::span<const ActivationRecord> records) {
  const auto classes = classes_covered_by(records);
  if (config_.criterion == Criterion::tfc) {
    for (std::size_t i : classes) {
      const auto& v = records[i].penultimate;
      tfc_vectors_.insert(tfc_vectors_.end(), v.begin(), v.end());
    }
    covered_count_ += classes.size();
    return;
  }
  for (std::size_t c : classes) {
    if (!covered_[c]) {
      covered_[c] = 1;
      ++covered_count_;
    }
  }
}

nlohmann::json CoverageState::report() const {
  nlohmann::json hp;
  switch (config_.criterion) {
    case Criterion::nc:
      hp = {{"threshold", config_.nc_threshold}, {"scaling", config_.nc_scaled ? "per_layer" : "raw"}};
      break;
    case Criterion::kmn: hp = {{"k", config_.kmn_sections}}; break;
    case Criterion::nbc:
    case Criterion::snac: hp = nlohmann::json::object(); break;
    case Criterion::tfc: hp = {{"threshold", config_.tfc_threshold}}; break;
  }
  return {{"criterion", criterion_name(config_.criterion)},
          {"hyperparameters", hp},
          {"value", value()},
          {"covered", covered_count_},
          {"total_classes", total_classes_}};
}

}  // namespace nnfuzz
