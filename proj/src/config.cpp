#include "nnfuzz/config.hpp"

#include <fstream>

#include "nnfuzz/errors.hpp"

namespace nnfuzz {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_config, what); }

fs::path resolve(const json& doc, const char* key, const fs::path& base, bool required = true) {
  if (!doc.contains(key) || doc.at(key).is_null()) {
    if (required) bad(std::string("missing '") + key + "'");
    return {};
  }
  if (!doc.at(key).is_string()) bad(std::string("'") + key + "' must be a path string");
  fs::path p = doc.at(key).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(std::string("'") + key + "': " + e.what());
  }
}

MutationKind parse_mutation(const json& m) {
  const auto kind = get_or<std::string>(m, "kind", "");
  if (kind == "brightness") return MutationKind::brightness(get_or<float>(m, "delta", kDefaultBrightnessDelta));
  if (kind == "contrast") return MutationKind::contrast(get_or<float>(m, "gain", kDefaultContrastGain));
  if (kind == "blur") return MutationKind::blur(get_or<std::size_t>(m, "size", 3));
  bad("unknown mutation kind '" + kind + "'");
}

json mutation_to_json(const MutationKind& m) {
  switch (m.family) {
    case MutationFamily::brightness: return {{"kind", "brightness"}, {"delta", m.amount}};
    case MutationFamily::contrast: return {{"kind", "contrast"}, {"gain", m.amount}};
    case MutationFamily::blur: return {{"kind", "blur"}, {"size", m.blur_size}};
  }
  return {};
}

}  // namespace

CampaignConfig parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) bad("config must be a JSON object");
  CampaignConfig c;
  c.model = resolve(doc, "model", base_dir);
  c.train = resolve(doc, "train", base_dir);
  c.test = resolve(doc, "test", base_dir);
  if (auto p = resolve(doc, "train_labels", base_dir, false); !p.empty()) c.train_labels = p;
  if (auto p = resolve(doc, "test_labels", base_dir, false); !p.empty()) c.test_labels = p;

  const json crit = doc.value("criterion", json::object());
  const auto kind = get_or<std::string>(crit, "kind", "nc");
  const auto criterion = parse_criterion(kind);
  if (!criterion) bad("unknown criterion '" + kind + "'");
  c.coverage.criterion = *criterion;
  c.coverage.nc_threshold = get_or<double>(crit, "threshold", kDefaultNcThreshold);
  const auto scaling = get_or<std::string>(crit, "scaling", "per_layer");
  if (scaling != "per_layer" && scaling != "raw") bad("criterion.scaling must be per_layer or raw");
  c.coverage.nc_scaled = scaling == "per_layer";
  c.coverage.kmn_sections = get_or<std::size_t>(crit, "k", kDefaultKmnSections);
  if (crit.contains("tfc_profile")) {
    c.tfc_profile = crit.at("tfc_profile").get<std::string>();
    const auto t = tfc_threshold_for_profile(*c.tfc_profile);
    if (!t) bad("unknown tfc_profile '" + *c.tfc_profile + "'");
    c.coverage.tfc_threshold = *t;
  }
  if (crit.contains("tfc_threshold")) {
    c.tfc_profile.reset();
    c.coverage.tfc_threshold = get_or<double>(crit, "tfc_threshold", 900.0);
  }

  const json ch = doc.value("chooser", json::object());
  const auto ck = get_or<std::string>(ch, "kind", "random");
  if (ck == "random") c.chooser.kind = ChooserKind::random;
  else if (ck == "clustered") c.chooser.kind = ChooserKind::clustered;
  else bad("unknown chooser '" + ck + "'");
  c.chooser.batch_size = get_or<std::size_t>(ch, "batch_size", kDefaultBatchSize);
  c.chooser.clusters = get_or<std::size_t>(ch, "clusters", kDefaultClusters);
  if (c.chooser.batch_size == 0) bad("chooser.batch_size must be positive");

  const json mu = doc.value("mutation", json::object());
  const json grid = mu.value("grid", json::object());
  c.mutation.grid.rows = get_or<std::size_t>(grid, "rows", 3);
  c.mutation.grid.cols = get_or<std::size_t>(grid, "cols", 3);
  if (mu.contains("mutations")) {
    c.mutation.mutations.clear();
    for (const auto& m : mu.at("mutations")) c.mutation.mutations.push_back(parse_mutation(m));
  }
  c.mutation.contrast_pivot = get_or<float>(mu, "contrast_pivot", 0.5f);
  const auto metric = get_or<std::string>(mu, "metric", "linf");
  if (metric == "linf") c.mutation.distance.metric = DistanceMetric::linf;
  else if (metric == "l2") c.mutation.distance.metric = DistanceMetric::l2;
  else if (metric == "deephunter") c.mutation.distance.metric = DistanceMetric::deephunter;
  else bad("unknown metric '" + metric + "'");
  c.mutation.distance.epsilon = get_or<double>(mu, "epsilon", 0.25);
  c.mutation.distance.alpha = get_or<double>(mu, "alpha", 0.02);
  c.mutation.distance.beta = get_or<double>(mu, "beta", 0.2);

  const json se = doc.value("search", json::object());
  c.search.max_depth_levels = get_or<std::size_t>(se, "max_depth_levels", kDefaultMaxDepthLevels);
  c.search.iterations_per_root = get_or<std::size_t>(se, "iterations_per_root", kDefaultIterationsPerRoot);
  c.search.exploration = get_or<double>(se, "exploration", std::numbers::sqrt2);
  if (c.search.max_depth_levels < 2 || c.search.iterations_per_root == 0 || c.search.exploration < 0.0) {
    bad("search needs max_depth_levels >= 2, iterations_per_root >= 1, exploration >= 0");
  }

  const json te = doc.value("termination", json::object());
  c.termination.target_new_inputs = get_or<std::size_t>(te, "target_new_inputs", 256);
  if (te.contains("timeout_seconds") && !te.at("timeout_seconds").is_null()) {
    c.termination.timeout_seconds = get_or<double>(te, "timeout_seconds", 0.0);
  }
  c.termination.max_batches = get_or<std::size_t>(te, "max_batches", 1000);

  c.seed = get_or<std::uint64_t>(doc, "seed", 0);
  c.output = doc.contains("output") ? resolve(doc, "output", base_dir) : base_dir / "campaign";
  if (auto p = resolve(doc, "profile_cache", base_dir, false); !p.empty()) c.profile_cache = p;
  c.trace = get_or<bool>(doc, "trace", false);
  return c;
}

CampaignConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    bad(path.string() + ": " + e.what());
  }
  return parse_config(doc, fs::absolute(path).parent_path());
}

json config_to_json(const CampaignConfig& c) {
  json crit = {{"kind", criterion_name(c.coverage.criterion)},
               {"threshold", c.coverage.nc_threshold},
               {"scaling", c.coverage.nc_scaled ? "per_layer" : "raw"},
               {"k", c.coverage.kmn_sections}};
  if (c.tfc_profile) crit["tfc_profile"] = *c.tfc_profile;
  else crit["tfc_threshold"] = c.coverage.tfc_threshold;
  json mutations = json::array();
  for (const auto& m : c.mutation.mutations) mutations.push_back(mutation_to_json(m));
  json doc = {
      {"model", c.model.string()},
      {"train", c.train.string()},
      {"test", c.test.string()},
      {"criterion", crit},
      {"chooser",
       {{"kind", chooser_name(c.chooser.kind)}, {"batch_size", c.chooser.batch_size}, {"clusters", c.chooser.clusters}}},
      {"mutation",
       {{"grid", {{"rows", c.mutation.grid.rows}, {"cols", c.mutation.grid.cols}}},
        {"mutations", mutations},
        {"contrast_pivot", c.mutation.contrast_pivot},
        {"metric", metric_name(c.mutation.distance.metric)},
        {"epsilon", c.mutation.distance.epsilon},
        {"alpha", c.mutation.distance.alpha},
        {"beta", c.mutation.distance.beta}}},
      {"search",
       {{"max_depth_levels", c.search.max_depth_levels},
        {"iterations_per_root", c.search.iterations_per_root},
        {"exploration", c.search.exploration}}},
      {"termination",
       {{"target_new_inputs", c.termination.target_new_inputs},
        {"timeout_seconds", c.termination.timeout_seconds ? json(*c.termination.timeout_seconds) : json(nullptr)},
        {"max_batches", c.termination.max_batches}}},
      {"seed", c.seed},
      {"output", c.output.string()},
      {"trace", c.trace},
  };
  if (c.train_labels) doc["train_labels"] = c.train_labels->string();
  if (c.test_labels) doc["test_labels"] = c.test_labels->string();
  if (c.profile_cache) doc["profile_cache"] = c.profile_cache->string();
  return doc;
}

void validate_config(const CampaignConfig& c) {
  for (const auto* p : {&c.model, &c.train, &c.test}) {
    if (!fs::exists(*p)) bad("file not found: " + p->string());
  }
  for (const auto* p : {&c.train_labels, &c.test_labels}) {
    if (*p && !fs::exists(**p)) bad("file not found: " + (*p)->string());
  }
  if (c.termination.target_new_inputs == 0 && !c.termination.timeout_seconds) {
    bad("termination needs target_new_inputs > 0 or a timeout");
  }
}

}  // namespace nnfuzz
