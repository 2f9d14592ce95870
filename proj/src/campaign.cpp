#include "nnfuzz/campaign.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "nnfuzz/digest.hpp"
#include "nnfuzz/errors.hpp"

namespace nnfuzz {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view arm_name(SearchArm arm) noexcept { return arm == SearchArm::mcts ? "mcts" : "random"; }

AdversarialCount count_adversarial(std::span<const CorpusEntry> corpus, const Model& model, const Dataset& seeds) {
  AdversarialCount out;
  out.total = corpus.size();
  if (corpus.empty()) return out;
  std::vector<int> seed_correct(seeds.size(), -1);
  for (const auto& e : corpus) {
    if (!seeds.has_labels() || e.seed_index >= seeds.size()) continue;
    int& correct = seed_correct[e.seed_index];
    if (correct < 0) correct = forward(model, seeds.samples[e.seed_index]).predicted_label == seeds.labels[e.seed_index];
    if (!correct) continue;
    if (forward(model, e.image).predicted_label != e.label) ++out.count;
  }
  out.percent = 100.0 * static_cast<double>(out.count) / static_cast<double>(out.total);
  return out;
}

namespace {

json actions_json(std::span<const CompleteAction> actions) {
  json out = json::array();
  for (const auto& a : actions) out.push_back({a.region, a.mutation});
  return out;
}

std::vector<CompleteAction> actions_from_json(const json& j) {
  std::vector<CompleteAction> out;
  for (const auto& a : j) out.push_back({a.at(0).get<std::size_t>(), a.at(1).get<std::size_t>()});
  return out;
}

std::string config_digest(const CampaignConfig& config) {
  json doc = config_to_json(config);
  doc.erase("output");
  doc.erase("profile_cache");
  doc.erase("trace");
  return sha256_hex(doc.dump());
}

}  // namespace

json CampaignReport::to_json() const {
  json iters = json::array();
  for (const auto& it : iterations) {
    iters.push_back({{"batch", it.batch},
                     {"seed_indices", it.seed_indices},
                     {"cluster", it.cluster ? json(*it.cluster) : json(nullptr)},
                     {"best_increase", it.best_increase},
                     {"committed", it.committed},
                     {"actions", actions_json(it.actions)},
                     {"evaluations", it.stats.evaluations},
                     {"skipped_by_distance", it.stats.skipped_by_distance},
                     {"root_advancements", it.stats.root_advancements},
                     {"nodes", it.stats.nodes}});
  }
  json adv = nullptr;
  if (adversarial) adv = {{"count", adversarial->count}, {"total", adversarial->total}, {"percent", adversarial->percent}};
  return {{"arm", arm_name(arm)},
          {"complete", complete},
          {"stop_reason", stop_reason},
          {"new_inputs", new_inputs},
          {"initial_coverage", initial_coverage},
          {"final_coverage", final_coverage},
          {"coverage_increase", coverage_increase()},
          {"coverage", coverage},
          {"forward_evaluations", forward_evaluations},
          {"adversarial", adv},
          {"fingerprint", {{"config_digest", config_digest}, {"model_digest", model_digest}, {"seed", seed}}},
          {"iterations", iters}};
}

CoverageState recompute_coverage(const Model& model, const CoverageConfig& coverage, const NeuronProfile* profile,
                                 const Dataset& test, std::span<const CorpusEntry> corpus) {
  CoverageState state(coverage, model, profile ? std::optional(*profile) : std::nullopt);
  state.commit(forward_batch(model, test.samples));
  std::size_t i = 0;
  while (i < corpus.size()) {
    std::size_t j = i;
    Batch batch;
    while (j < corpus.size() && corpus[j].batch == corpus[i].batch) batch.push_back(corpus[j++].image);
    state.commit(forward_batch(model, batch));
    i = j;
  }
  return state;
}

CampaignResult run_campaign(const CampaignInputs& inputs, const CampaignConfig& config, const CampaignOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const Model& model = *inputs.model;
  const Dataset& test = *inputs.test;
  if (test.size() == 0) throw Error(ErrorCode::empty_dataset, "test set is empty");

  CampaignResult result;
  CampaignReport& report = result.report;
  report.arm = options.arm;
  report.seed = config.seed;
  report.config_digest = config_digest(config);
  report.model_digest = sha256_hex(encode_model(model));

  std::optional<NeuronProfile> profile = inputs.profile;
  if (!profile && config.coverage.needs_profile()) {
    profile = profile_training_set(model, inputs.train->samples);
    ++report.forward_evaluations;
  }
  CoverageState& state = result.final_state.emplace(config.coverage, model, profile);
  state.commit(forward_batch(model, test.samples));
  ++report.forward_evaluations;
  report.initial_coverage = state.value();

  Rng rng(config.seed);
  const Mutator mutator(config.mutation, model.input_shape());
  std::optional<ClusterAssignment> clusters;
  if (config.chooser.kind == ChooserKind::clustered) {
    clusters = kmeans_fit(test.samples, {.k = std::min(config.chooser.clusters, test.size())}, rng);
  }

  std::size_t evaluations = 0;
  const Evaluator coverage_reward = [&](const Batch& b) {
    ++evaluations;
    return state.coverage_increase(forward_batch(model, b));
  };
  const Evaluator reward = options.reward_override
                               ? Evaluator([&](const Batch& b) {
                                   ++evaluations;
                                   return (*options.reward_override)(b);
                                 })
                               : coverage_reward;

  std::size_t committed_batches = 0;
  for (std::size_t batch_no = 0;; ++batch_no) {
    const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
    if (config.termination.timeout_seconds && elapsed >= *config.termination.timeout_seconds) {
      report.stop_reason = "timeout";
      break;
    }
    if (config.termination.target_new_inputs > 0 && report.new_inputs >= config.termination.target_new_inputs) {
      report.stop_reason = "target";
      break;
    }
    if (batch_no >= config.termination.max_batches) {
      report.stop_reason = "max_batches";
      break;
    }

    const BatchSelection sel = clusters ? choose_clustered(*clusters, config.chooser.batch_size, rng)
                                        : choose_random(test.size(), config.chooser.batch_size, rng);
    Batch seed;
    seed.reserve(sel.indices.size());
    for (std::size_t i : sel.indices) seed.push_back(test.samples[i]);

    SearchResult found = options.arm == SearchArm::mcts
                             ? search_batch(seed, reward, mutator, config.search, rng, options.observer)
                             : random_search_batch(seed, reward, mutator, config.search, rng);

    IterationRecord rec{batch_no, sel.indices, sel.cluster, found.best_increase, false, found.best_actions, found.stats};
    if (found.best_increase > 0.0) {
      // Re-validate against the latest committed state before committing.
      const auto records = forward_batch(model, found.best_batch);
      ++report.forward_evaluations;
      const double increase = options.reward_override ? (*options.reward_override)(found.best_batch)
                                                      : state.coverage_increase(records);
      if (increase > 0.0) {
        state.commit(records);
        rec.committed = true;
        const std::size_t first = result.corpus.size();
        for (std::size_t j = 0; j < sel.indices.size(); ++j) {
          const std::size_t idx = sel.indices[j];
          result.corpus.push_back({committed_batches, idx, test.has_labels() ? test.labels[idx] : std::uint8_t{0},
                                   found.best_actions, found.best_batch[j]});
        }
        report.new_inputs += sel.indices.size();
        const bool keep_going =
            !options.on_commit ||
            options.on_commit(std::span(result.corpus).subspan(first), committed_batches);
        ++committed_batches;
        if (!keep_going) {
          report.iterations.push_back(std::move(rec));
          report.complete = false;
          report.stop_reason = "io_error";
          break;
        }
      }
    }
    report.iterations.push_back(std::move(rec));
  }

  report.forward_evaluations += evaluations;
  report.final_coverage = state.value();
  report.coverage = state.report();
  if (test.has_labels()) report.adversarial = count_adversarial(result.corpus, model, test);
  report.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return result;
}

namespace {

struct LoadedInputs {
  Model model;
  Dataset train;
  Dataset test;
  std::optional<NeuronProfile> profile;
};

LoadedInputs load_inputs(const CampaignConfig& config) {
  LoadedInputs in{load_model(config.model), load_dataset(config.train, config.train_labels),
                  load_dataset(config.test, config.test_labels), std::nullopt};
  if (config.coverage.needs_profile() && config.profile_cache) {
    const fs::path cached = profile_cache_path(*config.profile_cache, in.model.name(), sha256_file(config.train));
    if (fs::exists(cached)) {
      in.profile = load_profile(cached);
    } else {
      in.profile = profile_training_set(in.model, in.train.samples);
      save_profile(*in.profile, cached);
    }
  }
  return in;
}

std::string provenance_line(const CorpusEntry& e, std::size_t entry) {
  return json{{"batch", e.batch}, {"entry", entry}, {"seed_index", e.seed_index}, {"label", e.label},
              {"actions", actions_json(e.actions)}}
             .dump() +
         "\n";
}

}  // namespace

CampaignReport run_campaign_to_disk(const CampaignConfig& config, SearchArm arm) {
  validate_config(config);
  LoadedInputs in = load_inputs(config);

  fs::create_directories(config.output / "corpus");
  write_text_file(config.output / "config.json", config_to_json(config).dump(2) + "\n");
  const fs::path provenance = config.output / "provenance.jsonl";
  write_text_file(provenance, "");
  std::ofstream trace;
  if (config.trace) trace.open(config.output / "trace.jsonl", std::ios::trunc);

  std::string io_failure;
  CampaignOptions options;
  options.arm = arm;
  if (config.trace) {
    options.observer = [&trace](const SearchEvent& ev, const GameTree&) {
      trace << json{{"iteration", ev.iteration}, {"actions", actions_json(ev.actions)}, {"evaluated", ev.evaluated},
                    {"reward", ev.reward}, {"best_so_far", ev.best_so_far}, {"root_level", ev.root_level}}
                   .dump()
            << "\n";
    };
  }
  options.on_commit = [&](std::span<const CorpusEntry> entries, std::size_t ordinal) {
    try {
      Dataset ds;
      ds.sample_shape = in.model.input_shape();
      std::string lines;
      for (std::size_t j = 0; j < entries.size(); ++j) {
        ds.samples.push_back(entries[j].image);
        ds.labels.push_back(entries[j].label);
        lines += provenance_line(entries[j], j);
      }
      if (!in.test.has_labels()) ds.labels.clear();
      save_dataset(ds, config.output / "corpus" / ("batch_" + std::to_string(ordinal) + ".tds"));
      std::ofstream out(provenance, std::ios::app);
      out << lines;
      if (!out) throw Error(ErrorCode::io_error, "cannot append to " + provenance.string());
      return true;
    } catch (const std::exception& e) {
      io_failure = e.what();
      return false;
    }
  };

  CampaignInputs inputs{&in.model, &in.train, &in.test, in.profile};
  CampaignResult result = run_campaign(inputs, config, options);
  write_text_file(config.output / "report.json", result.report.to_json().dump(2) + "\n");
  write_text_file(config.output / "timing.json", json{{"wall_seconds", result.report.wall_seconds}}.dump(2) + "\n");
  if (!io_failure.empty()) throw Error(ErrorCode::io_error, io_failure);
  return result.report;
}

ReplayResult replay_campaign(const fs::path& dir) {
  const CampaignConfig config = load_config(dir / "config.json");
  LoadedInputs in = load_inputs(config);
  const Mutator mutator(config.mutation, in.model.input_shape());

  std::ifstream prov(dir / "provenance.jsonl");
  if (!prov) throw Error(ErrorCode::io_error, "missing provenance.jsonl in " + dir.string());
  std::vector<CorpusEntry> corpus;
  std::map<std::size_t, Dataset> batches;
  ReplayResult out;
  for (std::string line; std::getline(prov, line);) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    CorpusEntry e;
    e.batch = j.at("batch").get<std::size_t>();
    e.seed_index = j.at("seed_index").get<std::size_t>();
    e.label = j.at("label").get<std::uint8_t>();
    e.actions = actions_from_json(j.at("actions"));
    const auto entry = j.at("entry").get<std::size_t>();
    if (!batches.contains(e.batch)) {
      batches[e.batch] = load_dataset(dir / "corpus" / ("batch_" + std::to_string(e.batch) + ".tds"));
    }
    const Dataset& stored = batches[e.batch];
    if (entry >= stored.size() || e.seed_index >= in.test.size()) {
      throw Error(ErrorCode::index_out_of_range, "provenance entry points outside the corpus or test set");
    }
    e.image = stored.samples[entry];
    const Batch seed{in.test.samples[e.seed_index]};
    const Batch replayed = mutator.replay(seed, e.actions);
    if (!bit_identical(replayed.front(), e.image)) ++out.replay_mismatches;
    if (!within_distance(e.image, seed.front(), config.mutation.distance)) ++out.distance_violations;
    corpus.push_back(std::move(e));
    ++out.entries;
  }

  std::ifstream rep(dir / "report.json");
  if (!rep) throw Error(ErrorCode::io_error, "missing report.json in " + dir.string());
  out.reported_coverage = json::parse(rep).at("final_coverage").get<double>();
  std::optional<NeuronProfile> profile = in.profile;
  if (!profile && config.coverage.needs_profile()) profile = profile_training_set(in.model, in.train.samples);
  out.recomputed_coverage =
      recompute_coverage(in.model, config.coverage, profile ? &*profile : nullptr, in.test, corpus).value();
  return out;
}

}  // namespace nnfuzz
