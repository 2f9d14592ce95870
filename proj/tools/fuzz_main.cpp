#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nnfuzz/campaign.hpp"
#include "nnfuzz/config.hpp"
#include "nnfuzz/coverage.hpp"
#include "nnfuzz/errors.hpp"
#include "nnfuzz/fixtures.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nnfuzz;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + p.string());
  return json::parse(in);
}

json mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return nullptr;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  const double sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
  return {{"mean", m}, {"std", sd}, {"values", xs}};
}

int run_arm(const fs::path& config_path, SearchArm arm, std::optional<std::uint64_t> seed, std::size_t repeat) {
  CampaignConfig base = load_config(config_path);
  if (seed) base.seed = *seed;
  if (repeat <= 1) {
    const CampaignReport r = run_campaign_to_disk(base, arm);
    std::cout << arm_name(arm) << " " << criterion_name(base.coverage.criterion) << ": coverage "
              << r.initial_coverage << " -> " << r.final_coverage << ", " << r.new_inputs << " new inputs ("
              << r.stop_reason << "), output " << base.output.string() << "\n";
    return 0;
  }
  std::vector<double> increase, final_cov, inputs, adv;
  json runs = json::array();
  for (std::size_t i = 0; i < repeat; ++i) {
    CampaignConfig c = base;
    c.seed = base.seed + i;
    c.output = base.output / ("run_" + std::to_string(i));
    const CampaignReport r = run_campaign_to_disk(c, arm);
    increase.push_back(r.coverage_increase());
    final_cov.push_back(r.final_coverage);
    inputs.push_back(static_cast<double>(r.new_inputs));
    if (r.adversarial) adv.push_back(r.adversarial->percent);
    runs.push_back({{"seed", c.seed}, {"dir", c.output.filename().string()}, {"stop_reason", r.stop_reason}});
    std::cout << "run " << i << " seed " << c.seed << ": " << r.initial_coverage << " -> " << r.final_coverage << "\n";
  }
  const json summary = {{"arm", arm_name(arm)},
                        {"criterion", criterion_name(base.coverage.criterion)},
                        {"runs", runs},
                        {"coverage_increase", mean_std(increase)},
                        {"final_coverage", mean_std(final_cov)},
                        {"new_inputs", mean_std(inputs)},
                        {"adversarial_percent", mean_std(adv)}};
  write_text_file(base.output / "summary.json", summary.dump(2) + "\n");
  const json& ci = summary["coverage_increase"];
  std::cout << "coverage increase " << ci["mean"].get<double>() << " +/- " << ci["std"].get<double>() << "\n";
  return 0;
}

int coverage_cmd(const fs::path& model_path, const fs::path& dataset, const std::optional<fs::path>& labels,
                 const std::optional<fs::path>& train, const std::string& criterion, const std::optional<double>& threshold,
                 const std::optional<std::size_t>& k, const std::optional<std::string>& tfc_profile) {
  const auto c = parse_criterion(criterion);
  if (!c) throw Error(ErrorCode::invalid_argument, "unknown criterion '" + criterion + "'");
  CoverageConfig cfg{.criterion = *c};
  if (threshold) {
    cfg.nc_threshold = *threshold;
    cfg.tfc_threshold = *threshold;
  }
  if (k) cfg.kmn_sections = *k;
  if (tfc_profile) {
    const auto t = tfc_threshold_for_profile(*tfc_profile);
    if (!t) throw Error(ErrorCode::invalid_argument, "unknown tfc profile '" + *tfc_profile + "'");
    cfg.tfc_threshold = *t;
  }
  const Model model = load_model(model_path);
  const Dataset ds = load_dataset(dataset, labels);
  std::optional<NeuronProfile> profile;
  if (cfg.needs_profile()) {
    if (!train) throw Error(ErrorCode::invalid_argument, criterion + " needs --train for the neuron profile");
    profile = profile_training_set(model, load_dataset(*train).samples);
  }
  CoverageState state(cfg, model, profile);
  state.commit(forward_batch(model, ds.samples));
  json out = state.report();
  out["samples"] = ds.size();
  std::cout << out.dump(2) << "\n";
  return 0;
}

int report_cmd(const fs::path& dir) {
  const json r = read_json(dir / "report.json");
  std::cout << "arm:              " << r.at("arm").get<std::string>() << "\n"
            << "criterion:        " << r.at("coverage").at("criterion").get<std::string>() << "\n"
            << "stop reason:      " << r.at("stop_reason").get<std::string>()
            << (r.at("complete").get<bool>() ? "" : " (incomplete)") << "\n"
            << "coverage:         " << r.at("initial_coverage").get<double>() << " -> "
            << r.at("final_coverage").get<double>() << "\n"
            << "new inputs:       " << r.at("new_inputs").get<std::size_t>() << "\n"
            << "batches searched: " << r.at("iterations").size() << "\n"
            << "forward passes:   " << r.at("forward_evaluations").get<std::size_t>() << "\n";
  if (!r.at("adversarial").is_null()) {
    const json& a = r.at("adversarial");
    std::cout << "adversarial:      " << a.at("count").get<std::size_t>() << "/" << a.at("total").get<std::size_t>()
              << " (" << a.at("percent").get<double>() << "%)\n";
  }
  if (fs::exists(dir / "timing.json")) {
    std::cout << "wall seconds:     " << read_json(dir / "timing.json").at("wall_seconds").get<double>() << "\n";
  }
  return 0;
}

int replay_cmd(const fs::path& dir) {
  const ReplayResult r = replay_campaign(dir);
  std::cout << "entries:             " << r.entries << "\n"
            << "replay mismatches:   " << r.replay_mismatches << "\n"
            << "distance violations: " << r.distance_violations << "\n"
            << "reported coverage:   " << r.reported_coverage << "\n"
            << "recomputed coverage: " << r.recomputed_coverage << "\n"
            << (r.ok() ? "replay ok" : "replay FAILED") << "\n";
  return r.ok() ? 0 : 1;
}

int fixtures_cmd(const fs::path& spec_path, const fs::path& out, std::optional<std::uint64_t> seed) {
  FixtureSpec spec = parse_fixture_spec(read_json(spec_path));
  if (seed) spec.weight_seed = *seed;
  const json manifest = generate_fixture(spec, out);
  std::cout << spec.architecture << ": " << manifest.at("parameter_count").get<std::size_t>() << " parameters, "
            << manifest.at("neuron_count").get<std::size_t>() << " neurons, written to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coverage-guided fuzzer for convolutional networks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  std::size_t repeat = 1;
  app.add_option("--seed", seed, "Override the campaign or fixture seed");
  app.add_option("--repeat", repeat, "Run N campaigns with seeds seed..seed+N-1")->check(CLI::PositiveNumber);

  fs::path config;
  auto* run = app.add_subcommand("run", "Run an MCTS-guided campaign");
  run->add_option("--config", config, "Campaign config (JSON)")->required()->check(CLI::ExistingFile);
  auto* baseline = app.add_subcommand("baseline", "Run the random-search baseline");
  baseline->add_option("--config", config, "Campaign config (JSON)")->required()->check(CLI::ExistingFile);

  fs::path model, dataset;
  std::optional<fs::path> labels, train;
  std::string criterion;
  std::optional<double> threshold;
  std::optional<std::size_t> k;
  std::optional<std::string> tfc_profile;
  auto* cov = app.add_subcommand("coverage", "Measure the coverage of a dataset");
  cov->add_option("--model", model)->required()->check(CLI::ExistingFile);
  cov->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  cov->add_option("--labels", labels, "IDX label file")->check(CLI::ExistingFile);
  cov->add_option("--train", train, "Training set for KMN/NBC/SNAC bounds")->check(CLI::ExistingFile);
  cov->add_option("--criterion", criterion)->required()->check(CLI::IsMember({"nc", "kmn", "nbc", "snac", "tfc"}));
  cov->add_option("--threshold", threshold, "NC threshold or squared TFC distance");
  cov->add_option("--k", k, "KMN sections");
  cov->add_option("--tfc-profile", tfc_profile)->check(CLI::IsMember(tfc_profiles()));

  fs::path campaign;
  auto* report = app.add_subcommand("report", "Summarise a campaign directory");
  report->add_option("--campaign", campaign)->required()->check(CLI::ExistingDirectory);
  auto* replay = app.add_subcommand("replay", "Re-validate a campaign directory");
  replay->add_option("--campaign", campaign)->required()->check(CLI::ExistingDirectory);

  fs::path spec, out;
  auto* fixtures = app.add_subcommand("fixtures", "Generate fixture models and datasets");
  fixtures->add_option("--spec", spec)->required()->check(CLI::ExistingFile);
  fixtures->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_arm(config, SearchArm::mcts, seed, repeat);
    if (*baseline) return run_arm(config, SearchArm::random, seed, repeat);
    if (*cov) return coverage_cmd(model, dataset, labels, train, criterion, threshold, k, tfc_profile);
    if (*report) return report_cmd(campaign);
    if (*replay) return replay_cmd(campaign);
    if (*fixtures) return fixtures_cmd(spec, out, seed);
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
