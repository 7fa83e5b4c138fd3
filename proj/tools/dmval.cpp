#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dmval/errors.hpp"
#include "dmval/pipeline.hpp"

namespace {

int dispatch(const CLI::App& app, const dmval::PipelineConfig& cfg) {
  if (app.got_subcommand("synth")) return dmval::cmd_synth(cfg);
  if (app.got_subcommand("extract")) return dmval::cmd_extract(cfg);
  if (app.got_subcommand("train")) return dmval::cmd_train(cfg);
  if (app.got_subcommand("validate")) return dmval::cmd_validate(cfg);
  if (app.got_subcommand("gridsearch")) return dmval::cmd_gridsearch(cfg);
  std::cerr << "dmval: no subcommand\n";
  return dmval::kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driver-model validation pipeline: scenario extraction, per-driver reward "
               "training, tactical and operational validation"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, results_path, manifest_path, synth_spec_path;
  int jobs = 1, horizon = 5;
  std::uint64_t seed = 0;

  auto* opt_config = app.add_option("-c,--config", config_path, "JSON config file");
  auto* opt_data = app.add_option("--data", data_dir, "input recording directory");
  auto* opt_out = app.add_option("--out", out_dir, "output directory");
  auto* opt_jobs = app.add_option("-j,--jobs", jobs, "worker threads");
  auto* opt_seed = app.add_option("--seed", seed, "seed recorded in the config");
  auto* opt_horizon = app.add_option("--horizon", horizon, "segment length in frames");
  auto* opt_results = app.add_option("--results", results_path, "training results JSONL path");
  auto* opt_manifest = app.add_option("--manifest", manifest_path, "extraction manifest path");
  auto* opt_spec = app.add_option("--synth-spec", synth_spec_path, "synthetic fixture spec JSON");

  const char* subcommands[][2] = {
      {"synth", "generate synthetic recordings from a fixture spec"},
      {"extract", "scan recordings and list usable lane-change demonstrations"},
      {"train", "fit per-demonstration reward weights"},
      {"validate", "roll out trained agents and score tactical/operational agreement"},
      {"gridsearch", "rank feature-constant combinations by rollout outcomes"},
  };
  for (const auto& sc : subcommands) {
    app.add_subcommand(sc[0], sc[1])->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  try {
    dmval::PipelineConfig cfg;
    if (opt_config->count() > 0) cfg = dmval::config_from_json_file(config_path);
    if (opt_data->count() > 0) cfg.data_dir = data_dir;
    if (opt_out->count() > 0) cfg.out_dir = out_dir;
    if (opt_jobs->count() > 0) cfg.jobs = jobs;
    if (opt_seed->count() > 0) cfg.seed = seed;
    if (opt_horizon->count() > 0) cfg.horizon = horizon;
    if (opt_results->count() > 0) cfg.results_path = results_path;
    if (opt_manifest->count() > 0) cfg.manifest_path = manifest_path;
    if (opt_spec->count() > 0) cfg.synth_spec_path = synth_spec_path;
    return dispatch(app, cfg);
  } catch (const dmval::ConfigError& e) {
    std::cerr << "dmval: config error: " << e.what() << "\n";
    return dmval::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "dmval: " << e.what() << "\n";
    return dmval::kExitData;
  }
}
