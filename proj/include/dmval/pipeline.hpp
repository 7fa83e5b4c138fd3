#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmval/agent_rollout.hpp"
#include "dmval/irl.hpp"
#include "dmval/reward.hpp"
#include "dmval/track_data.hpp"

namespace dmval {

// Everything a pipeline stage needs, serializable to/from JSON. Every stage
// writes the serialized config that produced its outputs into the output
// directory, so runs are reproducible from the artifacts alone.
struct PipelineConfig {
  std::string data_dir;
  std::string out_dir;
  int jobs = 1;
  std::uint64_t seed = 0;

  FeatureConstants constants;
  int horizon = 5;
  OptimizerConfig optimizer;
  AgentConfig agent;  // dt follows each recording's frame rate unless overridden
  bool agent_dt_override = false;

  ColumnMap columns;
  std::vector<int> merge_recording_ids;  // excluded in addition to flagged metas

  // validate stage
  std::string manifest_path;  // default: <out_dir>/manifest.json when empty
  std::string results_path;   // default: <out_dir>/training_results.jsonl
  bool heatmap_enabled = true;
  int heatmap_count = 1;  // first K converged demos
  int heatmap_nx = 240;
  int heatmap_ny = 60;
  double heatmap_x_back = 50.0;
  double heatmap_x_fwd = 100.0;

  // gridsearch stage
  ConstantsGrid grid{{0.14, 0.18, 0.22}, {5, 10, 15, 20}, {1.4, 1.8, 2.2}};

  // synth stage
  std::string synth_spec_path;
};

// Parses and validates; unknown keys and out-of-range values raise
// ConfigError naming the offending key.
PipelineConfig config_from_json_file(const std::filesystem::path& path);
PipelineConfig config_from_json_text(const std::string& text, const std::string& origin);
std::string config_to_json(const PipelineConfig& cfg);
void validate_config(const PipelineConfig& cfg);

// Exit codes shared by the CLI: 0 ok, 2 config error, 3 data error,
// 4 partial failure (some units processed, some raised unexpected errors).
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitPartial = 4;

int cmd_synth(const PipelineConfig& cfg);
int cmd_extract(const PipelineConfig& cfg);
int cmd_train(const PipelineConfig& cfg);
int cmd_validate(const PipelineConfig& cfg);
int cmd_gridsearch(const PipelineConfig& cfg);

}  // namespace dmval
