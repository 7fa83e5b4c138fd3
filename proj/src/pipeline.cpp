#include "dmval/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "dmval/csv.hpp"
#include "dmval/errors.hpp"
#include "dmval/operational.hpp"
#include "dmval/parallel.hpp"
#include "dmval/scenario_extraction.hpp"
#include "dmval/synthetic.hpp"
#include "dmval/tactical.hpp"
#include "json.hpp"

namespace dmval {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Object wrapper that tracks key consumption; finish() rejects leftovers so
// config typos fail loudly instead of silently using defaults.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path, std::string origin)
      : obj_(j), path_(std::move(path)), origin_(std::move(origin)) {
    if (!j.is_object()) {
      throw ConfigError(origin_ + ": " + (path_.empty() ? "document" : path_) +
                        " must be a JSON object");
    }
  }

  template <typename T>
  void get(const std::string& key, T& target) {
    if (!obj_.contains(key)) return;
    seen_.insert(key);
    try {
      target = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(origin_ + ": bad value for '" + join(key) + "': " + e.what());
    }
  }

  void get_vec4(const std::string& key, Eigen::Vector4d& target) {
    std::vector<double> v;
    get(key, v);
    if (!obj_.contains(key)) return;
    if (v.size() != 4) {
      throw ConfigError(origin_ + ": '" + join(key) + "' must have exactly 4 elements");
    }
    for (int i = 0; i < 4; ++i) target[i] = v[static_cast<std::size_t>(i)];
  }

  const json* sub(const std::string& key) {
    if (!obj_.contains(key)) return nullptr;
    seen_.insert(key);
    return &obj_.at(key);
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (seen_.find(it.key()) == seen_.end()) {
        throw ConfigError(origin_ + ": unknown key '" + join(it.key()) + "'");
      }
    }
  }

  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& obj_;
  std::string path_;
  std::string origin_;
  std::set<std::string> seen_;
};

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataIntegrityError("cannot write " + path.string());
  out << text;
  if (!out) throw DataIntegrityError("short write to " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataIntegrityError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PipelineConfig config_from_json_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }

  PipelineConfig cfg;
  StrictObject root(j, "", origin);
  root.get("data_dir", cfg.data_dir);
  root.get("out_dir", cfg.out_dir);
  root.get("jobs", cfg.jobs);
  root.get("seed", cfg.seed);
  if (const json* e = root.sub("constants")) {
    StrictObject o(*e, "constants", origin);
    o.get("c", cfg.constants.c);
    o.get("sigma_x", cfg.constants.sigma_x);
    o.get("sigma_y", cfg.constants.sigma_y);
    o.finish();
  }
  root.get("horizon", cfg.horizon);
  if (const json* e = root.sub("optimizer")) {
    StrictObject o(*e, "optimizer", origin);
    o.get_vec4("theta_init", cfg.optimizer.theta_init);
    o.get("tol", cfg.optimizer.tol);
    o.get("max_iters", cfg.optimizer.max_iters);
    o.get("max_step", cfg.optimizer.max_step);
    o.get("constrain_vel_nonpositive", cfg.optimizer.constrain_vel_nonpositive);
    o.finish();
  }
  if (const json* e = root.sub("agent")) {
    StrictObject o(*e, "agent", origin);
    o.get("horizon", cfg.agent.horizon);
    o.get("dt", cfg.agent.dt);
    o.get("ax_min", cfg.agent.ax_min);
    o.get("ax_max", cfg.agent.ax_max);
    o.get("ay_min", cfg.agent.ay_min);
    o.get("ay_max", cfg.agent.ay_max);
    o.get("replan_stride", cfg.agent.replan_stride);
    o.get("max_planner_iters", cfg.agent.max_planner_iters);
    o.get("planner_tol", cfg.agent.planner_tol);
    o.finish();
  }
  root.get("agent_dt_override", cfg.agent_dt_override);
  if (const json* e = root.sub("columns")) {
    StrictObject o(*e, "columns", origin);
    ColumnMap& c = cfg.columns;
    o.get("frame", c.frame);
    o.get("track_id", c.track_id);
    o.get("x", c.x);
    o.get("y", c.y);
    o.get("width", c.width);
    o.get("height", c.height);
    o.get("x_velocity", c.x_velocity);
    o.get("y_velocity", c.y_velocity);
    o.get("x_acceleration", c.x_acceleration);
    o.get("y_acceleration", c.y_acceleration);
    o.get("lane_id", c.lane_id);
    o.get("preceding_id", c.preceding_id);
    o.get("meta_id", c.meta_id);
    o.get("driving_direction", c.driving_direction);
    o.get("num_lane_changes", c.num_lane_changes);
    o.get("meta_width", c.meta_width);
    o.get("meta_height", c.meta_height);
    o.get("rec_id", c.rec_id);
    o.get("frame_rate", c.frame_rate);
    o.get("speed_limit", c.speed_limit);
    o.get("upper_lane_markings", c.upper_lane_markings);
    o.get("lower_lane_markings", c.lower_lane_markings);
    o.get("has_merge_lane", c.has_merge_lane);
    o.finish();
  }
  root.get("merge_recording_ids", cfg.merge_recording_ids);
  root.get("manifest_path", cfg.manifest_path);
  root.get("results_path", cfg.results_path);
  if (const json* e = root.sub("heatmap")) {
    StrictObject o(*e, "heatmap", origin);
    o.get("enabled", cfg.heatmap_enabled);
    o.get("count", cfg.heatmap_count);
    o.get("nx", cfg.heatmap_nx);
    o.get("ny", cfg.heatmap_ny);
    o.get("x_back", cfg.heatmap_x_back);
    o.get("x_fwd", cfg.heatmap_x_fwd);
    o.finish();
  }
  if (const json* e = root.sub("grid")) {
    StrictObject o(*e, "grid", origin);
    o.get("c", cfg.grid.c_values);
    o.get("sigma_x", cfg.grid.sigma_x_values);
    o.get("sigma_y", cfg.grid.sigma_y_values);
    o.finish();
  }
  root.get("synth_spec_path", cfg.synth_spec_path);
  root.finish();

  validate_config(cfg);
  return cfg;
}

PipelineConfig config_from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str(), path.string());
}

std::string config_to_json(const PipelineConfig& cfg) {
  ojson j;
  j["data_dir"] = cfg.data_dir;
  j["out_dir"] = cfg.out_dir;
  j["jobs"] = cfg.jobs;
  j["seed"] = cfg.seed;
  j["constants"] = {{"c", cfg.constants.c},
                    {"sigma_x", cfg.constants.sigma_x},
                    {"sigma_y", cfg.constants.sigma_y}};
  j["horizon"] = cfg.horizon;
  j["optimizer"] = {
      {"theta_init", {cfg.optimizer.theta_init[0], cfg.optimizer.theta_init[1],
                      cfg.optimizer.theta_init[2], cfg.optimizer.theta_init[3]}},
      {"tol", cfg.optimizer.tol},
      {"max_iters", cfg.optimizer.max_iters},
      {"max_step", cfg.optimizer.max_step},
      {"constrain_vel_nonpositive", cfg.optimizer.constrain_vel_nonpositive}};
  j["agent"] = {{"horizon", cfg.agent.horizon},
                {"dt", cfg.agent.dt},
                {"ax_min", cfg.agent.ax_min},
                {"ax_max", cfg.agent.ax_max},
                {"ay_min", cfg.agent.ay_min},
                {"ay_max", cfg.agent.ay_max},
                {"replan_stride", cfg.agent.replan_stride},
                {"max_planner_iters", cfg.agent.max_planner_iters},
                {"planner_tol", cfg.agent.planner_tol}};
  j["agent_dt_override"] = cfg.agent_dt_override;
  const ColumnMap& c = cfg.columns;
  j["columns"] = {{"frame", c.frame},
                  {"track_id", c.track_id},
                  {"x", c.x},
                  {"y", c.y},
                  {"width", c.width},
                  {"height", c.height},
                  {"x_velocity", c.x_velocity},
                  {"y_velocity", c.y_velocity},
                  {"x_acceleration", c.x_acceleration},
                  {"y_acceleration", c.y_acceleration},
                  {"lane_id", c.lane_id},
                  {"preceding_id", c.preceding_id},
                  {"meta_id", c.meta_id},
                  {"driving_direction", c.driving_direction},
                  {"num_lane_changes", c.num_lane_changes},
                  {"meta_width", c.meta_width},
                  {"meta_height", c.meta_height},
                  {"rec_id", c.rec_id},
                  {"frame_rate", c.frame_rate},
                  {"speed_limit", c.speed_limit},
                  {"upper_lane_markings", c.upper_lane_markings},
                  {"lower_lane_markings", c.lower_lane_markings},
                  {"has_merge_lane", c.has_merge_lane}};
  j["merge_recording_ids"] = cfg.merge_recording_ids;
  j["manifest_path"] = cfg.manifest_path;
  j["results_path"] = cfg.results_path;
  j["heatmap"] = {{"enabled", cfg.heatmap_enabled}, {"count", cfg.heatmap_count},
                  {"nx", cfg.heatmap_nx},           {"ny", cfg.heatmap_ny},
                  {"x_back", cfg.heatmap_x_back},   {"x_fwd", cfg.heatmap_x_fwd}};
  j["grid"] = {{"c", cfg.grid.c_values},
               {"sigma_x", cfg.grid.sigma_x_values},
               {"sigma_y", cfg.grid.sigma_y_values}};
  j["synth_spec_path"] = cfg.synth_spec_path;
  return j.dump(2) + "\n";
}

void validate_config(const PipelineConfig& cfg) {
  auto bad = [](const std::string& what) { throw ConfigError("config: " + what); };
  if (cfg.jobs < 1) bad("jobs must be >= 1");
  if (!(cfg.constants.c > 0)) bad("constants.c must be positive");
  if (!(cfg.constants.sigma_x > 0)) bad("constants.sigma_x must be positive");
  if (!(cfg.constants.sigma_y > 0)) bad("constants.sigma_y must be positive");
  if (cfg.horizon < 1) bad("horizon must be >= 1");
  if (!cfg.optimizer.theta_init.allFinite()) bad("optimizer.theta_init must be finite");
  if (!(cfg.optimizer.tol > 0)) bad("optimizer.tol must be positive");
  if (cfg.optimizer.max_iters < 1) bad("optimizer.max_iters must be >= 1");
  if (!(cfg.optimizer.max_step > 0)) bad("optimizer.max_step must be positive");
  if (cfg.agent.horizon < 1) bad("agent.horizon must be >= 1");
  if (!(cfg.agent.dt > 0)) bad("agent.dt must be positive");
  if (!(cfg.agent.ax_min < cfg.agent.ax_max)) bad("agent ax bounds must satisfy min < max");
  if (!(cfg.agent.ay_min < cfg.agent.ay_max)) bad("agent ay bounds must satisfy min < max");
  if (cfg.agent.replan_stride < 1 || cfg.agent.replan_stride > cfg.agent.horizon) {
    bad("agent.replan_stride must lie in [1, agent.horizon]");
  }
  if (cfg.agent.max_planner_iters < 1) bad("agent.max_planner_iters must be >= 1");
  if (!(cfg.agent.planner_tol > 0)) bad("agent.planner_tol must be positive");
  if (cfg.heatmap_count < 0) bad("heatmap.count must be >= 0");
  if (cfg.heatmap_nx < 2 || cfg.heatmap_ny < 2) bad("heatmap grid needs nx, ny >= 2");
  if (!(cfg.heatmap_x_back + cfg.heatmap_x_fwd > 0)) bad("heatmap x range must be positive");
  if (cfg.grid.c_values.empty() || cfg.grid.sigma_x_values.empty() ||
      cfg.grid.sigma_y_values.empty()) {
    bad("grid value lists must be non-empty");
  }
  for (double v : cfg.grid.c_values) {
    if (!(v > 0)) bad("grid.c values must be positive");
  }
  for (double v : cfg.grid.sigma_x_values) {
    if (!(v > 0)) bad("grid.sigma_x values must be positive");
  }
  for (double v : cfg.grid.sigma_y_values) {
    if (!(v > 0)) bad("grid.sigma_y values must be positive");
  }
}

// -------- synth --------

namespace {

TrackScript parse_track_script(const json& j, const std::string& path, const std::string& origin) {
  StrictObject o(j, path, origin);
  TrackScript s;
  std::string kind = "scripted";
  o.get("kind", kind);
  if (kind == "scripted") {
    s.kind = TrackScript::Kind::kScripted;
  } else if (kind == "agent") {
    s.kind = TrackScript::Kind::kAgent;
  } else {
    throw ConfigError(origin + ": '" + path + ".kind' must be \"scripted\" or \"agent\"");
  }
  o.get("id", s.id);
  o.get("driving_direction", s.driving_direction);
  o.get("start_frame", s.start_frame);
  o.get("n_frames", s.n_frames);
  o.get("x0", s.x0);
  o.get("lane", s.lane);
  o.get("lane_offset", s.lane_offset);
  if (const json* e = o.sub("speed")) {
    StrictObject sp(*e, path + ".speed", origin);
    sp.get("v0", s.speed.v0);
    sp.get("accel", s.speed.accel);
    sp.get("sine_amp", s.speed.sine_amp);
    sp.get("sine_period_s", s.speed.sine_period_s);
    sp.finish();
  }
  if (const json* e = o.sub("lane_change")) {
    if (!e->is_null()) {
      StrictObject lc(*e, path + ".lane_change", origin);
      LaneChangeScript script;
      lc.get("time_s", script.time_s);
      lc.get("to_lane", script.to_lane);
      lc.get("duration_s", script.duration_s);
      lc.finish();
      s.lane_change = script;
    }
  }
  o.get("length", s.length);
  o.get("width", s.width);
  o.get_vec4("theta", s.theta);
  o.finish();
  return s;
}

std::vector<FixtureSpec> parse_synth_spec(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const std::string origin = path.string();
  StrictObject root(j, "", origin);
  const json* fixtures = root.sub("fixtures");
  if (fixtures == nullptr || !fixtures->is_array() || fixtures->empty()) {
    throw ConfigError(origin + ": 'fixtures' must be a non-empty array");
  }
  std::vector<FixtureSpec> specs;
  std::set<int> rec_ids;
  for (std::size_t i = 0; i < fixtures->size(); ++i) {
    std::string p = "fixtures[" + std::to_string(i) + "]";
    StrictObject o((*fixtures)[i], p, origin);
    FixtureSpec spec;
    o.get("recording_id", spec.recording_id);
    o.get("frame_rate", spec.frame_rate);
    o.get("speed_limit", spec.speed_limit);
    o.get("has_merge_lane", spec.has_merge_lane);
    o.get("upper_markings", spec.upper_markings);
    o.get("lower_markings", spec.lower_markings);
    o.get("position_jitter_sigma", spec.position_jitter_sigma);
    o.get("seed", spec.seed);
    if (const json* tracks = o.sub("tracks")) {
      if (!tracks->is_array()) throw ConfigError(origin + ": '" + p + ".tracks' must be an array");
      for (std::size_t t = 0; t < tracks->size(); ++t) {
        spec.tracks.push_back(
            parse_track_script((*tracks)[t], p + ".tracks[" + std::to_string(t) + "]", origin));
      }
    }
    o.finish();
    if (!(spec.frame_rate > 0)) {
      throw ConfigError(origin + ": '" + p + ".frame_rate' must be positive");
    }
    if (spec.tracks.empty()) {
      throw ConfigError(origin + ": '" + p + ".tracks' must be non-empty");
    }
    if (!rec_ids.insert(spec.recording_id).second) {
      throw ConfigError(origin + ": duplicate recording_id " +
                        std::to_string(spec.recording_id));
    }
    specs.push_back(std::move(spec));
  }
  root.finish();
  return specs;
}

void require_out_dir(const PipelineConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("config: out_dir is required for this stage");
  fs::create_directories(cfg.out_dir);
}

void require_data_dir(const PipelineConfig& cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("config: data_dir is required for this stage");
}

void write_stage_config(const PipelineConfig& cfg, const std::string& stage) {
  write_text_file(fs::path(cfg.out_dir) / ("config_" + stage + ".json"), config_to_json(cfg));
}

}  // namespace

int cmd_synth(const PipelineConfig& cfg) {
  validate_config(cfg);
  if (cfg.synth_spec_path.empty()) {
    throw ConfigError("config: synth_spec_path is required for the synth stage");
  }
  require_out_dir(cfg);
  std::vector<FixtureSpec> specs = parse_synth_spec(cfg.synth_spec_path);
  write_stage_config(cfg, "synth");
  for (const FixtureSpec& spec : specs) {
    std::string prefix = emit_fixture(spec, cfg.out_dir);
    std::cout << "synth: wrote " << prefix << "{recordingMeta,tracksMeta,tracks}.csv ("
              << spec.tracks.size() << " tracks)\n";
  }
  std::cout << "synth: " << specs.size() << " recording(s) in " << cfg.out_dir << "\n";
  return kExitOk;
}

// -------- shared scan --------

namespace {

struct RecordingReport {
  std::string prefix;
  int recording_id = -1;
  double frame_rate = 0;
  std::string skipped;  // non-empty: excluded by policy (e.g. merge lane)
  std::string error;    // non-empty: failed to load/extract
  std::vector<Demonstration> demos;
};

std::vector<RecordingReport> scan_recordings(const PipelineConfig& cfg) {
  require_data_dir(cfg);
  std::vector<std::string> prefixes = find_recording_prefixes(cfg.data_dir);
  if (prefixes.empty()) {
    throw DataIntegrityError("no recordings found in " + cfg.data_dir);
  }
  std::vector<RecordingReport> reports;
  for (const std::string& prefix : prefixes) {
    RecordingReport r;
    r.prefix = prefix;
    try {
      Recording rec = load_recording(cfg.data_dir, prefix, cfg.columns);
      r.recording_id = rec.meta.recording_id;
      r.frame_rate = rec.meta.frame_rate;
      bool merge_listed =
          std::find(cfg.merge_recording_ids.begin(), cfg.merge_recording_ids.end(),
                    rec.meta.recording_id) != cfg.merge_recording_ids.end();
      if (rec.meta.has_merge_lane || merge_listed) {
        r.skipped = merge_listed ? "listed in merge_recording_ids" : "merge lane flagged";
      } else {
        r.demos = extract_left_lane_changes(canonicalize(rec));
      }
    } catch (const RecordingRejected& e) {
      r.skipped = e.what();
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<Demonstration> flatten_demos(std::vector<RecordingReport>& reports) {
  std::vector<Demonstration> demos;
  for (RecordingReport& r : reports) {
    for (Demonstration& d : r.demos) demos.push_back(std::move(d));
    r.demos.clear();
  }
  return demos;
}

fs::path manifest_path_of(const PipelineConfig& cfg) {
  return cfg.manifest_path.empty() ? fs::path(cfg.out_dir) / "manifest.json"
                                   : fs::path(cfg.manifest_path);
}

fs::path results_path_of(const PipelineConfig& cfg) {
  return cfg.results_path.empty() ? fs::path(cfg.out_dir) / "training_results.jsonl"
                                  : fs::path(cfg.results_path);
}

}  // namespace

int cmd_extract(const PipelineConfig& cfg) {
  validate_config(cfg);
  require_out_dir(cfg);
  std::vector<RecordingReport> reports = scan_recordings(cfg);
  write_stage_config(cfg, "extract");

  ojson manifest;
  manifest["data_dir"] = cfg.data_dir;
  manifest["recordings"] = ojson::array();
  int n_demos = 0;
  bool partial = false;
  for (const RecordingReport& r : reports) {
    ojson rec;
    rec["prefix"] = r.prefix;
    if (r.recording_id >= 0) {
      rec["recording_id"] = r.recording_id;
      rec["frame_rate"] = r.frame_rate;
    } else {
      rec["recording_id"] = nullptr;
      rec["frame_rate"] = nullptr;
    }
    rec["skipped"] = r.skipped.empty() ? ojson(nullptr) : ojson(r.skipped);
    rec["error"] = r.error.empty() ? ojson(nullptr) : ojson(r.error);
    rec["demos"] = ojson::array();
    for (const Demonstration& d : r.demos) {
      ojson e;
      e["demo_id"] = d.demo_id;
      e["ego_id"] = d.ego.id;
      e["driving_direction"] = d.ego.driving_direction;
      e["first_frame"] = d.first_frame();
      e["last_frame"] = d.last_frame();
      e["frames"] = d.frame_count();
      e["n_neighbors"] = d.neighbors.size();
      e["v_d"] = d.v_d;
      e["dt"] = d.dt;
      rec["demos"].push_back(std::move(e));
      ++n_demos;
    }
    manifest["recordings"].push_back(std::move(rec));
    if (!r.error.empty()) partial = true;
  }
  manifest["n_demos"] = n_demos;

  fs::path mpath = manifest_path_of(cfg);
  if (mpath.has_parent_path()) fs::create_directories(mpath.parent_path());
  write_text_file(mpath, manifest.dump(2) + "\n");

  std::cout << "extract: " << reports.size() << " recording(s), " << n_demos
            << " demonstration(s) -> " << mpath.string() << "\n";
  for (const RecordingReport& r : reports) {
    if (!r.skipped.empty()) std::cout << "extract: skipped " << r.prefix << ": " << r.skipped << "\n";
    if (!r.error.empty()) std::cout << "extract: ERROR " << r.prefix << ": " << r.error << "\n";
  }
  return partial ? kExitPartial : kExitOk;
}

namespace {

struct TrainLine {
  std::string demo_id;
  int n_segments = 0;
  TrainingResult res;
  std::string error;
};

ojson train_line_json(const TrainLine& line) {
  ojson j;
  j["demo_id"] = line.demo_id;
  if (!line.error.empty()) {
    j["status"] = "error";
    j["message"] = line.error;
    return j;
  }
  const TrainingResult& r = line.res;
  j["status"] = to_string(r.status);
  if (r.status == TrainStatus::kConverged) {
    j["theta"] = {r.weights[0], r.weights[1], r.weights[2], r.weights[3]};
  } else {
    j["theta"] = nullptr;
  }
  j["final_nll"] = r.final_nll;
  j["iterations"] = r.iterations;
  j["bad_segment"] = r.bad_segment;
  j["init_jacobian"] = {r.diagnostics.init_jacobian[0], r.diagnostics.init_jacobian[1],
                        r.diagnostics.init_jacobian[2], r.diagnostics.init_jacobian[3]};
  j["init_jacobian_complete"] = r.diagnostics.init_jacobian_complete;
  j["vel_dominance"] = r.diagnostics.vel_dominance;
  j["n_segments"] = line.n_segments;
  j["wall_time_ms"] = r.wall_time_ms;
  return j;
}

}  // namespace

int cmd_train(const PipelineConfig& cfg) {
  validate_config(cfg);
  require_out_dir(cfg);
  std::vector<RecordingReport> reports = scan_recordings(cfg);
  std::vector<Demonstration> demos = flatten_demos(reports);
  if (demos.empty()) {
    throw InsufficientDataError("no demonstrations extracted from " + cfg.data_dir);
  }
  write_stage_config(cfg, "train");

  std::vector<TrainLine> lines(demos.size());
  parallel_for(demos.size(), cfg.jobs, [&](std::size_t i) {
    lines[i].demo_id = demos[i].demo_id;
    lines[i].n_segments = demos[i].frame_count() / cfg.horizon;
    try {
      lines[i].res = train(demos[i], cfg.horizon, cfg.constants, cfg.optimizer);
    } catch (const std::exception& e) {
      lines[i].error = e.what();
    }
  });

  fs::path rpath = results_path_of(cfg);
  if (rpath.has_parent_path()) fs::create_directories(rpath.parent_path());
  std::string out_text;
  int converged = 0, failed = 0, errors = 0;
  for (const TrainLine& line : lines) {
    out_text += train_line_json(line).dump() + "\n";
    if (!line.error.empty()) {
      ++errors;
    } else if (line.res.status == TrainStatus::kConverged) {
      ++converged;
    } else {
      ++failed;
    }
  }
  write_text_file(rpath, out_text);

  std::cout << "train: " << demos.size() << " demonstration(s): " << converged << " converged, "
            << failed << " failed, " << errors << " error(s) -> " << rpath.string() << "\n";
  return errors > 0 ? kExitPartial : kExitOk;
}

// -------- validate --------

namespace {

struct ResultEntry {
  std::string status;
  RewardWeights theta = RewardWeights::Zero();
};

std::map<std::string, ResultEntry> read_results(const fs::path& path) {
  if (!fs::exists(path)) {
    throw DataIntegrityError("training results not found: " + path.string() +
                             " (run the train stage first or set results_path)");
  }
  std::ifstream in(path);
  if (!in) throw DataIntegrityError("cannot read " + path.string());
  std::map<std::string, ResultEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataIntegrityError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("demo_id") || !j.contains("status")) {
      throw DataIntegrityError(path.string() + ":" + std::to_string(line_no) +
                               ": lines need demo_id and status");
    }
    ResultEntry entry;
    entry.status = j.at("status").get<std::string>();
    if (j.contains("theta") && j.at("theta").is_array()) {
      auto v = j.at("theta").get<std::vector<double>>();
      if (v.size() != 4) {
        throw DataIntegrityError(path.string() + ":" + std::to_string(line_no) +
                                 ": theta must have 4 elements");
      }
      for (int i = 0; i < 4; ++i) entry.theta[i] = v[static_cast<std::size_t>(i)];
    }
    std::string id = j.at("demo_id").get<std::string>();
    if (!out.emplace(id, entry).second) {
      throw DataIntegrityError(path.string() + ": duplicate demo_id " + id);
    }
  }
  return out;
}

struct DemoEval {
  std::string demo_id;
  std::string training_status;  // "", "missing", or a TrainStatus string
  std::string error;
  bool rolled = false;
  RewardWeights theta = RewardWeights::Zero();
  AgentRollout roll;
  TacticalOutcome human_out, model_out;
  PhaseSeries human_series, model_series;
};

void write_rollout_csv(const fs::path& path, const AgentRollout& roll, int replan_stride) {
  csv::Writer w({"frame", "x", "y", "vx", "vy", "ax", "ay", "planner_objective",
                 "planner_iterations"});
  for (std::size_t i = 0; i < roll.states.size(); ++i) {
    const State& s = roll.states[i];
    std::string ax, ay, obj, iters;
    if (i < roll.actions.size()) {
      ax = csv::Writer::format(roll.actions[i].x());
      ay = csv::Writer::format(roll.actions[i].y());
      if (i % static_cast<std::size_t>(replan_stride) == 0) {
        std::size_t replan = i / static_cast<std::size_t>(replan_stride);
        obj = csv::Writer::format(roll.planner_values[replan]);
        iters = std::to_string(roll.planner_iterations[replan]);
      }
    }
    w.add_row({std::to_string(roll.first_frame + static_cast<int>(i)), csv::Writer::format(s.x),
               csv::Writer::format(s.y), csv::Writer::format(s.vx), csv::Writer::format(s.vy),
               ax, ay, obj, iters});
  }
  w.write_file(path);
}

ojson comparison_json(const PairedComparison& c) {
  return ojson{{"n", c.n},
               {"df", c.df},
               {"mean_human", c.mean_human},
               {"mean_model", c.mean_model},
               {"t", c.t},
               {"p", c.p},
               {"cohen_d", c.cohen_d}};
}

void write_demo_heatmap(const PipelineConfig& cfg, const Demonstration& demo,
                        const DemoEval& eval, const fs::path& dir) {
  // Snapshot at the human lane-change frame: the moment the model is supposed
  // to reproduce. Falls back to the mid-frame when no change was detected.
  EgoPath human_path = path_from_track(demo.ego);
  std::optional<int> lc = detect_lane_change(human_path, demo.layout);
  int frame = lc.value_or(demo.first_frame() + demo.frame_count() / 2);
  const TrackFrame* ego_at = demo.ego.at(frame);
  if (ego_at == nullptr) return;  // cannot happen: frame lies in the span

  std::vector<Eigen::Vector2d> neighbors;
  for (const Track& nb : demo.neighbors) {
    const TrackFrame* f = nb.at(frame);
    if (f != nullptr) neighbors.push_back({f->x, f->y});
  }

  HeatmapGrid grid;
  grid.x0 = ego_at->x - cfg.heatmap_x_back;
  grid.x1 = ego_at->x + cfg.heatmap_x_fwd;
  grid.nx = cfg.heatmap_nx;
  grid.y0 = demo.layout.bound_low;
  grid.y1 = demo.layout.bound_high;
  grid.ny = cfg.heatmap_ny;
  Heatmap map = heatmap(eval.theta, cfg.constants, demo.layout, neighbors, grid);

  csv::Writer w({"x", "y", "value"});
  for (int iy = 0; iy < grid.ny; ++iy) {
    double y = grid.y0 + (grid.y1 - grid.y0) * iy / (grid.ny - 1);
    for (int ix = 0; ix < grid.nx; ++ix) {
      double x = grid.x0 + (grid.x1 - grid.x0) * ix / (grid.nx - 1);
      w.add_row({csv::Writer::format(x), csv::Writer::format(y),
                 csv::Writer::format(map.values[static_cast<std::size_t>(iy) *
                                                    static_cast<std::size_t>(grid.nx) +
                                                static_cast<std::size_t>(ix)])});
    }
  }
  w.write_file(dir / (demo.demo_id + ".csv"));

  ojson meta;
  meta["demo_id"] = demo.demo_id;
  meta["frame"] = frame;
  meta["theta"] = {eval.theta[0], eval.theta[1], eval.theta[2], eval.theta[3]};
  meta["grid"] = {{"x0", grid.x0}, {"x1", grid.x1}, {"nx", grid.nx},
                  {"y0", grid.y0}, {"y1", grid.y1}, {"ny", grid.ny}};
  meta["n_neighbors"] = neighbors.size();
  meta["csv"] = demo.demo_id + ".csv";
  write_text_file(dir / (demo.demo_id + ".json"), meta.dump(2) + "\n");
}

}  // namespace

int cmd_validate(const PipelineConfig& cfg) {
  validate_config(cfg);
  require_out_dir(cfg);
  std::map<std::string, ResultEntry> results = read_results(results_path_of(cfg));
  std::vector<RecordingReport> reports = scan_recordings(cfg);
  std::vector<Demonstration> demos = flatten_demos(reports);
  if (demos.empty()) {
    throw InsufficientDataError("no demonstrations extracted from " + cfg.data_dir);
  }
  write_stage_config(cfg, "validate");

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir / "rollouts");

  std::vector<DemoEval> evals(demos.size());
  parallel_for(demos.size(), cfg.jobs, [&](std::size_t i) {
    const Demonstration& demo = demos[i];
    DemoEval& e = evals[i];
    e.demo_id = demo.demo_id;
    auto it = results.find(demo.demo_id);
    if (it == results.end()) {
      e.training_status = "missing";
      e.error = "no entry in training results";
      return;
    }
    e.training_status = it->second.status;
    if (e.training_status != "converged") return;  // failed training: skipped, not an error
    e.theta = it->second.theta;
    try {
      AgentConfig acfg = cfg.agent;
      if (!cfg.agent_dt_override) acfg.dt = demo.dt;
      e.roll = rollout(demo, e.theta, acfg, cfg.constants);

      EgoPath human_path = path_from_track(demo.ego);
      EgoPath model_path = path_from_rollout(e.roll, demo.ego.length, demo.ego.width);
      e.human_out = classify(human_path, demo.neighbors, demo.layout);
      e.model_out = classify(model_path, demo.neighbors, demo.layout);

      e.human_series = preceding_series(demo.demo_id, "human", human_path, demo.neighbors,
                                        demo.layout, e.human_out.label,
                                        detect_lane_change(human_path, demo.layout));
      e.model_series = preceding_series(demo.demo_id, "model", model_path, demo.neighbors,
                                        demo.layout, e.model_out.label,
                                        detect_lane_change(model_path, demo.layout));
      e.rolled = true;
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
  });

  // Serial, demo-ordered emission keeps artifacts byte-stable across reruns.
  int replan_stride = cfg.agent.replan_stride;
  std::map<std::string, TacticalLabel> model_labels, human_labels;
  std::vector<PhaseSeries> all_series;
  csv::Writer tactical_csv({"demo_id", "human_label", "human_event_frame", "model_label",
                            "model_event_frame"});
  std::vector<std::pair<std::string, std::string>> errors;
  int n_converged = 0, n_failed_training = 0;
  for (const DemoEval& e : evals) {
    if (!e.error.empty()) {
      errors.push_back({e.demo_id, e.error});
      continue;
    }
    if (!e.rolled) {
      ++n_failed_training;
      continue;
    }
    ++n_converged;
    write_rollout_csv(out_dir / "rollouts" / (e.demo_id + ".csv"), e.roll, replan_stride);
    human_labels[e.demo_id] = e.human_out.label;
    model_labels[e.demo_id] = e.model_out.label;
    tactical_csv.add_row(
        {e.demo_id, to_string(e.human_out.label),
         e.human_out.event_frame ? std::to_string(*e.human_out.event_frame) : "",
         to_string(e.model_out.label),
         e.model_out.event_frame ? std::to_string(*e.model_out.event_frame) : ""});
    all_series.push_back(e.human_series);
    all_series.push_back(e.model_series);
  }
  tactical_csv.write_file(out_dir / "tactical.csv");

  ojson tactical_json;
  tactical_json["n"] = n_converged;
  tactical_json["rows"] = ojson::array();
  if (!model_labels.empty()) {
    TacticalTable table = tabulate(model_labels, human_labels);
    for (const TacticalRow& row : table.rows) {
      tactical_json["rows"].push_back({{"label", to_string(row.label)},
                                       {"model_count", row.model_count},
                                       {"model_pct", row.model_pct},
                                       {"human_count", row.human_count},
                                       {"human_pct", row.human_pct}});
    }
    tactical_json["model_desirable_pct"] = table.model_desirable_pct;
    tactical_json["human_desirable_pct"] = table.human_desirable_pct;
  }
  write_text_file(out_dir / "tactical_summary.json", tactical_json.dump(2) + "\n");

  emit_phase_data(all_series, out_dir / "operational");

  ojson op;
  std::map<std::string, std::map<std::string, int>> exclusion_counts;
  for (const PhaseSeries& s : all_series) {
    if (s.exclusion != Exclusion::kNone) ++exclusion_counts[s.source][to_string(s.exclusion)];
  }
  op["exclusions"] = ojson::object();
  for (const auto& [source, counts] : exclusion_counts) {
    ojson c = ojson::object();
    for (const auto& [reason, n] : counts) c[reason] = n;
    op["exclusions"][source] = std::move(c);
  }
  {
    std::vector<PhaseSeries> human_series, model_series;
    for (const PhaseSeries& s : all_series) {
      (s.source == "human" ? human_series : model_series).push_back(s);
    }
    try {
      LaneChangeStats stats = lane_change_point_stats(human_series, model_series);
      op["lane_change_point"] = {{"inv_ttc", comparison_json(stats.inv_ttc)},
                                 {"t_gap", comparison_json(stats.t_gap)}};
    } catch (const InsufficientDataError& ex) {
      op["lane_change_point"] = {{"error", ex.what()}};
    }
  }
  write_text_file(out_dir / "operational_stats.json", op.dump(2) + "\n");

  if (cfg.heatmap_enabled && cfg.heatmap_count > 0) {
    fs::create_directories(out_dir / "heatmaps");
    int written = 0;
    for (std::size_t i = 0; i < demos.size() && written < cfg.heatmap_count; ++i) {
      if (!evals[i].rolled) continue;
      write_demo_heatmap(cfg, demos[i], evals[i], out_dir / "heatmaps");
      ++written;
    }
  }

  ojson summary;
  summary["n_demos"] = demos.size();
  summary["n_converged"] = n_converged;
  summary["n_failed_training"] = n_failed_training;
  summary["errors"] = ojson::array();
  for (const auto& [id, msg] : errors) {
    summary["errors"].push_back({{"demo_id", id}, {"message", msg}});
  }
  write_text_file(out_dir / "validate_summary.json", summary.dump(2) + "\n");

  std::cout << "validate: " << demos.size() << " demonstration(s): " << n_converged
            << " rolled out, " << n_failed_training << " without converged training, "
            << errors.size() << " error(s) -> " << out_dir.string() << "\n";
  return errors.empty() ? kExitOk : kExitPartial;
}

int cmd_gridsearch(const PipelineConfig& cfg) {
  validate_config(cfg);
  require_out_dir(cfg);
  std::vector<RecordingReport> reports = scan_recordings(cfg);
  std::vector<Demonstration> demos = flatten_demos(reports);
  if (demos.empty()) {
    throw InsufficientDataError("no demonstrations extracted from " + cfg.data_dir);
  }
  write_stage_config(cfg, "gridsearch");

  std::vector<GridEntry> entries =
      grid_search(demos, cfg.grid, cfg.horizon, cfg.optimizer, cfg.agent, cfg.jobs);

  int n_tied = 0;
  for (const GridEntry& e : entries) {
    if (e.desirable == entries.front().desirable) ++n_tied;
  }

  ojson j;
  j["n_demos"] = demos.size();
  j["n_tied_best"] = n_tied;
  j["entries"] = ojson::array();
  for (const GridEntry& e : entries) {
    j["entries"].push_back({{"c", e.constants.c},
                            {"sigma_x", e.constants.sigma_x},
                            {"sigma_y", e.constants.sigma_y},
                            {"desirable", e.desirable},
                            {"converged", e.converged},
                            {"failed", e.failed},
                            {"collisions", e.collisions},
                            {"offroad", e.offroad},
                            {"lane_changes", e.lane_changes},
                            {"car_following", e.car_following}});
  }
  write_text_file(fs::path(cfg.out_dir) / "gridsearch.json", j.dump(2) + "\n");

  const GridEntry& best = entries.front();
  std::cout << "gridsearch: " << entries.size() << " combination(s) over " << demos.size()
            << " demonstration(s); best c=" << best.constants.c
            << " sigma_x=" << best.constants.sigma_x << " sigma_y=" << best.constants.sigma_y
            << " (" << best.desirable << " desirable)";
  if (n_tied > 1) {
    std::cout << "; tied with " << (n_tied - 1)
              << " other combination(s), listed first in grid order";
  }
  std::cout << "\n";
  return kExitOk;
}

}  // namespace dmval
