#include "dmval/scenario_extraction.hpp"

#include <algorithm>

#include "dmval/errors.hpp"

namespace dmval {

namespace {

// Exactly one lane-index transition, between valid lanes, one lane to the
// left. Entering the shoulder or skipping two lanes in one frame disqualifies.
bool single_left_crossing(const Track& ego, const RoadLayout& layout) {
  int transitions = 0;
  bool left_single = true;
  for (std::size_t i = 1; i < ego.frames.size(); ++i) {
    int prev = ego.frames[i - 1].lane_id;
    int cur = ego.frames[i].lane_id;
    if (cur == prev) continue;
    ++transitions;
    bool valid = prev >= 1 && prev <= layout.n_lanes() && cur >= 1 && cur <= layout.n_lanes();
    if (!valid || cur != prev + 1) left_single = false;
  }
  return transitions == 1 && left_single;
}

Track clip_track(const Track& t, int first, int last) {
  Track out = t;
  out.frames.clear();
  for (const TrackFrame& f : t.frames) {
    if (f.frame >= first && f.frame <= last) out.frames.push_back(f);
  }
  return out;
}

}  // namespace

std::vector<Demonstration> extract_left_lane_changes(const CanonicalRecording& rec) {
  if (rec.meta.has_merge_lane) {
    throw RecordingRejected("recording " + std::to_string(rec.meta.recording_id) +
                            " has a merge lane; lane-change intent is ambiguous there");
  }
  std::vector<Demonstration> demos;
  for (const Track& ego : rec.tracks) {
    if (ego.num_lane_changes != 1) continue;
    const RoadLayout& layout = rec.layout_for(ego.driving_direction);
    if (!single_left_crossing(ego, layout)) continue;
    if (ego.frames.empty()) continue;

    Demonstration d;
    d.demo_id = "r" + std::to_string(rec.meta.recording_id) + "_t" + std::to_string(ego.id);
    d.recording_id = rec.meta.recording_id;
    d.ego = ego;
    d.layout = layout;
    d.dt = rec.meta.dt();
    double v_d = ego.frames.front().vx;
    for (const TrackFrame& f : ego.frames) v_d = std::max(v_d, f.vx);
    d.v_d = v_d;
    for (const Track& other : rec.tracks) {
      if (other.id == ego.id || other.driving_direction != ego.driving_direction) continue;
      if (other.last_frame() < ego.first_frame() || other.first_frame() > ego.last_frame()) {
        continue;
      }
      d.neighbors.push_back(clip_track(other, ego.first_frame(), ego.last_frame()));
    }
    demos.push_back(std::move(d));
  }
  std::sort(demos.begin(), demos.end(),
            [](const Demonstration& a, const Demonstration& b) { return a.ego.id < b.ego.id; });
  return demos;
}

std::vector<Segment> segment_demo(const Demonstration& demo, int horizon) {
  if (horizon < 1) throw ContractError("segment horizon must be >= 1");
  std::vector<Segment> segments;
  const auto& frames = demo.ego.frames;
  int n_windows = static_cast<int>(frames.size()) / horizon;  // remainder dropped
  for (int s = 0; s < n_windows; ++s) {
    int base = s * horizon;
    Segment seg;
    seg.dt = demo.dt;
    seg.start_frame = frames[static_cast<std::size_t>(base)].frame;
    seg.initial.x = frames[static_cast<std::size_t>(base)].x;
    seg.initial.y = frames[static_cast<std::size_t>(base)].y;
    seg.actions.resize(2 * horizon);
    for (int j = 0; j < horizon; ++j) {
      const TrackFrame& f = frames[static_cast<std::size_t>(base + j)];
      seg.actions[2 * j] = f.vx;
      seg.actions[2 * j + 1] = f.vy;
    }
    segments.push_back(std::move(seg));
  }
  return segments;
}

namespace {

SceneContext scene_over(const Demonstration& demo, int extra_frames) {
  int first = demo.first_frame();
  int count = demo.frame_count() + extra_frames;
  std::vector<std::vector<Eigen::Vector2d>> frames(static_cast<std::size_t>(count));
  for (const Track& nb : demo.neighbors) {
    for (const TrackFrame& f : nb.frames) {
      int idx = f.frame - first;
      if (idx >= 0 && idx < count) {
        frames[static_cast<std::size_t>(idx)].emplace_back(f.x, f.y);
      }
    }
  }
  return SceneContext(demo.layout, demo.v_d, first, std::move(frames));
}

}  // namespace

SceneContext demo_scene(const Demonstration& demo) { return scene_over(demo, 1); }

SceneContext rollout_scene(const Demonstration& demo, int horizon) {
  return scene_over(demo, horizon);
}

}  // namespace dmval
