#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "dmval/reward.hpp"
#include "dmval/track_data.hpp"

namespace dmval {

// One single-left-lane-change demonstration: the ego's full recorded track in
// canonical coordinates, every temporally overlapping same-roadway track
// clipped to the ego's frame span, the roadway geometry, the desired speed
// (max recorded longitudinal velocity) and the frame period.
struct Demonstration {
  std::string demo_id;  // "r<recording>_t<track>"
  int recording_id = 0;
  Track ego;
  std::vector<Track> neighbors;
  RoadLayout layout;
  double v_d = 0;
  double dt = 1.0 / 25.0;

  int first_frame() const { return ego.first_frame(); }
  int last_frame() const { return ego.last_frame(); }
  int frame_count() const { return static_cast<int>(ego.frames.size()); }
};

// A horizon-sized window of the demonstration: the initial position and the
// demonstrated action sequence (per-frame velocities, interleaved x/y). The
// k-th action is the recorded velocity at frame start_frame + k; the window's
// resulting states occupy frames start_frame+1 .. start_frame+N.
struct Segment {
  int start_frame = 0;
  State initial;                // position at start_frame
  Eigen::VectorXd actions;      // 2N
  double dt = 1.0 / 25.0;
  int horizon() const { return static_cast<int>(actions.size()) / 2; }
};

// Demonstrations for every ego track with exactly one recorded lane change
// whose canonical lane index increases (a left change). The geometric
// single-left-crossing invariant is re-verified from the trajectory; tracks
// failing it are skipped. Recordings with a merge lane throw
// RecordingRejected. Result is sorted by ego track id.
std::vector<Demonstration> extract_left_lane_changes(const CanonicalRecording& rec);

// Consecutive non-overlapping N-frame windows; the trailing remainder of
// frame_count % N frames is dropped.
std::vector<Segment> segment_demo(const Demonstration& demo, int horizon);

// Scene context covering the ego span plus one extra frame (the final
// resulting state of an exact-fit last segment falls one frame past the
// span; neighbor data stays clipped to the span, so that frame is empty).
SceneContext demo_scene(const Demonstration& demo);

// Scene context for receding-horizon planning over the whole demo: covers
// ego span plus `horizon` frames, absent neighbors beyond their records.
SceneContext rollout_scene(const Demonstration& demo, int horizon);

}  // namespace dmval
