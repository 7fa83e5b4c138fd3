#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmval/agent_rollout.hpp"
#include "dmval/scenario_extraction.hpp"
#include "dmval/track_data.hpp"

namespace dmval {

// One trajectory under tactical scrutiny, human or simulated: per-frame
// states at contiguous absolute frames plus the vehicle's footprint.
struct EgoPath {
  int first_frame = 0;
  std::vector<State> states;
  double length = 0;
  double width = 0;

  int frame_count() const { return static_cast<int>(states.size()); }
  int last_frame() const { return first_frame + frame_count() - 1; }
};

EgoPath path_from_track(const Track& t);
EgoPath path_from_rollout(const AgentRollout& r, double length, double width);

enum class TacticalLabel { kCollision, kOffRoad, kLaneChange, kCarFollowing };

std::string to_string(TacticalLabel label);

// First frame with strict axis-aligned rectangle overlap against any
// neighbor present at that frame (centers closer than the half-length /
// half-width sums in both axes; touching edges do not collide).
std::optional<int> detect_collision(const EgoPath& path, const std::vector<Track>& neighbors);

// First frame whose center y leaves [bound_low, bound_high]; the boundary
// itself is still on the road.
std::optional<int> detect_offroad(const EgoPath& path, const RoadLayout& layout);

// First frame on the far side of a lane divider: the first frame whose lane
// index differs from the previous frame's, both being valid lanes. Crossing
// the outermost marking is not a divider crossing (that trajectory is headed
// off the road instead).
std::optional<int> detect_lane_change(const EgoPath& path, const RoadLayout& layout);

struct TacticalOutcome {
  TacticalLabel label = TacticalLabel::kCarFollowing;
  std::optional<int> event_frame;  // collision/offroad/lane-change frame
};

// Severity hierarchy: Collision > OffRoad > LaneChange > CarFollowing.
// A trajectory with several events is labeled by the most severe one.
TacticalOutcome classify(const EgoPath& path, const std::vector<Track>& neighbors,
                         const RoadLayout& layout);

struct TacticalRow {
  TacticalLabel label;
  int model_count = 0;
  double model_pct = 0;
  int human_count = 0;
  double human_pct = 0;
};

struct TacticalTable {
  std::vector<TacticalRow> rows;  // fixed order: Collision, OffRoad, LaneChange, CarFollowing
  int n = 0;
  double model_desirable_pct = 0;  // lane-change + car-following share
  double human_desirable_pct = 0;
};

// Model and human labels must cover exactly the same demo ids; orphans on
// either side are a contract error listing the ids.
TacticalTable tabulate(const std::map<std::string, TacticalLabel>& model_labels,
                       const std::map<std::string, TacticalLabel>& human_labels);

}  // namespace dmval
