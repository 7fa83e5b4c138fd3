#include "dmval/tactical.hpp"

#include <cmath>
#include <sstream>

#include "dmval/errors.hpp"

namespace dmval {

EgoPath path_from_track(const Track& t) {
  EgoPath p;
  p.first_frame = t.frames.empty() ? 0 : t.frames.front().frame;
  p.states.reserve(t.frames.size());
  for (const TrackFrame& f : t.frames) p.states.push_back({f.x, f.y, f.vx, f.vy});
  p.length = t.length;
  p.width = t.width;
  return p;
}

EgoPath path_from_rollout(const AgentRollout& r, double length, double width) {
  EgoPath p;
  p.first_frame = r.first_frame;
  p.states = r.states;
  p.length = length;
  p.width = width;
  return p;
}

std::string to_string(TacticalLabel label) {
  switch (label) {
    case TacticalLabel::kCollision: return "collision";
    case TacticalLabel::kOffRoad: return "offroad";
    case TacticalLabel::kLaneChange: return "lane_change";
    case TacticalLabel::kCarFollowing: return "car_following";
  }
  throw ContractError("unknown tactical label");
}

std::optional<int> detect_collision(const EgoPath& path, const std::vector<Track>& neighbors) {
  for (int i = 0; i < path.frame_count(); ++i) {
    int frame = path.first_frame + i;
    const State& s = path.states[static_cast<size_t>(i)];
    for (const Track& nb : neighbors) {
      const TrackFrame* f = nb.at(frame);
      if (f == nullptr) continue;
      double dx = std::abs(s.x - f->x);
      double dy = std::abs(s.y - f->y);
      if (dx < 0.5 * (path.length + nb.length) && dy < 0.5 * (path.width + nb.width)) {
        return frame;
      }
    }
  }
  return std::nullopt;
}

std::optional<int> detect_offroad(const EgoPath& path, const RoadLayout& layout) {
  for (int i = 0; i < path.frame_count(); ++i) {
    if (layout.offroad(path.states[static_cast<size_t>(i)].y)) return path.first_frame + i;
  }
  return std::nullopt;
}

std::optional<int> detect_lane_change(const EgoPath& path, const RoadLayout& layout) {
  for (int i = 1; i < path.frame_count(); ++i) {
    int prev = layout.lane_index(path.states[static_cast<size_t>(i - 1)].y);
    int cur = layout.lane_index(path.states[static_cast<size_t>(i)].y);
    if (prev != cur && layout.valid_lane(prev) && layout.valid_lane(cur)) {
      return path.first_frame + i;
    }
  }
  return std::nullopt;
}

TacticalOutcome classify(const EgoPath& path, const std::vector<Track>& neighbors,
                         const RoadLayout& layout) {
  if (auto f = detect_collision(path, neighbors)) {
    return {TacticalLabel::kCollision, f};
  }
  if (auto f = detect_offroad(path, layout)) {
    return {TacticalLabel::kOffRoad, f};
  }
  if (auto f = detect_lane_change(path, layout)) {
    return {TacticalLabel::kLaneChange, f};
  }
  return {TacticalLabel::kCarFollowing, std::nullopt};
}

TacticalTable tabulate(const std::map<std::string, TacticalLabel>& model_labels,
                       const std::map<std::string, TacticalLabel>& human_labels) {
  std::vector<std::string> orphans;
  for (const auto& [id, label] : model_labels) {
    (void)label;
    if (human_labels.find(id) == human_labels.end()) orphans.push_back("model-only: " + id);
  }
  for (const auto& [id, label] : human_labels) {
    (void)label;
    if (model_labels.find(id) == model_labels.end()) orphans.push_back("human-only: " + id);
  }
  if (!orphans.empty()) {
    std::ostringstream msg;
    msg << "tactical label sets do not cover the same demos:";
    for (const std::string& o : orphans) msg << " " << o << ";";
    throw ContractError(msg.str());
  }
  if (model_labels.empty()) throw ContractError("tactical tabulation needs at least one demo");

  const TacticalLabel order[] = {TacticalLabel::kCollision, TacticalLabel::kOffRoad,
                                 TacticalLabel::kLaneChange, TacticalLabel::kCarFollowing};
  TacticalTable table;
  table.n = static_cast<int>(model_labels.size());
  for (TacticalLabel label : order) {
    TacticalRow row;
    row.label = label;
    for (const auto& [id, ml] : model_labels) {
      if (ml == label) ++row.model_count;
      if (human_labels.at(id) == label) ++row.human_count;
    }
    row.model_pct = 100.0 * row.model_count / table.n;
    row.human_pct = 100.0 * row.human_count / table.n;
    table.rows.push_back(row);
  }
  table.model_desirable_pct = table.rows[2].model_pct + table.rows[3].model_pct;
  table.human_desirable_pct = table.rows[2].human_pct + table.rows[3].human_pct;
  return table;
}

}  // namespace dmval
