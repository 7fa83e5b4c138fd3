#pragma once

// Shared scenario builders for the test suite. Everything is constructed in
// canonical coordinates (x forward, y toward the driver's left, lane 1 the
// rightmost lane) on a three-marking roadway unless stated otherwise.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dmval/reward.hpp"
#include "dmval/scenario_extraction.hpp"
#include "dmval/synthetic.hpp"
#include "dmval/track_data.hpp"

namespace fixtures {

inline dmval::RoadLayout layout3() { return dmval::build_layout({0.0, 4.0, 8.0}); }

// Realistic 3.5 m lanes; training fixtures that cross the divider need these
// (see the RecoveryScenario note on lane width and concavity).
inline dmval::RoadLayout layout35() { return dmval::build_layout({0.0, 3.5, 7.0}); }

// Scene with a fixed neighbor snapshot repeated over every frame.
inline dmval::SceneContext static_scene(const dmval::RoadLayout& layout, double v_d,
                                        int first_frame, int n_frames,
                                        const std::vector<Eigen::Vector2d>& neighbors) {
  std::vector<std::vector<Eigen::Vector2d>> frames(static_cast<std::size_t>(n_frames), neighbors);
  return dmval::SceneContext(layout, v_d, first_frame, std::move(frames));
}

// Track whose per-frame center positions are given; velocities are the
// forward position differences over dt (the frame's velocity moves the
// vehicle to the next frame), so integrating the velocities reproduces the
// positions exactly. The last frame repeats the previous velocity.
inline dmval::Track track_from_positions(int id, const std::vector<Eigen::Vector2d>& positions,
                                         double dt, const dmval::RoadLayout& layout,
                                         int first_frame = 0, double length = 4.0,
                                         double width = 2.0) {
  dmval::Track t;
  t.id = id;
  t.driving_direction = 2;
  t.length = length;
  t.width = width;
  t.canonical = true;
  const std::size_t n = positions.size();
  t.frames.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    dmval::TrackFrame& f = t.frames[i];
    f.frame = first_frame + static_cast<int>(i);
    f.x = positions[i].x();
    f.y = positions[i].y();
    if (i + 1 < n) {
      f.vx = (positions[i + 1].x() - positions[i].x()) / dt;
      f.vy = (positions[i + 1].y() - positions[i].y()) / dt;
    } else if (n >= 2) {
      f.vx = t.frames[i - 1].vx;
      f.vy = t.frames[i - 1].vy;
    }
    f.ax = 0;
    f.ay = 0;
    f.lane_id = layout.lane_index(f.y);
  }
  int changes = 0;
  for (std::size_t i = 1; i < n; ++i) {
    int prev = t.frames[i - 1].lane_id, cur = t.frames[i].lane_id;
    if (prev != cur && layout.valid_lane(prev) && layout.valid_lane(cur)) ++changes;
  }
  t.num_lane_changes = changes;
  return t;
}

// Demonstration assembled directly from ego positions plus optional
// neighbor tracks; v_d follows the extraction rule (max recorded vx).
inline dmval::Demonstration demo_from_positions(const std::vector<Eigen::Vector2d>& ego_positions,
                                                double dt,
                                                std::vector<dmval::Track> neighbors = {},
                                                const std::string& id = "fixture") {
  dmval::Demonstration d;
  d.demo_id = id;
  d.recording_id = 0;
  d.layout = layout3();
  d.dt = dt;
  d.ego = track_from_positions(900, ego_positions, dt, d.layout);
  d.neighbors = std::move(neighbors);
  double v_d = d.ego.frames.front().vx;
  for (const auto& f : d.ego.frames) v_d = std::max(v_d, f.vx);
  d.v_d = v_d;
  return d;
}

// Straight-line constant-speed ego positions at a given lateral offset.
inline std::vector<Eigen::Vector2d> straight_positions(int n, double v, double y, double dt,
                                                       double x0 = 0) {
  std::vector<Eigen::Vector2d> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = {x0 + v * i * dt, y};
  return p;
}

// Ego accelerating monotonically from v0 to v1, reaching v1 only at the final
// frame; stays on the lane-1 center with no neighbors. Training on this demo
// pushes the velocity weight toward zero and past it, because the recorded
// speed sits far below the desired speed (the max, reached only once) for
// nearly the whole demonstration.
inline dmval::Demonstration monotone_accel_demo(int n_frames = 201, double v0 = 18,
                                                double v1 = 30, double dt = 0.04) {
  std::vector<Eigen::Vector2d> p(static_cast<std::size_t>(n_frames));
  // velocity at frame i: v0 + (v1-v0) * i/(n-1); position = discrete integral
  double x = 0;
  for (int i = 0; i < n_frames; ++i) {
    p[static_cast<std::size_t>(i)] = {x, 2.0};
    double v = v0 + (v1 - v0) * static_cast<double>(i) / (n_frames - 1);
    x += v * dt;
  }
  return demo_from_positions(p, dt, {}, "monotone_accel");
}

// ---------- weight-recovery scenario ----------

// Canonical plausible weights: velocity off-target and lane-keeping mildly
// weighted, road bounds avoided, collision strongly avoided.
inline dmval::RewardWeights canonical_theta() { return {-1.0, 3.0, -3.0, -20.0}; }

// Two slow leaders staggered across both lanes of a road with unequal lane
// widths. The ego starts offset inside lane 1, overtakes the first leader by
// crossing to lane 2, then meets the second one there. Each element earns its
// place in the recovered weights: the crossings and the offset start exercise
// the lane and bound features away from their stationary points, the two
// close approaches anchor the collision weight, and the unequal widths break
// a degeneracy that mirror-symmetric roads have (a path settled on the
// divider leaves only the sum of the lane and bound weights identified, not
// the split between them).
inline dmval::RecoveryScenario recovery_scenario() {
  dmval::RecoveryScenario sc;
  sc.markings = {0.0, 3.5, 6.6};
  sc.duration_frames = 241;
  sc.ego_v0 = 30.0;
  sc.ego_lane = 1;
  sc.ego_lane_offset = -0.60;
  sc.ego_x0 = 0.0;

  for (int j = 0; j < 2; ++j) {
    dmval::TrackScript leader;
    leader.kind = dmval::TrackScript::Kind::kScripted;
    leader.id = j + 1;
    leader.driving_direction = 2;
    leader.start_frame = 0;
    leader.n_frames = 281;  // covers the planning horizon past the last frame
    leader.x0 = j == 0 ? 45.0 : 110.0;
    leader.lane = j + 1;
    leader.speed.v0 = j == 0 ? 16.0 : 18.0;
    sc.neighbors.push_back(leader);
  }
  return sc;
}

// Weight magnitude for recovery runs. The action noise the sampler injects
// has covariance equal to the inverse reward curvature, which shrinks as the
// weights grow; large weights therefore keep the sampled paths close to the
// per-window optima, where the likelihood the trainer maximizes is an
// accurate description of the generator. Recovery error grows markedly when
// this is lowered toward 1.
constexpr double kRecoveryScale = 1000.0;

// Component-wise magnitude jitter around the canonical direction, scaled up
// for recovery runs. Signs are the plausible ones; magnitudes vary
// log-uniformly in [lo, hi].
inline dmval::RewardWeights jittered_theta(std::mt19937_64& rng, double scale = kRecoveryScale,
                                           double lo = 0.8, double hi = 1.25) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  dmval::RewardWeights t = canonical_theta();
  for (int i = 0; i < 4; ++i) t[i] *= scale * std::exp(u(rng));
  return t;
}

// Demonstration drawn from the reward model itself: per-window optima plus
// exact-covariance action noise at plausible weights. Training converges on
// it by construction, because the data really is distributed the way the
// likelihood assumes; kinematically scripted paths carry no such guarantee.
inline dmval::Demonstration sampled_benign_demo(std::uint64_t seed = 7) {
  dmval::RewardWeights theta = kRecoveryScale * canonical_theta();
  return dmval::sample_demo(theta, recovery_scenario(), 5, dmval::FeatureConstants{}, seed);
}

}  // namespace fixtures
