#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmval/agent_rollout.hpp"
#include "dmval/scenario_extraction.hpp"
#include "dmval/track_data.hpp"

namespace dmval {

// Analytic speed profile: vx(t) = v0 + accel*t + sine_amp*sin(2 pi t / sine_period).
// Positions are the exact integral, so generated tracks are kinematically
// consistent to machine precision.
struct SpeedProfile {
  double v0 = 30.0;
  double accel = 0.0;
  double sine_amp = 0.0;
  double sine_period_s = 0.0;  // ignored when sine_amp == 0
};

// Smoothstep lateral transition centered on time_s: the lane divider is
// crossed at time_s itself.
struct LaneChangeScript {
  double time_s = 0;
  int to_lane = 2;
  double duration_s = 2.0;
};

// A scripted or agent-driven vehicle, described in the canonical frame of
// its roadway (x forward, y left, lane 1 rightmost).
struct TrackScript {
  enum class Kind { kScripted, kAgent };
  Kind kind = Kind::kScripted;
  int id = 0;
  int driving_direction = 2;
  int start_frame = 0;
  int n_frames = 0;
  double x0 = 0;
  int lane = 1;
  double lane_offset = 0;  // lateral offset from the lane center
  SpeedProfile speed;
  std::optional<LaneChangeScript> lane_change;
  double length = 4.0;
  double width = 2.0;
  // kAgent only: the receding-horizon agent is simulated against the
  // scripted tracks with these reward weights; v_d is the script's v0.
  RewardWeights theta = RewardWeights::Zero();
  // kAgent only: initial speed, 0 means start at speed.v0.
  double v_start = 0;
};

struct FixtureSpec {
  int recording_id = 1;
  double frame_rate = 25.0;
  double speed_limit = -1.0;
  bool has_merge_lane = false;
  std::vector<double> upper_markings;  // canonical y, ascending; may be empty
  std::vector<double> lower_markings;
  std::vector<TrackScript> tracks;
  // Gaussian position jitter, off by default: recovery tolerances are
  // defined on noiseless data.
  double position_jitter_sigma = 0.0;
  std::uint64_t seed = 0;
};

// Evaluates a scripted track in canonical coordinates. The layout supplies
// the lane centers referenced by `lane` / `to_lane`.
Track script_track(const TrackScript& script, double frame_rate, const RoadLayout& layout);

// Builds the full recording in memory (raw image-frame coordinates, ready
// for canonicalize()). Agent tracks are simulated against the scripted ones.
// Duplicate track ids are a contract error.
Recording generate_kinematic_fixture(const FixtureSpec& spec);

// Writes <NN_>recordingMeta.csv / tracksMeta.csv / tracks.csv into dir and
// returns the prefix. Identical specs serialize byte-identically.
std::string emit_fixture(const FixtureSpec& spec, const std::filesystem::path& dir);

// -------- weight-recovery demo generation --------

struct RecoveryScenario {
  // 3.5 m lanes, the common motorway width. The width matters: under the
  // default feature constants the lane feature stays concave across a 3.5 m
  // lane's divider, so crossing demonstrations remain trainable; at 4 m the
  // divider sits past the Gaussian inflection radius and every window that
  // touches it has an indefinite likelihood Hessian.
  std::vector<double> markings = {0.0, 3.5, 7.0};  // canonical, one roadway
  double frame_rate = 25.0;
  int duration_frames = 201;
  double ego_x0 = 0;
  int ego_lane = 1;
  double ego_lane_offset = 0;
  double ego_v0 = 30.0;  // the agent's desired speed
  // Initial speed; 0 means "start at ego_v0". Starting below the desired
  // speed puts an acceleration ramp into the demonstration, without which
  // the velocity residuals vanish and the velocity weight has no finite
  // maximum-likelihood value.
  double ego_v_start = 0;
  double ego_length = 4.0, ego_width = 2.0;
  std::vector<TrackScript> neighbors;
};

struct SyntheticDemo {
  Demonstration demo;
  AgentRollout sim;  // the generating rollout, kept for inspection
};

// Forward-simulates an agent carrying theta_star through the scenario and
// packages the executed trajectory as a velocity-action demonstration: the
// per-frame velocity columns are the exact position differences over dt, so
// re-integrating the actions reproduces the positions bit-for-bit. The
// demonstration's v_d is the max recorded longitudinal velocity, as with
// ingested data.
SyntheticDemo generate_demo(const RewardWeights& theta_star, const RecoveryScenario& scenario,
                            const AgentConfig& agent, const FeatureConstants& k);

// Draws a demonstration from the same per-window Laplace model the trainer
// fits: every horizon window's velocity actions are the window's exact reward
// optimum plus Gaussian noise with covariance (-H)^-1 evaluated there, and
// consecutive windows chain through the sampled end states. Draws like this
// are the one setting where the recovered weights are comparable to
// theta_star in magnitude rather than only in sign: an executed planner
// trajectory is nearly deterministic, so its maximum-likelihood lateral
// weights run off toward the high-precision regime no matter what theta_star
// generated it. The demonstration's v_d is the scenario's desired speed (the
// quantity the model was sampled with), not the max recorded velocity, which
// noise would bias upward. theta_star must make every window's negated
// action Hessian positive definite along the sampled path; the velocity
// weight must be negative.
Demonstration sample_demo(const RewardWeights& theta_star, const RecoveryScenario& scenario,
                          int horizon, const FeatureConstants& k, std::uint64_t seed);

}  // namespace dmval
