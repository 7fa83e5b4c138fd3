#include "dmval/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <Eigen/Cholesky>

#include "dmval/csv.hpp"
#include "dmval/errors.hpp"

namespace dmval {

namespace {

constexpr double kTwoPi = 6.283185307179586477;

double profile_vx(const SpeedProfile& p, double t) {
  double v = p.v0 + p.accel * t;
  if (p.sine_amp != 0) v += p.sine_amp * std::sin(kTwoPi * t / p.sine_period_s);
  return v;
}

double profile_x(const SpeedProfile& p, double x0, double t) {
  double x = x0 + p.v0 * t + 0.5 * p.accel * t * t;
  if (p.sine_amp != 0) {
    x += p.sine_amp * (p.sine_period_s / kTwoPi) * (1 - std::cos(kTwoPi * t / p.sine_period_s));
  }
  return x;
}

double profile_ax(const SpeedProfile& p, double t) {
  double a = p.accel;
  if (p.sine_amp != 0) a += p.sine_amp * (kTwoPi / p.sine_period_s) * std::cos(kTwoPi * t / p.sine_period_s);
  return a;
}

int count_lane_changes(const std::vector<TrackFrame>& frames, const RoadLayout& layout) {
  int n = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    int prev = frames[i - 1].lane_id;
    int cur = frames[i].lane_id;
    if (prev != cur && layout.valid_lane(prev) && layout.valid_lane(cur)) ++n;
  }
  return n;
}

// Velocity columns chosen so that integrating them under velocity-control
// dynamics reproduces the stored positions bit-for-bit: the velocity at frame
// j is the difference to frame j+1 (the frame's velocity moves the vehicle to
// the next frame), and the stored position is re-derived from that velocity,
// keeping the pair exactly consistent.
void consistent_kinematics(const std::vector<State>& sim_states,
                           const std::vector<Eigen::Vector2d>& sim_actions, double dt,
                           int start_frame, const RoadLayout& layout,
                           std::vector<TrackFrame>& out) {
  const std::size_t n = sim_states.size();
  if (n < 2) throw ContractError("agent simulation needs at least two frames");
  out.resize(n);
  out[0].x = sim_states[0].x;
  out[0].y = sim_states[0].y;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    double vx = (sim_states[j + 1].x - out[j].x) / dt;
    double vy = (sim_states[j + 1].y - out[j].y) / dt;
    out[j].vx = vx;
    out[j].vy = vy;
    out[j + 1].x = out[j].x + vx * dt;
    out[j + 1].y = out[j].y + vy * dt;
  }
  out[n - 1].vx = out[n - 2].vx;  // no forward difference at the last frame
  out[n - 1].vy = out[n - 2].vy;
  for (std::size_t j = 0; j < n; ++j) {
    out[j].frame = start_frame + static_cast<int>(j);
    Eigen::Vector2d a = j + 1 < n ? sim_actions[j] : Eigen::Vector2d::Zero();
    out[j].ax = a.x();
    out[j].ay = a.y();
    out[j].lane_id = layout.lane_index(out[j].y);
  }
}

}  // namespace

Track script_track(const TrackScript& script, double frame_rate, const RoadLayout& layout) {
  if (script.n_frames < 1) throw ContractError("scripted track needs at least one frame");
  if (!layout.valid_lane(script.lane)) {
    throw ContractError("scripted lane " + std::to_string(script.lane) + " outside layout");
  }
  if (script.speed.sine_amp != 0 && !(script.speed.sine_period_s > 0)) {
    throw ContractError("sine speed modulation needs a positive period");
  }
  const double dt = 1.0 / frame_rate;
  const double y_from = layout.lane_centers[static_cast<std::size_t>(script.lane - 1)] +
                        script.lane_offset;
  double y_to = y_from;
  double t_start = 0, duration = 0;
  if (script.lane_change.has_value()) {
    const LaneChangeScript& lc = *script.lane_change;
    if (!layout.valid_lane(lc.to_lane)) {
      throw ContractError("lane change target " + std::to_string(lc.to_lane) +
                          " outside layout");
    }
    if (!(lc.duration_s > 0)) throw ContractError("lane change duration must be positive");
    y_to = layout.lane_centers[static_cast<std::size_t>(lc.to_lane - 1)] + script.lane_offset;
    t_start = lc.time_s - lc.duration_s / 2;
    duration = lc.duration_s;
  }

  Track track;
  track.id = script.id;
  track.driving_direction = script.driving_direction;
  track.length = script.length;
  track.width = script.width;
  track.canonical = true;
  track.frames.resize(static_cast<std::size_t>(script.n_frames));
  for (int i = 0; i < script.n_frames; ++i) {
    double t = i * dt;
    TrackFrame& f = track.frames[static_cast<std::size_t>(i)];
    f.frame = script.start_frame + i;
    f.x = profile_x(script.speed, script.x0, t);
    f.vx = profile_vx(script.speed, t);
    f.ax = profile_ax(script.speed, t);
    f.y = y_from;
    f.vy = 0;
    f.ay = 0;
    if (duration > 0) {
      double u = (t - t_start) / duration;
      if (u >= 1) {
        f.y = y_to;
      } else if (u > 0) {
        double span = y_to - y_from;
        f.y = y_from + span * (3 * u * u - 2 * u * u * u);
        f.vy = span * 6 * u * (1 - u) / duration;
        f.ay = span * (6 - 12 * u) / (duration * duration);
      }
    }
    f.lane_id = layout.lane_index(f.y);
  }
  track.num_lane_changes = count_lane_changes(track.frames, layout);
  return track;
}

namespace {

// Inverse of canonicalize(): the per-roadway mirror is an involution.
Track decanonicalize(const Track& track) {
  Track out = track;
  out.canonical = false;
  for (TrackFrame& f : out.frames) {
    if (track.driving_direction == 1) {
      f.x = -f.x;
      f.vx = -f.vx;
      f.ax = -f.ax;
    } else {
      f.y = -f.y;
      f.vy = -f.vy;
      f.ay = -f.ay;
    }
  }
  return out;
}

SceneContext scene_from_tracks(const RoadLayout& layout, double v_d, int first_frame,
                               int last_frame, const std::vector<Track>& tracks) {
  std::vector<std::vector<Eigen::Vector2d>> frames(
      static_cast<std::size_t>(last_frame - first_frame + 1));
  for (int f = first_frame; f <= last_frame; ++f) {
    auto& slot = frames[static_cast<std::size_t>(f - first_frame)];
    for (const Track& t : tracks) {
      const TrackFrame* tf = t.at(f);
      if (tf != nullptr) slot.push_back({tf->x, tf->y});
    }
  }
  return SceneContext(layout, v_d, first_frame, std::move(frames));
}

Track simulate_agent_track(const TrackScript& script, double frame_rate,
                           const RoadLayout& layout, const std::vector<Track>& scripted) {
  if (script.n_frames < 2) throw ContractError("agent track needs at least two frames");
  if (!layout.valid_lane(script.lane)) {
    throw ContractError("agent lane " + std::to_string(script.lane) + " outside layout");
  }
  AgentConfig cfg;
  cfg.dt = 1.0 / frame_rate;

  std::vector<Track> same_roadway;
  for (const Track& t : scripted) {
    if (t.driving_direction == script.driving_direction) same_roadway.push_back(t);
  }
  int last = script.start_frame + script.n_frames - 2 + cfg.horizon;
  SceneContext scene =
      scene_from_tracks(layout, script.speed.v0, script.start_frame, last, same_roadway);

  State s0;
  s0.x = script.x0;
  s0.y = layout.lane_centers[static_cast<std::size_t>(script.lane - 1)] + script.lane_offset;
  s0.vx = script.v_start > 0 ? script.v_start : script.speed.v0;
  s0.vy = 0;
  AgentRollout sim = rollout_from(s0, script.start_frame, script.n_frames, scene, script.theta,
                                  cfg, FeatureConstants{});

  Track track;
  track.id = script.id;
  track.driving_direction = script.driving_direction;
  track.length = script.length;
  track.width = script.width;
  track.canonical = true;
  consistent_kinematics(sim.states, sim.actions, cfg.dt, script.start_frame, layout,
                        track.frames);
  track.num_lane_changes = count_lane_changes(track.frames, layout);
  return track;
}

}  // namespace

Recording generate_kinematic_fixture(const FixtureSpec& spec) {
  std::set<int> ids;
  for (const TrackScript& s : spec.tracks) {
    if (!ids.insert(s.id).second) {
      throw ContractError("duplicate track id " + std::to_string(s.id) + " in fixture");
    }
    if (s.driving_direction != 1 && s.driving_direction != 2) {
      throw ContractError("track " + std::to_string(s.id) + ": driving direction must be 1 or 2");
    }
  }

  RoadLayout upper, lower;
  if (spec.upper_markings.size() >= 2) upper = build_layout(spec.upper_markings);
  if (spec.lower_markings.size() >= 2) lower = build_layout(spec.lower_markings);
  auto layout_of = [&](const TrackScript& s) -> const RoadLayout& {
    const RoadLayout& l = s.driving_direction == 1 ? upper : lower;
    if (l.markings.empty()) {
      throw GeometryError("track " + std::to_string(s.id) + " drives on roadway " +
                          std::to_string(s.driving_direction) + " which has no lane markings");
    }
    return l;
  };

  // Scripted traffic first; agents are then simulated against it. Agents do
  // not see each other, which keeps the result independent of track order.
  std::vector<Track> scripted;
  for (const TrackScript& s : spec.tracks) {
    if (s.kind == TrackScript::Kind::kScripted) {
      scripted.push_back(script_track(s, spec.frame_rate, layout_of(s)));
    }
  }
  std::vector<Track> canonical;
  std::size_t next_scripted = 0;
  for (const TrackScript& s : spec.tracks) {
    if (s.kind == TrackScript::Kind::kScripted) {
      canonical.push_back(scripted[next_scripted++]);
    } else {
      canonical.push_back(simulate_agent_track(s, spec.frame_rate, layout_of(s), scripted));
    }
  }

  Recording rec;
  rec.meta.recording_id = spec.recording_id;
  rec.meta.frame_rate = spec.frame_rate;
  rec.meta.speed_limit = spec.speed_limit;
  rec.meta.has_merge_lane = spec.has_merge_lane;
  rec.meta.upper_markings = spec.upper_markings;
  std::sort(rec.meta.upper_markings.begin(), rec.meta.upper_markings.end());
  rec.meta.lower_markings = spec.lower_markings;
  for (double& m : rec.meta.lower_markings) m = -m;
  std::sort(rec.meta.lower_markings.begin(), rec.meta.lower_markings.end());

  for (const Track& t : canonical) rec.tracks.push_back(decanonicalize(t));

  if (spec.position_jitter_sigma > 0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.position_jitter_sigma);
    for (Track& t : rec.tracks) {
      for (TrackFrame& f : t.frames) {
        f.x += noise(rng);
        f.y += noise(rng);
      }
    }
  }

  std::sort(rec.tracks.begin(), rec.tracks.end(),
            [](const Track& a, const Track& b) { return a.id < b.id; });
  return rec;
}

std::string emit_fixture(const FixtureSpec& spec, const std::filesystem::path& dir) {
  Recording rec = generate_kinematic_fixture(spec);
  std::filesystem::create_directories(dir);

  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d_", spec.recording_id);
  std::string prefix(buf);

  auto join_markings = [](const std::vector<double>& m) {
    std::string s;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (i > 0) s += ";";
      s += csv::Writer::format(m[i]);
    }
    return s;
  };

  {
    std::vector<std::string> header = {"id", "frameRate", "speedLimit", "upperLaneMarkings",
                                       "lowerLaneMarkings"};
    if (spec.has_merge_lane) header.push_back("hasMergeLane");
    csv::Writer w(header);
    std::vector<std::string> row = {std::to_string(rec.meta.recording_id),
                                    csv::Writer::format(rec.meta.frame_rate),
                                    csv::Writer::format(rec.meta.speed_limit),
                                    join_markings(rec.meta.upper_markings),
                                    join_markings(rec.meta.lower_markings)};
    if (spec.has_merge_lane) row.push_back("1");
    w.add_row(row);
    w.write_file(dir / (prefix + "recordingMeta.csv"));
  }

  {
    csv::Writer w({"id", "drivingDirection", "numLaneChanges", "width", "height"});
    for (const Track& t : rec.tracks) {
      w.add_row({std::to_string(t.id), std::to_string(t.driving_direction),
                 std::to_string(t.num_lane_changes), csv::Writer::format(t.length),
                 csv::Writer::format(t.width)});
    }
    w.write_file(dir / (prefix + "tracksMeta.csv"));
  }

  {
    csv::Writer w({"frame", "id", "x", "y", "width", "height", "xVelocity", "yVelocity",
                   "xAcceleration", "yAcceleration", "laneId", "precedingId"});
    for (const Track& t : rec.tracks) {
      for (const TrackFrame& f : t.frames) {
        // center back to bounding-box corner, the on-disk convention
        w.add_row({std::to_string(f.frame), std::to_string(t.id),
                   csv::Writer::format(f.x - t.length / 2), csv::Writer::format(f.y - t.width / 2),
                   csv::Writer::format(t.length), csv::Writer::format(t.width),
                   csv::Writer::format(f.vx), csv::Writer::format(f.vy),
                   csv::Writer::format(f.ax), csv::Writer::format(f.ay),
                   std::to_string(f.lane_id), "0"});
      }
    }
    w.write_file(dir / (prefix + "tracks.csv"));
  }
  return prefix;
}

SyntheticDemo generate_demo(const RewardWeights& theta_star, const RecoveryScenario& scenario,
                            const AgentConfig& agent, const FeatureConstants& k) {
  if (scenario.duration_frames < 2) {
    throw ContractError("recovery scenario needs at least two frames");
  }
  RoadLayout layout = build_layout(scenario.markings);
  if (!layout.valid_lane(scenario.ego_lane)) {
    throw ContractError("ego lane " + std::to_string(scenario.ego_lane) + " outside layout");
  }

  std::vector<Track> neighbors;
  int max_id = 0;
  for (const TrackScript& s : scenario.neighbors) {
    if (s.kind != TrackScript::Kind::kScripted) {
      throw ContractError("recovery neighbors must be scripted tracks");
    }
    neighbors.push_back(script_track(s, scenario.frame_rate, layout));
    max_id = std::max(max_id, s.id);
  }

  AgentConfig cfg = agent;
  cfg.dt = 1.0 / scenario.frame_rate;
  const int last_scene = scenario.duration_frames - 2 + cfg.horizon;
  SceneContext scene = scene_from_tracks(layout, scenario.ego_v0, 0, last_scene, neighbors);

  State s0;
  s0.x = scenario.ego_x0;
  s0.y = layout.lane_centers[static_cast<std::size_t>(scenario.ego_lane - 1)] +
         scenario.ego_lane_offset;
  s0.vx = scenario.ego_v_start > 0 ? scenario.ego_v_start : scenario.ego_v0;
  s0.vy = 0;

  SyntheticDemo out;
  out.sim = rollout_from(s0, 0, scenario.duration_frames, scene, theta_star, cfg, k);

  Track ego;
  ego.id = max_id + 1;
  ego.driving_direction = 2;
  ego.length = scenario.ego_length;
  ego.width = scenario.ego_width;
  ego.canonical = true;
  consistent_kinematics(out.sim.states, out.sim.actions, cfg.dt, 0, layout, ego.frames);
  ego.num_lane_changes = count_lane_changes(ego.frames, layout);

  Demonstration& demo = out.demo;
  demo.demo_id = "synth_t" + std::to_string(ego.id);
  demo.recording_id = 0;
  demo.layout = layout;
  demo.dt = cfg.dt;
  demo.ego = std::move(ego);

  // neighbors clipped to the ego span, as extraction does with recordings
  for (const Track& nb : neighbors) {
    Track clipped = nb;
    clipped.frames.clear();
    for (const TrackFrame& f : nb.frames) {
      if (f.frame >= 0 && f.frame < scenario.duration_frames) clipped.frames.push_back(f);
    }
    if (!clipped.frames.empty()) demo.neighbors.push_back(std::move(clipped));
  }

  double v_d = 0;
  for (const TrackFrame& f : demo.ego.frames) v_d = std::max(v_d, f.vx);
  demo.v_d = v_d;
  return out;
}

namespace {

// Maximizes the window reward over the velocity actions. The reward is
// smooth but not concave everywhere, so Newton steps fall back to capped
// gradient ascent while the negated Hessian is not positive definite.
Eigen::VectorXd window_optimum(const RewardWeights& w, const State& s0, int frame0,
                               Eigen::VectorXd u, const SceneContext& scene, const Dynamics& dyn,
                               const FeatureConstants& k) {
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  for (int it = 0; it < 200; ++it) {
    double r = traj_reward_derivs(w, s0, frame0, u, scene, dyn, k, &g, &h);
    if (g.lpNorm<Eigen::Infinity>() <= 1e-11) break;
    Eigen::VectorXd du;
    Eigen::LLT<Eigen::MatrixXd> llt((-h).eval());
    if (llt.info() == Eigen::Success) {
      du = llt.solve(g);
    } else {
      du = g;
      double n = du.lpNorm<Eigen::Infinity>();
      if (n > 0.5) du *= 0.5 / n;
    }
    double step = 1.0;
    while (step > 1e-12 &&
           traj_reward(w, s0, frame0, (u + step * du).eval(), scene, dyn, k) < r) {
      step *= 0.5;
    }
    if (step <= 1e-12) break;
    u += step * du;
  }
  return u;
}

}  // namespace

Demonstration sample_demo(const RewardWeights& theta_star, const RecoveryScenario& scenario,
                          int horizon, const FeatureConstants& k, std::uint64_t seed) {
  if (!theta_star.allFinite()) throw ContractError("theta_star must be finite");
  if (theta_star[0] >= 0) {
    throw ContractError("sampling needs a negative velocity weight: the longitudinal block of "
                        "-H is theta_vel-scaled and must be positive definite");
  }
  if (horizon < 1) throw ContractError("sample horizon must be >= 1");
  const int n_windows = (scenario.duration_frames - 1) / horizon;
  if (n_windows < 1) {
    throw ContractError("recovery scenario shorter than one horizon window");
  }

  RoadLayout layout = build_layout(scenario.markings);
  if (!layout.valid_lane(scenario.ego_lane)) {
    throw ContractError("ego lane " + std::to_string(scenario.ego_lane) + " outside layout");
  }
  std::vector<Track> neighbors;
  int max_id = 0;
  for (const TrackScript& s : scenario.neighbors) {
    if (s.kind != TrackScript::Kind::kScripted) {
      throw ContractError("recovery neighbors must be scripted tracks");
    }
    neighbors.push_back(script_track(s, scenario.frame_rate, layout));
    max_id = std::max(max_id, s.id);
  }

  const double dt = 1.0 / scenario.frame_rate;
  const int last_frame = n_windows * horizon;
  SceneContext scene = scene_from_tracks(layout, scenario.ego_v0, 0, last_frame, neighbors);
  Dynamics dyn{DynamicsModel::kVelocityControl, dt};

  State s;
  s.x = scenario.ego_x0;
  s.y = layout.lane_centers[static_cast<std::size_t>(scenario.ego_lane - 1)] +
        scenario.ego_lane_offset;
  s.vx = scenario.ego_v_start > 0 ? scenario.ego_v_start : scenario.ego_v0;
  s.vy = 0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  Track ego;
  ego.id = max_id + 1;
  ego.driving_direction = 2;
  ego.length = scenario.ego_length;
  ego.width = scenario.ego_width;
  ego.canonical = true;

  auto push_frame = [&](int frame, const State& st, double vx, double vy, double ax, double ay) {
    TrackFrame f;
    f.frame = frame;
    f.x = st.x;
    f.y = st.y;
    f.vx = vx;
    f.vy = vy;
    f.ax = ax;
    f.ay = ay;
    f.lane_id = layout.lane_index(st.y);
    ego.frames.push_back(f);
  };

  Eigen::VectorXd warm(2 * horizon);
  double prev_vx = s.vx, prev_vy = 0;
  for (int w = 0; w < n_windows; ++w) {
    const int frame0 = w * horizon;
    for (int j = 0; j < horizon; ++j) {
      warm[2 * j] = scenario.ego_v0;
      warm[2 * j + 1] = 0;
    }
    Eigen::VectorXd u_opt = window_optimum(theta_star, s, frame0, warm, scene, dyn, k);

    Eigen::VectorXd g;
    Eigen::MatrixXd h;
    traj_reward_derivs(theta_star, s, frame0, u_opt, scene, dyn, k, &g, &h);
    Eigen::LLT<Eigen::MatrixXd> llt((-h).eval());
    if (llt.info() != Eigen::Success) {
      throw ContractError("window starting at frame " + std::to_string(frame0) +
                          " is not definite at theta_star; sampling is undefined there");
    }
    Eigen::VectorXd z(2 * horizon);
    for (int i = 0; i < z.size(); ++i) z[i] = unit_normal(rng);
    // cov(L^-T z) = (L L^T)^-1 = (-H)^-1, the Laplace-model action covariance
    Eigen::MatrixXd lower = llt.matrixL();
    Eigen::VectorXd u = u_opt + lower.transpose().triangularView<Eigen::Upper>().solve(z);

    for (int j = 0; j < horizon; ++j) {
      const double vx = u[2 * j], vy = u[2 * j + 1];
      push_frame(frame0 + j, s, vx, vy, (vx - prev_vx) / dt, (vy - prev_vy) / dt);
      s = step_dynamics(dyn, s, {vx, vy});
      prev_vx = vx;
      prev_vy = vy;
    }
  }
  // closing frame: repeats the last velocity, as ingested tracks do
  push_frame(last_frame, s, prev_vx, prev_vy, 0, 0);
  ego.num_lane_changes = count_lane_changes(ego.frames, layout);

  Demonstration demo;
  demo.demo_id = "sample_t" + std::to_string(ego.id);
  demo.recording_id = 0;
  demo.layout = layout;
  demo.dt = dt;
  demo.v_d = scenario.ego_v0;
  demo.ego = std::move(ego);
  for (const Track& nb : neighbors) {
    Track clipped = nb;
    clipped.frames.clear();
    for (const TrackFrame& f : nb.frames) {
      if (f.frame >= 0 && f.frame <= last_frame) clipped.frames.push_back(f);
    }
    if (!clipped.frames.empty()) demo.neighbors.push_back(std::move(clipped));
  }
  return demo;
}

}  // namespace dmval
