#pragma once

#include <Eigen/Core>
#include <vector>

#include "dmval/reward.hpp"
#include "dmval/scenario_extraction.hpp"

namespace dmval {

// Receding-horizon agent: point mass under acceleration control with
// per-step box bounds on the action.
struct AgentConfig {
  int horizon = 5;          // N planning steps
  double dt = 1.0 / 25.0;
  double ax_min = -6.63;    // m/s^2
  double ax_max = 20.06;
  double ay_min = -1.63;
  double ay_max = 1.63;
  int replan_stride = 1;    // plan every `stride` frames, execute that many actions
  // Planner internals (projected Newton with Levenberg damping).
  int max_planner_iters = 60;
  double planner_tol = 1e-9;  // projected-gradient threshold, scaled by initial gradient
};

struct PlanResult {
  Eigen::VectorXd actions;  // 2N, interleaved (ax, ay), inside the box
  double objective = 0;     // summed trajectory reward of the plan
  int iterations = 0;
};

// Maximizes the N-step trajectory reward over box-bounded action sequences,
// starting from `warm_start` (clamped into the box). The weights are
// normalized by their infinity norm first, so positively scaled weights plan
// identical trajectories by construction. An all-zero weight vector has a
// flat objective: the warm start is returned unchanged.
PlanResult plan(const RewardWeights& w, const State& state, int frame,
                const SceneContext& scene, const AgentConfig& cfg, const FeatureConstants& k,
                const Eigen::VectorXd& warm_start);

struct AgentRollout {
  int first_frame = 0;
  std::vector<State> states;            // per frame; [0] = initial state
  std::vector<Eigen::Vector2d> actions; // executed, size states.size()-1
  std::vector<double> planner_values;   // objective per replan
  std::vector<int> planner_iterations;  // per replan
};

// Receding-horizon simulation for n_frames states starting at state0. Each
// replan warm-starts from the previous plan shifted by the executed stride
// with the last action repeated; the first plan starts from zero actions.
// The scene must cover [first_frame, first_frame + n_frames - 2 + horizon].
AgentRollout rollout_from(const State& state0, int first_frame, int n_frames,
                          const SceneContext& scene, const RewardWeights& w,
                          const AgentConfig& cfg, const FeatureConstants& k);

// Forward-simulates the agent in the demonstration's scene: same initial
// position and velocity, same duration, ground-truth neighbor futures.
AgentRollout rollout(const Demonstration& demo, const RewardWeights& w, const AgentConfig& cfg,
                     const FeatureConstants& k);

}  // namespace dmval
