#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <vector>

#include "dmval/track_data.hpp"

namespace dmval {

// Shape constants of the reward features.
struct FeatureConstants {
  double c = 0.14;        // lane / road-bound Gaussian falloff [1/m^2]
  double sigma_x = 15.0;  // longitudinal proximity scale [m]
  double sigma_y = 1.4;   // lateral proximity scale [m]
};

// Weight order everywhere: [velocity, lane, bounds, collision].
using RewardWeights = Eigen::Vector4d;
using FeatureVector = Eigen::Vector4d;

enum Feature { kVelocity = 0, kLane = 1, kBounds = 2, kCollision = 3 };

// Static per-frame surroundings for reward evaluation: road geometry, the
// desired speed, and ground-truth neighbor center positions per frame.
class SceneContext {
 public:
  SceneContext(RoadLayout layout, double v_d, int first_frame,
               std::vector<std::vector<Eigen::Vector2d>> neighbor_positions);

  const RoadLayout& layout() const { return layout_; }
  double v_d() const { return v_d_; }
  int first_frame() const { return first_frame_; }
  int last_frame() const { return first_frame_ + static_cast<int>(frames_.size()) - 1; }
  bool covers(int frame) const;
  // Neighbor centers at an absolute frame; throws ContractError when the
  // frame is outside the covered span.
  const std::vector<Eigen::Vector2d>& neighbors_at(int frame) const;

 private:
  RoadLayout layout_;
  double v_d_;
  int first_frame_;
  std::vector<std::vector<Eigen::Vector2d>> frames_;
};

// phi = [ (vx - v_d)^2,
//         sum_centers  exp(-c (y_c - y)^2),
//         sum_bounds   exp(-c (y_b - y)^2),
//         sum_neighbors N(x - x_o; sigma_x) * N(y - y_o; sigma_y) ]
// with N(d; s) the normalized 1-D Gaussian density.
FeatureVector features(double x, double y, double vx, const SceneContext& scene, int frame,
                       const FeatureConstants& k);

inline double reward(const RewardWeights& w, const FeatureVector& phi) { return w.dot(phi); }

enum class DynamicsModel {
  kVelocityControl,      // 2-state (x, y); action = (vx, vy); p' = p + a dt
  kAccelerationControl,  // 4-state (x, y, vx, vy); action = (ax, ay);
                         // v' = v + a dt, p' = p + v dt (pre-update velocity)
};

struct Dynamics {
  DynamicsModel model = DynamicsModel::kVelocityControl;
  double dt = 1.0 / 25.0;
};

struct State {
  double x = 0, y = 0, vx = 0, vy = 0;
};

State step_dynamics(const Dynamics& dyn, const State& s, const Eigen::Vector2d& action);

// Per-feature totals and derivatives of the summed trajectory reward with
// respect to the flattened action sequence a = (ax_0, ay_0, ..| interleaved).
// The reward of feature i over the trajectory is totals[i]; grads/hessians
// are its exact first/second derivatives (the dynamics are linear in the
// actions, so the chain rule has no curvature term).
struct TrajectoryTerms {
  FeatureVector totals = FeatureVector::Zero();
  std::array<Eigen::VectorXd, 4> grads;
  std::array<Eigen::MatrixXd, 4> hessians;
};

// order: 0 = totals only, 1 = + gradients, 2 = + hessians.
// state0 sits at absolute frame `frame0`; the N resulting states occupy
// frames frame0+1 .. frame0+N and each must be covered by the scene.
TrajectoryTerms trajectory_terms(const State& state0, int frame0, const Eigen::VectorXd& actions,
                                 const SceneContext& scene, const Dynamics& dyn,
                                 const FeatureConstants& k, int order);

// Weighted counterparts (one pass, used by the planner).
double traj_reward(const RewardWeights& w, const State& state0, int frame0,
                   const Eigen::VectorXd& actions, const SceneContext& scene,
                   const Dynamics& dyn, const FeatureConstants& k);
Eigen::VectorXd traj_reward_grad(const RewardWeights& w, const State& state0, int frame0,
                                 const Eigen::VectorXd& actions, const SceneContext& scene,
                                 const Dynamics& dyn, const FeatureConstants& k);
// Exactly symmetric by construction: assembled from outer products.
Eigen::MatrixXd traj_reward_hess(const RewardWeights& w, const State& state0, int frame0,
                                 const Eigen::VectorXd& actions, const SceneContext& scene,
                                 const Dynamics& dyn, const FeatureConstants& k);

// Value + gradient (+ Hessian when `hess` non-null) in one pass.
double traj_reward_derivs(const RewardWeights& w, const State& state0, int frame0,
                          const Eigen::VectorXd& actions, const SceneContext& scene,
                          const Dynamics& dyn, const FeatureConstants& k, Eigen::VectorXd* grad,
                          Eigen::MatrixXd* hess);

// Position-dependent reward terms (lane + bounds + collision; velocity has no
// position dependence) sampled on a regular grid, for heat-map export.
struct HeatmapGrid {
  double x0 = 0, x1 = 0;
  int nx = 0;
  double y0 = 0, y1 = 0;
  int ny = 0;
};

struct Heatmap {
  HeatmapGrid grid;
  std::vector<double> values;  // row-major, y outer, x inner
};

// only_feature: restrict to a single position feature (kLane/kBounds/
// kCollision), e.g. collision-only maps; std::nullopt sums all three.
Heatmap heatmap(const RewardWeights& w, const FeatureConstants& k, const RoadLayout& layout,
                const std::vector<Eigen::Vector2d>& neighbors, const HeatmapGrid& grid,
                std::optional<int> only_feature = std::nullopt);

}  // namespace dmval
