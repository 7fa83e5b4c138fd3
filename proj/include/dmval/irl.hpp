#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

#include "dmval/reward.hpp"
#include "dmval/scenario_extraction.hpp"

namespace dmval {

struct OptimizerConfig {
  Eigen::Vector4d theta_init{-0.1, 0.1, -0.1, -0.1};
  double tol = 1e-6;    // gradient infinity-norm
  int max_iters = 500;
  double max_step = 0.5;  // per-iteration cap: ||dtheta||_inf <= max_step * (1 + ||theta||_inf)
  // Experimental: clamp the velocity weight to stay negative. Off by
  // default; standard training leaves theta unconstrained.
  bool constrain_vel_nonpositive = false;
};

// Per-segment reward pieces that do not depend on theta: per-feature totals,
// gradients and Hessians w.r.t. the demonstrated action sequence under
// velocity-control dynamics. g(theta) and H(theta) are linear combinations.
struct SegmentTerms {
  int start_frame = 0;
  FeatureVector phi = FeatureVector::Zero();
  std::array<Eigen::VectorXd, 4> G;
  std::array<Eigen::MatrixXd, 4> H;
};

std::vector<SegmentTerms> demo_terms(const Demonstration& demo, int horizon,
                                     const FeatureConstants& k);

// Laplace-approximation negated log-likelihood of one segment:
//   nll = -( 1/2 g^T H^-1 g + 1/2 log det(-H) - (d/2) log 2pi ),   d = 2N.
// Defined only while -H is positive definite; positive definiteness is
// decided by Cholesky factorization, not by the determinant's sign (an even
// number of negative eigenvalues keeps the determinant positive).
struct NllValue {
  bool ok = false;
  double value = 0;        // meaningful when ok
  int bad_segment = -1;    // index of the first indefinite segment when !ok
};

NllValue segment_nll(const RewardWeights& w, const SegmentTerms& terms);
// Convenience wrapper computing the terms directly from a segment.
NllValue segment_nll(const RewardWeights& w, const Segment& seg, const SceneContext& scene,
                     const FeatureConstants& k);

// Sum over all segments; fails on nan/inf weights (contract) and reports the
// first indefinite segment.
NllValue demo_nll(const RewardWeights& w, const std::vector<SegmentTerms>& terms);

// demo_nll plus its analytic gradient w.r.t. theta.
NllValue demo_nll_grad(const RewardWeights& w, const std::vector<SegmentTerms>& terms,
                       Eigen::Vector4d* grad);

enum class TrainStatus {
  kConverged,
  kFailedIndefiniteHessian,  // an NLL evaluation hit non-PD -H; training aborts
                             // rather than stepping around the indefinite point
  kFailedNoMinimum,          // line search exhausted on finite values, or
                             // iteration budget spent above tolerance
};

std::string to_string(TrainStatus s);

struct TrainingDiagnostics {
  // NLL gradient at theta_init, summed over the segments (all of them are
  // included whenever the initial point is definite; otherwise over the
  // definite subset, flagged below).
  Eigen::Vector4d init_jacobian = Eigen::Vector4d::Zero();
  bool init_jacobian_complete = true;
  // Velocity component negative and >= 10x every other component in
  // magnitude: the gradient signature that typically precedes an
  // indefinite-Hessian abort.
  bool vel_dominance = false;
};

struct TrainingResult {
  TrainStatus status = TrainStatus::kFailedNoMinimum;
  RewardWeights weights = RewardWeights::Zero();  // meaningful when converged
  double final_nll = 0;                           // NLL at the last definite incumbent
  int iterations = 0;
  int bad_segment = -1;                           // for kFailedIndefiniteHessian
  TrainingDiagnostics diagnostics;
  double wall_time_ms = 0;
};

// Deterministic dense BFGS with Armijo backtracking on demo_nll. Any
// evaluation (incumbent or trial) at indefinite -H aborts with
// kFailedIndefiniteHessian.
TrainingResult train(const Demonstration& demo, int horizon, const FeatureConstants& k,
                     const OptimizerConfig& opt);

// -------- feature-constant grid search --------

struct ConstantsGrid {
  std::vector<double> c_values;
  std::vector<double> sigma_x_values;
  std::vector<double> sigma_y_values;
};

struct GridEntry {
  FeatureConstants constants;
  int desirable = 0;  // lane-change + car-following rollouts
  int converged = 0;
  int failed = 0;
  int collisions = 0;
  int offroad = 0;
  int lane_changes = 0;
  int car_following = 0;
};

struct AgentConfig;  // rollout module

// Trains and rolls out every demo under each (c, sigma_x, sigma_y)
// combination and ranks combinations by desirable tactical outcomes.
// Combinations are enumerated c-outer / sigma_y-inner; ties keep enumeration
// order, so earlier grid entries are preferred. Empty grids are a contract
// error.
std::vector<GridEntry> grid_search(const std::vector<Demonstration>& demos,
                                   const ConstantsGrid& grid, int horizon,
                                   const OptimizerConfig& opt, const AgentConfig& agent,
                                   int jobs = 1);

}  // namespace dmval
