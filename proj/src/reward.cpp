#include "dmval/reward.hpp"

#include <cmath>

#include "dmval/errors.hpp"

namespace dmval {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779;  // 1/sqrt(2 pi)
}

SceneContext::SceneContext(RoadLayout layout, double v_d, int first_frame,
                           std::vector<std::vector<Eigen::Vector2d>> neighbor_positions)
    : layout_(std::move(layout)),
      v_d_(v_d),
      first_frame_(first_frame),
      frames_(std::move(neighbor_positions)) {}

bool SceneContext::covers(int frame) const {
  return frame >= first_frame_ && frame <= last_frame();
}

const std::vector<Eigen::Vector2d>& SceneContext::neighbors_at(int frame) const {
  if (!covers(frame)) {
    throw ContractError("scene context covers frames " + std::to_string(first_frame_) + ".." +
                        std::to_string(last_frame()) + ", queried " + std::to_string(frame));
  }
  return frames_[static_cast<std::size_t>(frame - first_frame_)];
}

namespace {

// Per-feature value and partial derivatives at one state. The reward depends
// on x only through the collision feature, on y through lane/bounds/
// collision, and on vx only through the velocity feature, so these are all
// the nonzero partials.
struct StateDerivs {
  FeatureVector value = FeatureVector::Zero();
  FeatureVector dx = FeatureVector::Zero();
  FeatureVector dy = FeatureVector::Zero();
  FeatureVector dvx = FeatureVector::Zero();
  FeatureVector dxx = FeatureVector::Zero();
  FeatureVector dyy = FeatureVector::Zero();
  FeatureVector dxy = FeatureVector::Zero();
  FeatureVector dvxvx = FeatureVector::Zero();
};

StateDerivs state_derivs(double x, double y, double vx, const SceneContext& scene, int frame,
                         const FeatureConstants& k) {
  StateDerivs d;

  // velocity: (vx - v_d)^2
  double dv = vx - scene.v_d();
  d.value[kVelocity] = dv * dv;
  d.dvx[kVelocity] = 2 * dv;
  d.dvxvx[kVelocity] = 2;

  // lane and road-bound Gaussians share one shape: sum_m exp(-c (m - y)^2)
  auto accumulate_gaussians = [&](int feature, const double* ms, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      double u = ms[i] - y;
      double e = std::exp(-k.c * u * u);
      d.value[feature] += e;
      d.dy[feature] += 2 * k.c * u * e;
      d.dyy[feature] += 2 * k.c * e * (2 * k.c * u * u - 1);
    }
  };
  const auto& centers = scene.layout().lane_centers;
  accumulate_gaussians(kLane, centers.data(), centers.size());
  const double bounds[2] = {scene.layout().bound_low, scene.layout().bound_high};
  accumulate_gaussians(kBounds, bounds, 2);

  // collision: product of normalized 1-D Gaussian densities per neighbor
  double isx2 = 1.0 / (k.sigma_x * k.sigma_x);
  double isy2 = 1.0 / (k.sigma_y * k.sigma_y);
  for (const Eigen::Vector2d& o : scene.neighbors_at(frame)) {
    double ux = x - o.x();
    double uy = y - o.y();
    double gx = kInvSqrt2Pi / k.sigma_x * std::exp(-0.5 * ux * ux * isx2);
    double gy = kInvSqrt2Pi / k.sigma_y * std::exp(-0.5 * uy * uy * isy2);
    double gxp = -ux * isx2 * gx;                 // d gx / dx
    double gyp = -uy * isy2 * gy;
    double gxpp = (ux * ux * isx2 - 1) * isx2 * gx;
    double gypp = (uy * uy * isy2 - 1) * isy2 * gy;
    d.value[kCollision] += gx * gy;
    d.dx[kCollision] += gxp * gy;
    d.dy[kCollision] += gx * gyp;
    d.dxx[kCollision] += gxpp * gy;
    d.dyy[kCollision] += gx * gypp;
    d.dxy[kCollision] += gxp * gyp;
  }
  return d;
}

struct ResultingState {
  double x, y, vx;
};

// Rank-one and symmetrized cross updates written through the upper triangle
// and mirrored, so the accumulated matrix is bitwise symmetric no matter how
// the expression would otherwise be evaluated.
void add_outer(Eigen::MatrixXd& dst, double s, const Eigen::VectorXd& u) {
  if (s == 0) return;
  const Eigen::Index n = u.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double su = s * u[i];
    if (su == 0) continue;
    for (Eigen::Index j = i; j < n; ++j) {
      double v = su * u[j];
      dst(i, j) += v;
      if (i != j) dst(j, i) += v;
    }
  }
}

void add_cross(Eigen::MatrixXd& dst, double s, const Eigen::VectorXd& u,
               const Eigen::VectorXd& v) {
  if (s == 0) return;
  const Eigen::Index n = u.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double val = s * (u[i] * v[j] + v[i] * u[j]);
      if (val == 0) continue;
      dst(i, j) += val;
      if (i != j) dst(j, i) += val;
    }
  }
}

// Integrates the action sequence and reports, for each of the N resulting
// states, the rows of the (linear) action-to-state Jacobian needed by the
// chain rule: d x_k / da, d y_k / da, d vx_k / da.
class StateChain {
 public:
  StateChain(const State& s0, const Eigen::VectorXd& actions, const Dynamics& dyn)
      : dyn_(dyn), actions_(actions) {
    if (actions.size() % 2 != 0 || actions.size() == 0) {
      throw ContractError("action sequence must have positive even length, got " +
                          std::to_string(actions.size()));
    }
    n_ = static_cast<int>(actions.size() / 2);
    states_.reserve(static_cast<std::size_t>(n_));
    State s = s0;
    for (int j = 0; j < n_; ++j) {
      s = step_dynamics(dyn, s, actions.segment<2>(2 * j));
      states_.push_back({s.x, s.y, s.vx});
    }
  }

  int n() const { return n_; }
  const ResultingState& state(int kk) const { return states_[static_cast<std::size_t>(kk - 1)]; }

  // Jacobian rows for resulting state k (1-based), as dense 2N vectors.
  void jacobians(int kk, Eigen::VectorXd& jx, Eigen::VectorXd& jy, Eigen::VectorXd& jvx) const {
    const double dt = dyn_.dt;
    jx.setZero(2 * n_);
    jy.setZero(2 * n_);
    jvx.setZero(2 * n_);
    if (dyn_.model == DynamicsModel::kVelocityControl) {
      for (int j = 0; j < kk; ++j) {
        jx[2 * j] = dt;
        jy[2 * j + 1] = dt;
      }
      jvx[2 * (kk - 1)] = 1.0;
    } else {
      // p_k = p_0 + k dt v_0 + dt^2 sum_{j<=k-2} (k-1-j) a_j ;  v_k = v_0 + dt sum_{j<k} a_j
      for (int j = 0; j <= kk - 2; ++j) {
        double w = dt * dt * (kk - 1 - j);
        jx[2 * j] = w;
        jy[2 * j + 1] = w;
      }
      for (int j = 0; j < kk; ++j) jvx[2 * j] = dt;
    }
  }

 private:
  Dynamics dyn_;
  Eigen::VectorXd actions_;
  int n_ = 0;
  std::vector<ResultingState> states_;
};

}  // namespace

State step_dynamics(const Dynamics& dyn, const State& s, const Eigen::Vector2d& action) {
  State out = s;
  if (dyn.model == DynamicsModel::kVelocityControl) {
    out.x = s.x + action.x() * dyn.dt;
    out.y = s.y + action.y() * dyn.dt;
    out.vx = action.x();
    out.vy = action.y();
  } else {
    // position advances with the pre-update velocity
    out.x = s.x + s.vx * dyn.dt;
    out.y = s.y + s.vy * dyn.dt;
    out.vx = s.vx + action.x() * dyn.dt;
    out.vy = s.vy + action.y() * dyn.dt;
  }
  return out;
}

FeatureVector features(double x, double y, double vx, const SceneContext& scene, int frame,
                       const FeatureConstants& k) {
  return state_derivs(x, y, vx, scene, frame, k).value;
}

TrajectoryTerms trajectory_terms(const State& state0, int frame0, const Eigen::VectorXd& actions,
                                 const SceneContext& scene, const Dynamics& dyn,
                                 const FeatureConstants& k, int order) {
  StateChain chain(state0, actions, dyn);
  const int n = chain.n();
  const int dim = 2 * n;

  TrajectoryTerms terms;
  if (order >= 1) {
    for (auto& g : terms.grads) g = Eigen::VectorXd::Zero(dim);
  }
  if (order >= 2) {
    for (auto& h : terms.hessians) h = Eigen::MatrixXd::Zero(dim, dim);
  }

  Eigen::VectorXd jx, jy, jvx;
  for (int kk = 1; kk <= n; ++kk) {
    const ResultingState& s = chain.state(kk);
    StateDerivs d = state_derivs(s.x, s.y, s.vx, scene, frame0 + kk, k);
    terms.totals += d.value;
    if (order < 1) continue;
    chain.jacobians(kk, jx, jy, jvx);
    for (int f = 0; f < 4; ++f) {
      if (d.dx[f] != 0) terms.grads[f] += d.dx[f] * jx;
      if (d.dy[f] != 0) terms.grads[f] += d.dy[f] * jy;
      if (d.dvx[f] != 0) terms.grads[f] += d.dvx[f] * jvx;
    }
    if (order < 2) continue;
    for (int f = 0; f < 4; ++f) {
      // linear dynamics: H_f = J^T (state hessian) J, mirrored writes keep
      // the result bitwise symmetric
      add_outer(terms.hessians[f], d.dxx[f], jx);
      add_outer(terms.hessians[f], d.dyy[f], jy);
      add_outer(terms.hessians[f], d.dvxvx[f], jvx);
      add_cross(terms.hessians[f], d.dxy[f], jx, jy);
    }
  }
  return terms;
}

double traj_reward_derivs(const RewardWeights& w, const State& state0, int frame0,
                          const Eigen::VectorXd& actions, const SceneContext& scene,
                          const Dynamics& dyn, const FeatureConstants& k, Eigen::VectorXd* grad,
                          Eigen::MatrixXd* hess) {
  StateChain chain(state0, actions, dyn);
  const int n = chain.n();
  const int dim = 2 * n;
  double value = 0;
  if (grad) grad->setZero(dim);
  if (hess) hess->setZero(dim, dim);

  Eigen::VectorXd jx, jy, jvx;
  for (int kk = 1; kk <= n; ++kk) {
    const ResultingState& s = chain.state(kk);
    StateDerivs d = state_derivs(s.x, s.y, s.vx, scene, frame0 + kk, k);
    value += w.dot(d.value);
    if (!grad && !hess) continue;
    chain.jacobians(kk, jx, jy, jvx);
    double rx = w.dot(d.dx), ry = w.dot(d.dy), rvx = w.dot(d.dvx);
    if (grad) *grad += rx * jx + ry * jy + rvx * jvx;
    if (hess) {
      double rxx = w.dot(d.dxx), ryy = w.dot(d.dyy), rvv = w.dot(d.dvxvx), rxy = w.dot(d.dxy);
      add_outer(*hess, rxx, jx);
      add_outer(*hess, ryy, jy);
      add_outer(*hess, rvv, jvx);
      add_cross(*hess, rxy, jx, jy);
    }
  }
  return value;
}

double traj_reward(const RewardWeights& w, const State& state0, int frame0,
                   const Eigen::VectorXd& actions, const SceneContext& scene,
                   const Dynamics& dyn, const FeatureConstants& k) {
  return traj_reward_derivs(w, state0, frame0, actions, scene, dyn, k, nullptr, nullptr);
}

Eigen::VectorXd traj_reward_grad(const RewardWeights& w, const State& state0, int frame0,
                                 const Eigen::VectorXd& actions, const SceneContext& scene,
                                 const Dynamics& dyn, const FeatureConstants& k) {
  Eigen::VectorXd g;
  traj_reward_derivs(w, state0, frame0, actions, scene, dyn, k, &g, nullptr);
  return g;
}

Eigen::MatrixXd traj_reward_hess(const RewardWeights& w, const State& state0, int frame0,
                                 const Eigen::VectorXd& actions, const SceneContext& scene,
                                 const Dynamics& dyn, const FeatureConstants& k) {
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  traj_reward_derivs(w, state0, frame0, actions, scene, dyn, k, &g, &h);
  return h;
}

Heatmap heatmap(const RewardWeights& w, const FeatureConstants& k, const RoadLayout& layout,
                const std::vector<Eigen::Vector2d>& neighbors, const HeatmapGrid& grid,
                std::optional<int> only_feature) {
  if (grid.nx < 2 || grid.ny < 2) throw ContractError("heatmap grid needs nx, ny >= 2");
  if (only_feature && *only_feature == kVelocity) {
    throw ContractError("heatmap covers position-dependent features only");
  }
  // a throwaway scene holding the neighbor snapshot at frame 0
  SceneContext scene(layout, 0.0, 0, {neighbors});
  Heatmap out;
  out.grid = grid;
  out.values.reserve(static_cast<std::size_t>(grid.nx) * static_cast<std::size_t>(grid.ny));
  for (int iy = 0; iy < grid.ny; ++iy) {
    double y = grid.y0 + (grid.y1 - grid.y0) * iy / (grid.ny - 1);
    for (int ix = 0; ix < grid.nx; ++ix) {
      double x = grid.x0 + (grid.x1 - grid.x0) * ix / (grid.nx - 1);
      FeatureVector phi = features(x, y, /*vx=*/0.0, scene, 0, k);
      double v;
      if (only_feature) {
        v = w[*only_feature] * phi[*only_feature];
      } else {
        v = w[kLane] * phi[kLane] + w[kBounds] * phi[kBounds] + w[kCollision] * phi[kCollision];
      }
      out.values.push_back(v);
    }
  }
  return out;
}

}  // namespace dmval
