#include "dmval/agent_rollout.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "dmval/errors.hpp"

namespace dmval {

namespace {

void validate_box(const AgentConfig& cfg) {
  if (!(cfg.ax_min < cfg.ax_max) || !(cfg.ay_min < cfg.ay_max)) {
    throw ContractError("acceleration bounds must satisfy min < max");
  }
  if (cfg.horizon < 1) throw ContractError("planning horizon must be >= 1");
  if (cfg.replan_stride < 1 || cfg.replan_stride > cfg.horizon) {
    throw ContractError("replan stride must lie in [1, horizon]");
  }
}

Eigen::VectorXd clamp_box(Eigen::VectorXd a, const AgentConfig& cfg) {
  for (Eigen::Index j = 0; j < a.size() / 2; ++j) {
    a[2 * j] = std::clamp(a[2 * j], cfg.ax_min, cfg.ax_max);
    a[2 * j + 1] = std::clamp(a[2 * j + 1], cfg.ay_min, cfg.ay_max);
  }
  return a;
}

}  // namespace

PlanResult plan(const RewardWeights& w, const State& state, int frame,
                const SceneContext& scene, const AgentConfig& cfg, const FeatureConstants& k,
                const Eigen::VectorXd& warm_start) {
  validate_box(cfg);
  const int dim = 2 * cfg.horizon;
  if (warm_start.size() != dim) {
    throw ContractError("warm start has dimension " + std::to_string(warm_start.size()) +
                        ", expected " + std::to_string(dim));
  }

  PlanResult res;
  res.actions = clamp_box(warm_start, cfg);

  double w_scale = w.lpNorm<Eigen::Infinity>();
  if (w_scale == 0) {
    res.objective = 0;  // flat objective: any feasible plan maximizes it
    return res;
  }
  // The argmax is invariant to positive weight scaling; normalizing makes
  // that hold by construction rather than up to convergence tolerance.
  RewardWeights wn = w / w_scale;

  Dynamics dyn{DynamicsModel::kAccelerationControl, cfg.dt};
  Eigen::VectorXd x = res.actions;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  // minimize f = -reward
  double fval = -traj_reward_derivs(wn, state, frame, x, scene, dyn, k, &grad, &hess);
  grad = -grad;
  hess = -hess;

  const double tol = cfg.planner_tol * (1 + grad.lpNorm<Eigen::Infinity>());

  int it = 0;
  for (; it < cfg.max_planner_iters; ++it) {
    Eigen::VectorXd pg = x - clamp_box(x - grad, cfg);
    if (pg.lpNorm<Eigen::Infinity>() <= tol) break;

    // Coordinates pinned at a bound with the gradient pushing outward are
    // held fixed and the Newton system is solved over the free block only; a
    // full-space Newton direction keeps pointing into the bound once part of
    // the plan saturates, and the loop would degrade to gradient crawling on
    // this badly conditioned objective.
    std::vector<Eigen::Index> free_idx;
    free_idx.reserve(static_cast<std::size_t>(dim));
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double lo = (j % 2 == 0) ? cfg.ax_min : cfg.ay_min;
      const double hi = (j % 2 == 0) ? cfg.ax_max : cfg.ay_max;
      const bool active = (x[j] <= lo && grad[j] > 0) || (x[j] >= hi && grad[j] < 0);
      if (!active) free_idx.push_back(j);
    }

    // Levenberg-damped Newton direction on the free block; the objective is
    // not concave everywhere (Gaussian tails), so damp until the model is PD.
    Eigen::VectorXd newton_dir = Eigen::VectorXd::Zero(dim);
    bool have_newton = false;
    if (!free_idx.empty()) {
      const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd hf(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index r = 0; r < nf; ++r) {
        gf[r] = grad[free_idx[static_cast<std::size_t>(r)]];
        for (Eigen::Index c = 0; c < nf; ++c) {
          hf(r, c) = hess(free_idx[static_cast<std::size_t>(r)],
                          free_idx[static_cast<std::size_t>(c)]);
        }
      }
      double diag_scale = std::max(1e-12, hf.diagonal().cwiseAbs().maxCoeff());
      double lambda = 0;
      const Eigen::MatrixXd eye_f = Eigen::MatrixXd::Identity(nf, nf);
      for (int attempt = 0; attempt < 40 && !have_newton; ++attempt) {
        Eigen::LLT<Eigen::MatrixXd> llt(hf + lambda * eye_f);
        if (llt.info() == Eigen::Success) {
          Eigen::VectorXd df = -llt.solve(gf);
          if (df.dot(gf) < 0 && df.allFinite()) {
            for (Eigen::Index r = 0; r < nf; ++r) {
              newton_dir[free_idx[static_cast<std::size_t>(r)]] = df[r];
            }
            have_newton = true;
          }
        }
        lambda = lambda == 0 ? 1e-8 * diag_scale : lambda * 10;
      }
    }

    // Backtracking along the projection arc. The Newton direction can be
    // wedged against the box (it may point entirely along saturated
    // coordinates) while free coordinates still have descent available, so
    // on failure retry along the raw gradient before concluding the iterate
    // is stuck.
    bool accepted = false;
    for (int pass = have_newton ? 0 : 1; pass < 2 && !accepted; ++pass) {
      Eigen::VectorXd dir = pass == 0 ? newton_dir : Eigen::VectorXd(-grad);
      double t_step = 1.0;
      for (int halving = 0; halving < 60; ++halving) {
        Eigen::VectorXd xt = clamp_box(x + t_step * dir, cfg);
        Eigen::VectorXd step = xt - x;
        if (step.lpNorm<Eigen::Infinity>() == 0) break;  // wedged against the box
        double slope = grad.dot(step);
        if (slope < 0) {
          double ft = -traj_reward(wn, state, frame, xt, scene, dyn, k);
          if (ft <= fval + 1e-4 * slope) {
            x = xt;
            fval = -traj_reward_derivs(wn, state, frame, x, scene, dyn, k, &grad, &hess);
            grad = -grad;
            hess = -hess;
            accepted = true;
            break;
          }
        }
        t_step *= 0.5;
      }
    }
    if (!accepted) break;
  }

  res.actions = x;
  res.iterations = it;
  res.objective = traj_reward(w, state, frame, x, scene, dyn, k);
  return res;
}

namespace {

Eigen::VectorXd shifted_warm_start(const Eigen::VectorXd& prev, int stride) {
  const Eigen::Index dim = prev.size();
  const Eigen::Index n = dim / 2;
  Eigen::VectorXd warm(dim);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index src = std::min(j + stride, n - 1);  // last action repeated
    warm[2 * j] = prev[2 * src];
    warm[2 * j + 1] = prev[2 * src + 1];
  }
  return warm;
}

}  // namespace

AgentRollout rollout_from(const State& state0, int first_frame, int n_frames,
                          const SceneContext& scene, const RewardWeights& w,
                          const AgentConfig& cfg, const FeatureConstants& k) {
  validate_box(cfg);
  if (n_frames < 1) throw ContractError("rollout needs at least one frame");

  AgentRollout r;
  r.first_frame = first_frame;
  r.states.reserve(static_cast<size_t>(n_frames));
  State state = state0;
  r.states.push_back(state);

  const int dim = 2 * cfg.horizon;
  Eigen::VectorXd warm = Eigen::VectorXd::Zero(dim);
  PlanResult cur;
  int plan_offset = 0;
  for (int i = 0; i < n_frames - 1; ++i) {
    if (i % cfg.replan_stride == 0) {
      if (i > 0) warm = shifted_warm_start(cur.actions, cfg.replan_stride);
      cur = plan(w, state, first_frame + i, scene, cfg, k, warm);
      r.planner_values.push_back(cur.objective);
      r.planner_iterations.push_back(cur.iterations);
      plan_offset = 0;
    }
    Eigen::Vector2d a = cur.actions.segment<2>(2 * plan_offset);
    ++plan_offset;
    r.actions.push_back(a);
    state = step_dynamics({DynamicsModel::kAccelerationControl, cfg.dt}, state, a);
    r.states.push_back(state);
  }
  return r;
}

AgentRollout rollout(const Demonstration& demo, const RewardWeights& w, const AgentConfig& cfg,
                     const FeatureConstants& k) {
  SceneContext scene = rollout_scene(demo, cfg.horizon);
  const TrackFrame& f0 = demo.ego.frames.front();
  State state0{f0.x, f0.y, f0.vx, f0.vy};
  return rollout_from(state0, demo.first_frame(), demo.frame_count(), scene, w, cfg, k);
}

}  // namespace dmval
