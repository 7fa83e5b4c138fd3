#include "dmval/irl.hpp"

#include <Eigen/Cholesky>
#include <chrono>
#include <cmath>

#include "dmval/agent_rollout.hpp"
#include "dmval/errors.hpp"
#include "dmval/parallel.hpp"
#include "dmval/tactical.hpp"

namespace dmval {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

std::string to_string(TrainStatus s) {
  switch (s) {
    case TrainStatus::kConverged: return "converged";
    case TrainStatus::kFailedIndefiniteHessian: return "failed_indefinite_hessian";
    case TrainStatus::kFailedNoMinimum: return "failed_no_minimum";
  }
  return "unknown";
}

std::vector<SegmentTerms> demo_terms(const Demonstration& demo, int horizon,
                                     const FeatureConstants& k) {
  SceneContext scene = demo_scene(demo);
  Dynamics dyn{DynamicsModel::kVelocityControl, demo.dt};
  std::vector<SegmentTerms> out;
  for (const Segment& seg : segment_demo(demo, horizon)) {
    TrajectoryTerms t = trajectory_terms(seg.initial, seg.start_frame, seg.actions, scene, dyn,
                                         k, /*order=*/2);
    SegmentTerms st;
    st.start_frame = seg.start_frame;
    st.phi = t.totals;
    st.G = std::move(t.grads);
    st.H = std::move(t.hessians);
    out.push_back(std::move(st));
  }
  return out;
}

namespace {

struct SegmentEval {
  bool ok = false;
  double nll = 0;
  Eigen::Vector4d grad = Eigen::Vector4d::Zero();
};

// One segment's NLL and (optionally) its gradient w.r.t. theta. g and H are
// linear in theta, so both come from the precomputed per-feature pieces.
SegmentEval eval_segment(const RewardWeights& w, const SegmentTerms& t, bool want_grad) {
  const int dim = static_cast<int>(t.G[0].size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  for (int f = 0; f < 4; ++f) {
    g += w[f] * t.G[f];
    a -= w[f] * t.H[f];
  }
  SegmentEval ev;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return ev;  // -H not positive definite
  double logdet = 0;
  for (int i = 0; i < dim; ++i) {
    double l = llt.matrixL()(i, i);
    if (!(l > 0) || !std::isfinite(l)) return ev;
    logdet += std::log(l);
  }
  logdet *= 2;
  Eigen::VectorXd z = llt.solve(g);
  ev.nll = 0.5 * g.dot(z) - 0.5 * logdet + (dim / 2.0) * kLog2Pi;
  if (!std::isfinite(ev.nll)) return ev;
  ev.ok = true;
  if (want_grad) {
    Eigen::MatrixXd ainv = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
    for (int f = 0; f < 4; ++f) {
      ev.grad[f] = t.G[f].dot(z) + 0.5 * z.dot(t.H[f] * z) +
                   0.5 * ainv.cwiseProduct(t.H[f]).sum();
    }
  }
  return ev;
}

}  // namespace

NllValue segment_nll(const RewardWeights& w, const SegmentTerms& terms) {
  SegmentEval ev = eval_segment(w, terms, /*want_grad=*/false);
  NllValue v;
  v.ok = ev.ok;
  v.value = ev.nll;
  v.bad_segment = ev.ok ? -1 : 0;
  return v;
}

NllValue segment_nll(const RewardWeights& w, const Segment& seg, const SceneContext& scene,
                     const FeatureConstants& k) {
  Dynamics dyn{DynamicsModel::kVelocityControl, seg.dt};
  TrajectoryTerms t =
      trajectory_terms(seg.initial, seg.start_frame, seg.actions, scene, dyn, k, /*order=*/2);
  SegmentTerms st;
  st.start_frame = seg.start_frame;
  st.phi = t.totals;
  st.G = std::move(t.grads);
  st.H = std::move(t.hessians);
  return segment_nll(w, st);
}

NllValue demo_nll(const RewardWeights& w, const std::vector<SegmentTerms>& terms) {
  return demo_nll_grad(w, terms, nullptr);
}

NllValue demo_nll_grad(const RewardWeights& w, const std::vector<SegmentTerms>& terms,
                       Eigen::Vector4d* grad) {
  if (!w.allFinite()) throw ContractError("weights must be finite");
  NllValue out;
  out.ok = true;
  if (grad) grad->setZero();
  for (std::size_t i = 0; i < terms.size(); ++i) {
    SegmentEval ev = eval_segment(w, terms[i], grad != nullptr);
    if (!ev.ok) {
      out.ok = false;
      out.value = 0;
      out.bad_segment = static_cast<int>(i);
      return out;
    }
    out.value += ev.nll;
    if (grad) *grad += ev.grad;
  }
  return out;
}

namespace {

TrainingDiagnostics init_diagnostics(const Eigen::Vector4d& theta_init,
                                     const std::vector<SegmentTerms>& terms) {
  TrainingDiagnostics d;
  for (const SegmentTerms& t : terms) {
    SegmentEval ev = eval_segment(theta_init, t, /*want_grad=*/true);
    if (ev.ok) {
      d.init_jacobian += ev.grad;
    } else {
      d.init_jacobian_complete = false;
    }
  }
  double vel = d.init_jacobian[kVelocity];
  double others = 0;
  for (int f = 1; f < 4; ++f) others = std::max(others, std::abs(d.init_jacobian[f]));
  d.vel_dominance = vel < 0 && std::abs(vel) >= 10 * others && std::abs(vel) > 0;
  return d;
}

Eigen::Vector4d apply_constraints(Eigen::Vector4d theta, const OptimizerConfig& opt) {
  if (opt.constrain_vel_nonpositive && theta[kVelocity] > -1e-6) theta[kVelocity] = -1e-6;
  return theta;
}

}  // namespace

TrainingResult train(const Demonstration& demo, int horizon, const FeatureConstants& k,
                     const OptimizerConfig& opt) {
  auto t_start = std::chrono::steady_clock::now();
  std::vector<SegmentTerms> terms = demo_terms(demo, horizon, k);
  if (terms.empty()) {
    throw ContractError("demo " + demo.demo_id + " is shorter than one horizon window");
  }

  TrainingResult res;
  res.diagnostics = init_diagnostics(opt.theta_init, terms);

  Eigen::Vector4d theta = apply_constraints(opt.theta_init, opt);
  Eigen::Vector4d grad;
  NllValue f = demo_nll_grad(theta, terms, &grad);
  auto finish = [&](TrainStatus status) {
    res.status = status;
    res.wall_time_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
    return res;
  };
  if (!f.ok) {
    res.bad_segment = f.bad_segment;
    return finish(TrainStatus::kFailedIndefiniteHessian);
  }
  res.final_nll = f.value;

  Eigen::Matrix4d h_inv = Eigen::Matrix4d::Identity();
  bool h_unscaled = true;
  for (int iter = 1; iter <= opt.max_iters; ++iter) {
    res.iterations = iter;
    if (grad.lpNorm<Eigen::Infinity>() <= opt.tol) {
      res.weights = theta;
      res.iterations = iter - 1;
      return finish(TrainStatus::kConverged);
    }

    Eigen::Vector4d dir = -(h_inv * grad);
    if (dir.dot(grad) >= 0) {  // quasi-Newton model went bad; steepest descent
      h_inv.setIdentity();
      h_unscaled = true;
      dir = -grad;
    }

    // per-iteration trust cap, relative to the current scale of theta
    double cap = opt.max_step * (1 + theta.lpNorm<Eigen::Infinity>());
    double dnorm = dir.lpNorm<Eigen::Infinity>();
    double t_step = dnorm > cap ? cap / dnorm : 1.0;

    const double slope = grad.dot(dir);
    bool accepted = false;
    Eigen::Vector4d theta_new;
    NllValue f_new;
    for (int halving = 0; halving < 50; ++halving) {
      theta_new = apply_constraints(theta + t_step * dir, opt);
      f_new = demo_nll(theta_new, terms);
      if (!f_new.ok) {
        // The likelihood is undefined at the trial point: the optimizer has
        // driven -H out of the positive-definite cone. Abort rather than
        // shrink the step; leaving the cone is the diagnosis, not an obstacle.
        res.bad_segment = f_new.bad_segment;
        return finish(TrainStatus::kFailedIndefiniteHessian);
      }
      if (f_new.value <= f.value + 1e-4 * t_step * slope) {
        accepted = true;
        break;
      }
      t_step *= 0.5;
    }
    if (!accepted) return finish(TrainStatus::kFailedNoMinimum);

    Eigen::Vector4d grad_new;
    NllValue f_check = demo_nll_grad(theta_new, terms, &grad_new);
    if (!f_check.ok) {  // cannot happen: same point as the accepted trial
      res.bad_segment = f_check.bad_segment;
      return finish(TrainStatus::kFailedIndefiniteHessian);
    }

    Eigen::Vector4d s = theta_new - theta;
    Eigen::Vector4d y = grad_new - grad;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (h_unscaled) {
        // calibrate the initial inverse Hessian to the first observed
        // curvature before updating; the identity is wildly mis-scaled when
        // the starting gradient is large and the first step was cap-limited
        h_inv = (sy / y.squaredNorm()) * Eigen::Matrix4d::Identity();
        h_unscaled = false;
      }
      Eigen::Matrix4d eye = Eigen::Matrix4d::Identity();
      double rho = 1.0 / sy;
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    theta = theta_new;
    grad = grad_new;
    f = f_check;
    res.final_nll = f.value;
  }
  if (grad.lpNorm<Eigen::Infinity>() <= opt.tol) {
    res.weights = theta;
    return finish(TrainStatus::kConverged);
  }
  return finish(TrainStatus::kFailedNoMinimum);
}

std::vector<GridEntry> grid_search(const std::vector<Demonstration>& demos,
                                   const ConstantsGrid& grid, int horizon,
                                   const OptimizerConfig& opt, const AgentConfig& agent,
                                   int jobs) {
  if (grid.c_values.empty() || grid.sigma_x_values.empty() || grid.sigma_y_values.empty()) {
    throw ContractError("constants grid must have at least one value per axis");
  }
  if (demos.empty()) throw ContractError("grid search needs at least one demonstration");

  std::vector<GridEntry> entries;
  for (double c : grid.c_values) {
    for (double sx : grid.sigma_x_values) {
      for (double sy : grid.sigma_y_values) {
        GridEntry e;
        e.constants = FeatureConstants{c, sx, sy};
        std::vector<TacticalLabel> labels(demos.size(), TacticalLabel::kCarFollowing);
        std::vector<int> outcome(demos.size(), -1);  // -1 failed, else label
        parallel_for(static_cast<int>(demos.size()), jobs, [&](int i) {
          const Demonstration& demo = demos[static_cast<std::size_t>(i)];
          TrainingResult tr = train(demo, horizon, e.constants, opt);
          if (tr.status != TrainStatus::kConverged) return;
          AgentConfig acfg = agent;
          acfg.dt = demo.dt;
          AgentRollout ro = rollout(demo, tr.weights, acfg, e.constants);
          EgoPath path = path_from_rollout(ro, demo.ego.length, demo.ego.width);
          TacticalOutcome oc = classify(path, demo.neighbors, demo.layout);
          labels[static_cast<std::size_t>(i)] = oc.label;
          outcome[static_cast<std::size_t>(i)] = 1;
        });
        for (std::size_t i = 0; i < demos.size(); ++i) {
          if (outcome[i] < 0) {
            ++e.failed;
            continue;
          }
          ++e.converged;
          switch (labels[i]) {
            case TacticalLabel::kCollision: ++e.collisions; break;
            case TacticalLabel::kOffRoad: ++e.offroad; break;
            case TacticalLabel::kLaneChange: ++e.lane_changes; break;
            case TacticalLabel::kCarFollowing: ++e.car_following; break;
          }
        }
        e.desirable = e.lane_changes + e.car_following;
        entries.push_back(e);
      }
    }
  }
  // rank by desirable count; stable sort keeps enumeration order on ties,
  // so earlier grid entries are preferred
  std::stable_sort(entries.begin(), entries.end(),
                   [](const GridEntry& a, const GridEntry& b) { return a.desirable > b.desirable; });
  return entries;
}

}  // namespace dmval
