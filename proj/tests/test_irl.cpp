#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "dmval/errors.hpp"
#include "dmval/irl.hpp"
#include "dmval/scenario_extraction.hpp"
#include "dmval/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace dmval;

namespace {

constexpr double kDt = 0.04;
constexpr double kLog2Pi = 1.8378770664093454836;

// Ego weaving gently above the lane-1 center behind a slower neighbor: every
// feature contributes residuals, so gradients are informative in all four
// directions.
Demonstration wobble_demo(int n_frames = 15) {
  std::vector<Eigen::Vector2d> ego(static_cast<std::size_t>(n_frames));
  double x = 0;
  for (int i = 0; i < n_frames; ++i) {
    double y = 2.2 + 0.3 * std::sin(2.0 * M_PI * i / 10.0);
    ego[static_cast<std::size_t>(i)] = {x, y};
    x += (29.0 + std::sin(2.0 * M_PI * i / 12.0)) * kDt;
  }
  Track lead = fixtures::track_from_positions(
      1, fixtures::straight_positions(n_frames, 27.0, 2.0, kDt, 18.0), kDt, fixtures::layout3());
  return fixtures::demo_from_positions(ego, kDt, {lead}, "wobble");
}

// Two windows: the first entirely on the lane-1 center (definite y-curvature
// for a positive lane weight), the second parked on the lane divider, where
// the lane feature's curvature flips sign. The split is 6/4 because a
// window's resulting states run one frame past its own: frames 1..5 must all
// still be at the center for window 0 to stay definite.
Demonstration divider_demo() {
  std::vector<Eigen::Vector2d> p;
  for (int i = 0; i < 6; ++i) p.push_back({30.0 * kDt * i, 2.0});
  for (int i = 6; i < 10; ++i) p.push_back({30.0 * kDt * i, 4.0});
  return fixtures::demo_from_positions(p, kDt, {}, "divider");
}

// Independent Laplace evaluation: definiteness and log-determinant from an
// eigendecomposition instead of a Cholesky factorization.
struct EigenNll {
  bool ok = true;
  double value = 0;
};

EigenNll eigen_nll(const RewardWeights& w, const std::vector<SegmentTerms>& terms) {
  EigenNll out;
  for (const SegmentTerms& t : terms) {
    const int dim = static_cast<int>(t.G[0].size());
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    for (int f = 0; f < 4; ++f) {
      g += w[f] * t.G[f];
      a -= w[f] * t.H[f];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.eigenvalues().minCoeff() <= 0) {
      out.ok = false;
      out.value = 0;
      return out;
    }
    Eigen::VectorXd gt = es.eigenvectors().transpose() * g;
    double quad = (gt.array().square() / es.eigenvalues().array()).sum();
    double logdet = es.eigenvalues().array().log().sum();
    out.value += 0.5 * quad - 0.5 * logdet + (dim / 2.0) * kLog2Pi;
  }
  return out;
}

}  // namespace

TEST_CASE("per-segment pieces are the trajectory terms of each window") {
  Demonstration demo = wobble_demo();
  FeatureConstants k;
  std::vector<SegmentTerms> terms = demo_terms(demo, 5, k);
  REQUIRE(terms.size() == 3);

  SceneContext scene = demo_scene(demo);
  std::vector<Segment> segs = segment_demo(demo, 5);
  Dynamics dyn{DynamicsModel::kVelocityControl, demo.dt};
  for (std::size_t i = 0; i < terms.size(); ++i) {
    TrajectoryTerms t =
        trajectory_terms(segs[i].initial, segs[i].start_frame, segs[i].actions, scene, dyn, k, 2);
    CHECK(terms[i].start_frame == segs[i].start_frame);
    CHECK((terms[i].phi - t.totals).cwiseAbs().maxCoeff() == 0.0);
    for (int f = 0; f < 4; ++f) {
      CHECK((terms[i].G[f] - t.grads[f]).cwiseAbs().maxCoeff() == 0.0);
      CHECK((terms[i].H[f] - t.hessians[f]).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("two-step window on the lane center matches the closed form") {
  // N=2 at the lane-1 center, driving exactly at the desired speed: the x
  // block contributes only its log-determinant, the y block reduces to the
  // lane feature's first two derivatives at the center.
  Segment seg;
  seg.start_frame = 0;
  seg.dt = kDt;
  seg.initial.x = 0;
  seg.initial.y = 2.0;
  seg.actions.resize(4);
  seg.actions << 30.0, 0.0, 30.0, 0.0;

  SceneContext scene = fixtures::static_scene(fixtures::layout3(), 30.0, 0, 3, {});
  FeatureConstants k;
  RewardWeights w{-1.0, 2.0, 0.0, 0.0};

  NllValue v = segment_nll(w, seg, scene, k);
  REQUIRE(v.ok);
  CHECK(v.value == doctest::Approx(10.624275849025924).epsilon(1e-13));

  // The window never senses absolute x, so shifting the start changes nothing.
  seg.initial.x = 13.5;
  NllValue shifted = segment_nll(w, seg, scene, k);
  REQUIRE(shifted.ok);
  CHECK(shifted.value == v.value);

  SUBCASE("zero lane weight leaves the y block without curvature") {
    NllValue flat = segment_nll(RewardWeights{-1.0, 0.0, 0.0, 0.0}, seg, scene, k);
    CHECK_FALSE(flat.ok);
  }
  SUBCASE("a positive velocity weight is rejected as indefinite") {
    NllValue pos = segment_nll(RewardWeights{0.5, 2.0, 0.0, 0.0}, seg, scene, k);
    CHECK_FALSE(pos.ok);
  }
  SUBCASE("a negative lane weight flips the y curvature out of the cone") {
    NllValue neg = segment_nll(RewardWeights{-1.0, -2.0, 0.0, 0.0}, seg, scene, k);
    CHECK_FALSE(neg.ok);
  }
}

TEST_CASE("finiteness coincides with positive definiteness, and values match an eigensolver") {
  Demonstration demo = wobble_demo();
  FeatureConstants k;
  std::vector<SegmentTerms> terms = demo_terms(demo, 5, k);

  std::mt19937_64 rng(515151);
  std::uniform_real_distribution<double> mag(0.2, 2.5);
  std::uniform_real_distribution<double> sym(-3.0, 3.0);
  std::bernoulli_distribution coin(0.5);

  int n_definite = 0, n_indefinite = 0;
  for (int rep = 0; rep < 40; ++rep) {
    RewardWeights w;
    w[kVelocity] = (coin(rng) ? -1.0 : 1.0) * mag(rng);
    for (int f = 1; f < 4; ++f) w[f] = sym(rng);

    EigenNll ref = eigen_nll(w, terms);
    NllValue got = demo_nll(w, terms);
    CAPTURE(rep);
    CHECK(got.ok == ref.ok);
    if (ref.ok) {
      ++n_definite;
      CHECK(got.value == doctest::Approx(ref.value).epsilon(1e-12));
    } else {
      ++n_indefinite;
      CHECK(got.value == 0);
      CHECK(got.bad_segment >= 0);
    }
  }
  // the draw ranges straddle the cone boundary, so both outcomes occur
  CHECK(n_definite >= 5);
  CHECK(n_indefinite >= 5);
}

TEST_CASE("demo likelihood adds over windows and reports the first bad one") {
  Demonstration demo = wobble_demo(10);
  FeatureConstants k;
  std::vector<SegmentTerms> terms = demo_terms(demo, 5, k);
  REQUIRE(terms.size() == 2);

  RewardWeights w{-0.9, 1.7, -1.1, -6.0};
  NllValue whole = demo_nll(w, terms);
  REQUIRE(whole.ok);
  NllValue s0 = segment_nll(w, terms[0]);
  NllValue s1 = segment_nll(w, terms[1]);
  REQUIRE(s0.ok);
  REQUIRE(s1.ok);
  CHECK(whole.value == s0.value + s1.value);

  std::vector<SegmentTerms> first_only = {terms[0]};
  CHECK(demo_nll(w, first_only).value == s0.value);

  // A window parked on the divider turns indefinite for a positive lane
  // weight; its index comes back.
  Demonstration div = divider_demo();
  std::vector<SegmentTerms> div_terms = demo_terms(div, 5, k);
  REQUIRE(div_terms.size() == 2);
  RewardWeights wdiv{-0.1, 1.0, -0.01, -0.1};
  NllValue bad = demo_nll(wdiv, div_terms);
  CHECK_FALSE(bad.ok);
  CHECK(bad.value == 0);
  CHECK(bad.bad_segment == 1);
  CHECK(segment_nll(wdiv, div_terms[0]).ok);
}

TEST_CASE("analytic weight gradient matches central differences") {
  Demonstration demo = wobble_demo();
  FeatureConstants k;
  std::vector<SegmentTerms> terms = demo_terms(demo, 5, k);

  auto nll_of = [&](const Eigen::Vector4d& th) {
    NllValue v = demo_nll(th, terms);
    REQUIRE(v.ok);
    return v.value;
  };

  for (Eigen::Vector4d theta : {Eigen::Vector4d{-0.9, 1.7, -1.1, -6.0},
                                Eigen::Vector4d{-1.0, 3.0, -3.0, -20.0},
                                Eigen::Vector4d{-0.1, 0.1, -0.1, -0.1}}) {
    Eigen::Vector4d grad;
    NllValue v = demo_nll_grad(theta, terms, &grad);
    REQUIRE(v.ok);
    Eigen::Vector4d fd = oracle::fd_gradient4(nll_of, theta);
    double scale = 1 + grad.cwiseAbs().maxCoeff();
    CAPTURE(theta.transpose());
    CHECK((grad - fd).cwiseAbs().maxCoeff() <= 1e-5 * scale);
  }
}

TEST_CASE("non-finite weights are a contract violation") {
  Demonstration demo = wobble_demo(10);
  std::vector<SegmentTerms> terms = demo_terms(demo, 5, FeatureConstants{});
  double nan = std::numeric_limits<double>::quiet_NaN();
  double inf = std::numeric_limits<double>::infinity();
  Eigen::Vector4d g;
  CHECK_THROWS_AS(demo_nll(RewardWeights{nan, 1, -1, -1}, terms), ContractError);
  CHECK_THROWS_AS(demo_nll(RewardWeights{-1, inf, -1, -1}, terms), ContractError);
  CHECK_THROWS_AS(demo_nll_grad(RewardWeights{-1, 1, -inf, -1}, terms, &g), ContractError);
}

TEST_CASE("training a structured demonstration converges deterministically") {
  Demonstration demo = fixtures::sampled_benign_demo();
  OptimizerConfig opt;
  FeatureConstants k;

  TrainingResult a = train(demo, 5, k, opt);
  CHECK(a.status == TrainStatus::kConverged);
  CHECK(a.weights[kVelocity] < 0);
  CHECK(a.iterations >= 1);
  CHECK(a.iterations <= opt.max_iters);
  CHECK(std::isfinite(a.final_nll));
  CHECK(a.diagnostics.init_jacobian_complete);

  TrainingResult b = train(demo, 5, k, opt);
  CHECK(b.status == a.status);
  CHECK(b.iterations == a.iterations);
  CHECK(b.final_nll == a.final_nll);
  CHECK((b.weights - a.weights).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a monotone accelerating demo aborts with the dominance signature") {
  Demonstration demo = fixtures::monotone_accel_demo();
  OptimizerConfig opt;
  TrainingResult res = train(demo, 5, FeatureConstants{}, opt);

  CHECK(res.status == TrainStatus::kFailedIndefiniteHessian);
  CHECK(res.bad_segment >= 0);
  CHECK(res.diagnostics.init_jacobian_complete);
  CHECK(res.diagnostics.vel_dominance);
  double vel = res.diagnostics.init_jacobian[kVelocity];
  CHECK(vel < 0);
  for (int f = 1; f < 4; ++f) {
    CHECK(std::abs(vel) >= 10 * std::abs(res.diagnostics.init_jacobian[f]));
  }
}

TEST_CASE("the velocity clamp rescues an initially indefinite start") {
  Demonstration demo = fixtures::sampled_benign_demo();
  FeatureConstants k;

  OptimizerConfig bad_start;
  bad_start.theta_init = Eigen::Vector4d{0.3, 0.1, -0.1, -0.1};
  TrainingResult aborted = train(demo, 5, k, bad_start);
  CHECK(aborted.status == TrainStatus::kFailedIndefiniteHessian);
  CHECK(aborted.iterations == 0);
  CHECK_FALSE(aborted.diagnostics.init_jacobian_complete);

  OptimizerConfig clamped = bad_start;
  clamped.constrain_vel_nonpositive = true;
  TrainingResult rescued = train(demo, 5, k, clamped);
  CHECK(rescued.status == TrainStatus::kConverged);
  CHECK(rescued.weights[kVelocity] < 0);

  // Both starts land on the same interior minimum.
  TrainingResult reference = train(demo, 5, k, OptimizerConfig{});
  REQUIRE(reference.status == TrainStatus::kConverged);
  for (int f = 0; f < 4; ++f) {
    CHECK(rescued.weights[f] ==
          doctest::Approx(reference.weights[f]).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("partial initial diagnostics sum over the definite windows only") {
  Demonstration div = divider_demo();
  FeatureConstants k;
  OptimizerConfig opt;
  opt.theta_init = Eigen::Vector4d{-0.1, 1.0, -0.01, -0.1};

  TrainingResult res = train(div, 5, k, opt);
  CHECK(res.status == TrainStatus::kFailedIndefiniteHessian);
  CHECK(res.bad_segment == 1);
  CHECK_FALSE(res.diagnostics.init_jacobian_complete);

  std::vector<SegmentTerms> terms = demo_terms(div, 5, k);
  std::vector<SegmentTerms> good = {terms[0]};
  Eigen::Vector4d expect;
  REQUIRE(demo_nll_grad(opt.theta_init, good, &expect).ok);
  CHECK((res.diagnostics.init_jacobian - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("demos shorter than one window cannot be trained") {
  Demonstration stub = fixtures::demo_from_positions(
      fixtures::straight_positions(4, 30.0, 2.0, kDt), kDt);
  CHECK(demo_terms(stub, 5, FeatureConstants{}).empty());
  CHECK_THROWS_AS(train(stub, 5, FeatureConstants{}, OptimizerConfig{}), ContractError);
}

TEST_CASE("status names are stable") {
  CHECK(to_string(TrainStatus::kConverged) == "converged");
  CHECK(to_string(TrainStatus::kFailedIndefiniteHessian) == "failed_indefinite_hessian");
  CHECK(to_string(TrainStatus::kFailedNoMinimum) == "failed_no_minimum");
}
