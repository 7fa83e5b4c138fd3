#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dmval/errors.hpp"
#include "dmval/tactical.hpp"
#include "support/fixtures.hpp"

using namespace dmval;

namespace {

constexpr double kDt = 0.04;

EgoPath path_of(const std::vector<Eigen::Vector2d>& positions, int first_frame = 0,
                double length = 4.0, double width = 2.0) {
  EgoPath p;
  p.first_frame = first_frame;
  p.length = length;
  p.width = width;
  for (const Eigen::Vector2d& q : positions) p.states.push_back({q.x(), q.y(), 0, 0});
  return p;
}

// Straight path along the lane-1 center of the two-lane road.
EgoPath following_path(int n = 20) {
  return path_of(fixtures::straight_positions(n, 30.0, 2.0, kDt));
}

Track parked_neighbor(int id, double x, double y, int n = 20) {
  std::vector<Eigen::Vector2d> pos(static_cast<std::size_t>(n), {x, y});
  return fixtures::track_from_positions(id, pos, kDt, fixtures::layout3());
}

}  // namespace

TEST_CASE("paths carry over frames and footprints from tracks and rollouts") {
  Track t = parked_neighbor(4, 12.0, 2.0, 7);
  t.frames.front().vx = 3.5;
  EgoPath p = path_from_track(t);
  CHECK(p.first_frame == 0);
  CHECK(p.frame_count() == 7);
  CHECK(p.last_frame() == 6);
  CHECK(p.length == 4.0);
  CHECK(p.width == 2.0);
  CHECK(p.states[0].x == 12.0);
  CHECK(p.states[0].vx == 3.5);

  AgentRollout r;
  r.first_frame = 11;
  r.states = {{0, 2, 30, 0}, {1.2, 2, 30, 0}};
  EgoPath q = path_from_rollout(r, 4.8, 1.9);
  CHECK(q.first_frame == 11);
  CHECK(q.frame_count() == 2);
  CHECK(q.length == 4.8);
  CHECK(q.width == 1.9);
}

TEST_CASE("collision needs strict overlap on both axes") {
  EgoPath ego = following_path();  // length 4, width 2

  SUBCASE("touching bumpers is not a collision") {
    // A leader at the same speed, centers exactly (4+4)/2 apart on every
    // frame: permanently touching, never overlapping. 25 m/s over 0.04 s
    // advances exactly 1 m, so both position sequences are exact integers
    // and the gap is exactly 4.0 rather than 4 plus rounding noise.
    EgoPath same_speed = path_of(fixtures::straight_positions(20, 25.0, 2.0, kDt));
    Track nb = fixtures::track_from_positions(
        1, fixtures::straight_positions(20, 25.0, 2.0, kDt, 4.0), kDt, fixtures::layout3());
    CHECK_FALSE(detect_collision(same_speed, {nb}).has_value());
  }
  SUBCASE("longitudinal overlap alone is not enough") {
    Track nb = parked_neighbor(1, 10.0, 4.1);  // dy = 2.1 > 2.0
    CHECK_FALSE(detect_collision(ego, {nb}).has_value());
  }
  SUBCASE("lateral overlap alone is not enough") {
    Track nb = parked_neighbor(1, 100.0, 2.5);
    CHECK_FALSE(detect_collision(ego, {nb}).has_value());
  }
  SUBCASE("the first overlapping frame is reported") {
    Track nb = parked_neighbor(1, 12.0, 3.0);
    // Overlap opens when |ego_x - 12| < 4: ego_x = 30*0.04*i = 1.2i > 8.
    std::optional<int> f = detect_collision(ego, {nb});
    REQUIRE(f.has_value());
    CHECK(*f == 7);  // 1.2*7 = 8.4, first frame past 8.0
  }
  SUBCASE("neighbors are only tested on frames they exist") {
    Track nb = parked_neighbor(1, 12.0, 3.0, 3);  // gone before frame 7
    CHECK_FALSE(detect_collision(ego, {nb}).has_value());
    std::vector<Eigen::Vector2d> pos(10, {12.0, 3.0});
    Track late = fixtures::track_from_positions(2, pos, kDt, fixtures::layout3(), 9);
    std::optional<int> f = detect_collision(ego, {late});
    REQUIRE(f.has_value());
    CHECK(*f == 9);  // overlap was already open when the neighbor appeared
  }
}

TEST_CASE("road departure triggers strictly beyond the outer bounds") {
  RoadLayout lay = fixtures::layout3();  // bounds -2, 10

  SUBCASE("the boundary itself is on the road") {
    EgoPath p = path_of({{0, 2}, {1, 10.0}, {2, -2.0}, {3, 2}});
    CHECK_FALSE(detect_offroad(p, lay).has_value());
  }
  SUBCASE("the first frame beyond the bound is reported") {
    EgoPath p = path_of({{0, 2}, {1, 9.0}, {2, 10.5}, {3, 2}, {4, -2.5}});
    std::optional<int> f = detect_offroad(p, lay);
    REQUIRE(f.has_value());
    CHECK(*f == 2);
  }
  SUBCASE("frame numbering respects the path origin") {
    EgoPath p = path_of({{0, 2}, {1, -4.0}}, 50);
    std::optional<int> f = detect_offroad(p, lay);
    REQUIRE(f.has_value());
    CHECK(*f == 51);
  }
}

TEST_CASE("lane changes are divider crossings between valid lanes") {
  RoadLayout lay = fixtures::layout3();  // divider at 4, lanes [0,4) and [4,8)

  SUBCASE("the first frame on the far side is reported") {
    EgoPath p = path_of({{0, 2.0}, {1, 3.0}, {2, 3.9}, {3, 4.1}, {4, 6.0}}, 10);
    std::optional<int> f = detect_lane_change(p, lay);
    REQUIRE(f.has_value());
    CHECK(*f == 13);
  }
  SUBCASE("lateral drift within one lane is not a change") {
    EgoPath p = path_of({{0, 0.2}, {1, 1.9}, {2, 3.9}, {3, 0.5}});
    CHECK_FALSE(detect_lane_change(p, lay).has_value());
  }
  SUBCASE("leaving across the outer marking is not a change") {
    // Crossing the y=0 marking exits the marked lanes; that path is headed
    // off the road and must not read as a lane change.
    EgoPath p = path_of({{0, 1.0}, {1, -0.5}, {2, -1.5}});
    CHECK_FALSE(detect_lane_change(p, lay).has_value());
    CHECK_FALSE(detect_offroad(p, lay).has_value());  // still inside bounds
  }
  SUBCASE("right changes are detected too") {
    EgoPath p = path_of({{0, 6.0}, {1, 3.0}});
    std::optional<int> f = detect_lane_change(p, lay);
    REQUIRE(f.has_value());
    CHECK(*f == 1);
  }
}

TEST_CASE("classification follows the severity hierarchy") {
  RoadLayout lay = fixtures::layout3();

  // One path per canonical label, each built to trip every detector below
  // its own severity as well, so the ordering is what decides.
  SUBCASE("collision overrides everything") {
    // Crosses the divider, then leaves the road, and clips a parked car.
    EgoPath p = path_of({{0, 2}, {2, 4.5}, {4, 6}, {6, 10.5}, {8, 6}, {10, 6}});
    Track nb = parked_neighbor(1, 10.0, 6.0, 6);
    TacticalOutcome out = classify(p, {nb}, lay);
    CHECK(out.label == TacticalLabel::kCollision);
    REQUIRE(out.event_frame.has_value());
    CHECK(*out.event_frame == detect_collision(p, {nb}).value());
  }
  SUBCASE("road departure overrides a lane change") {
    EgoPath p = path_of({{0, 2}, {2, 4.5}, {4, 6}, {6, 10.5}, {8, 6}});
    TacticalOutcome out = classify(p, {}, lay);
    CHECK(out.label == TacticalLabel::kOffRoad);
    CHECK(*out.event_frame == 3);
  }
  SUBCASE("a clean change is a lane change") {
    EgoPath p = path_of({{0, 2}, {2, 3.5}, {4, 4.5}, {6, 6}});
    TacticalOutcome out = classify(p, {}, lay);
    CHECK(out.label == TacticalLabel::kLaneChange);
    CHECK(*out.event_frame == 2);
  }
  SUBCASE("an uneventful path is car following") {
    TacticalOutcome out = classify(following_path(), {}, lay);
    CHECK(out.label == TacticalLabel::kCarFollowing);
    CHECK_FALSE(out.event_frame.has_value());
  }
}

TEST_CASE("randomized paths always respect detector dominance") {
  RoadLayout lay = fixtures::layout3();
  std::mt19937_64 rng(90210);
  std::uniform_real_distribution<double> uy(-3.0, 11.0);
  std::uniform_real_distribution<double> ux_step(0.5, 1.5);
  std::uniform_int_distribution<int> un(2, 30);
  std::uniform_int_distribution<int> unb(0, 3);
  std::uniform_real_distribution<double> unbx(0.0, 30.0);

  for (int rep = 0; rep < 200; ++rep) {
    int n = un(rng);
    std::vector<Eigen::Vector2d> pos;
    double x = 0;
    for (int i = 0; i < n; ++i) {
      pos.push_back({x, uy(rng)});
      x += ux_step(rng);
    }
    EgoPath p = path_of(pos);
    std::vector<Track> neighbors;
    for (int j = unb(rng); j > 0; --j) {
      neighbors.push_back(parked_neighbor(j, unbx(rng), uy(rng), n));
    }

    TacticalOutcome out = classify(p, neighbors, lay);
    bool coll = detect_collision(p, neighbors).has_value();
    bool off = detect_offroad(p, lay).has_value();
    bool lc = detect_lane_change(p, lay).has_value();
    CAPTURE(rep);
    if (coll) {
      CHECK(out.label == TacticalLabel::kCollision);
    } else if (off) {
      CHECK(out.label == TacticalLabel::kOffRoad);
    } else if (lc) {
      CHECK(out.label == TacticalLabel::kLaneChange);
    } else {
      CHECK(out.label == TacticalLabel::kCarFollowing);
    }
  }
}

TEST_CASE("tabulation pairs model and human labels by demo id") {
  std::map<std::string, TacticalLabel> model = {
      {"r1_t2", TacticalLabel::kCollision},    {"r1_t5", TacticalLabel::kLaneChange},
      {"r1_t9", TacticalLabel::kLaneChange},   {"r2_t1", TacticalLabel::kOffRoad},
      {"r2_t4", TacticalLabel::kCarFollowing}, {"r2_t8", TacticalLabel::kLaneChange}};
  std::map<std::string, TacticalLabel> human;
  for (const auto& [id, label] : model) {
    (void)label;
    human[id] = TacticalLabel::kLaneChange;
  }

  TacticalTable tab = tabulate(model, human);
  CHECK(tab.n == 6);
  REQUIRE(tab.rows.size() == 4);
  CHECK(tab.rows[0].label == TacticalLabel::kCollision);
  CHECK(tab.rows[0].model_count == 1);
  CHECK(tab.rows[0].human_count == 0);
  CHECK(tab.rows[1].model_count == 1);
  CHECK(tab.rows[2].model_count == 3);
  CHECK(tab.rows[2].human_count == 6);
  CHECK(tab.rows[2].human_pct == 100.0);
  CHECK(tab.rows[3].model_count == 1);
  CHECK(tab.rows[0].model_pct == doctest::Approx(100.0 / 6).epsilon(1e-12));
  CHECK(tab.model_desirable_pct == doctest::Approx(400.0 / 6).epsilon(1e-12));
  CHECK(tab.human_desirable_pct == 100.0);

  SUBCASE("orphaned ids on either side are contract errors") {
    std::map<std::string, TacticalLabel> short_human = human;
    short_human.erase("r2_t8");
    CHECK_THROWS_AS(tabulate(model, short_human), ContractError);
    std::map<std::string, TacticalLabel> extra_human = human;
    extra_human["r9_t9"] = TacticalLabel::kLaneChange;
    CHECK_THROWS_AS(tabulate(model, extra_human), ContractError);
  }
  SUBCASE("empty input is a contract error") {
    CHECK_THROWS_AS(tabulate({}, {}), ContractError);
  }
}

TEST_CASE("tactical label names are stable") {
  CHECK(to_string(TacticalLabel::kCollision) == "collision");
  CHECK(to_string(TacticalLabel::kOffRoad) == "offroad");
  CHECK(to_string(TacticalLabel::kLaneChange) == "lane_change");
  CHECK(to_string(TacticalLabel::kCarFollowing) == "car_following");
}
