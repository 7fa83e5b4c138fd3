#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmval/tactical.hpp"

namespace dmval {

// Longitudinal surrogate-safety metrics against a preceding vehicle.
//   ttc     = x_gap / v_rel   (closing only; +inf otherwise)
//   inv_ttc = v_rel / x_gap   (signed; negative while opening)
//   t_gap   = x_gap / v_agent (+inf when the agent is not moving forward)
// x_gap is bumper-to-bumper: center distance minus the half lengths.
struct Metrics {
  double ttc = 0;
  double inv_ttc = 0;
  double t_gap = 0;
};

Metrics compute_metrics(double x_gap, double v_rel, double v_agent);

struct OperationalSample {
  int frame = 0;
  double x_gap = 0;
  double v_rel = 0;
  double v_agent = 0;
  Metrics m;
  bool degenerate = false;  // contact: x_gap <= 0
};

enum class Exclusion {
  kNone,
  kMultiplePreceding,    // more than one distinct leader over the span
  kOutOfSightAtChange,   // leader not visible at the lane-change frame
  kNoPreceding,          // no leader visible at all
};

std::string to_string(Exclusion e);

struct PhaseSeries {
  std::string demo_id;
  std::string source;  // "human" | "model"
  TacticalLabel label = TacticalLabel::kCarFollowing;
  Exclusion exclusion = Exclusion::kNone;
  int preceding_id = -1;
  std::optional<int> lane_change_frame;
  std::vector<OperationalSample> samples;

  bool usable() const { return exclusion == Exclusion::kNone; }
  // Sample recorded at a given absolute frame, if any.
  const OperationalSample* at(int frame) const;
};

// Follows the leader in the ego's initial lane. Lane-change series run from
// the first frame through the change frame (the metric of the evasive
// maneuver refers to the evaded leader); car-following series run the whole
// path, cropped where the leader leaves view. The rule set is identical for
// human and model trajectories.
PhaseSeries preceding_series(const std::string& demo_id, const std::string& source,
                             const EgoPath& path, const std::vector<Track>& neighbors,
                             const RoadLayout& layout, TacticalLabel label,
                             std::optional<int> lane_change_frame);

// Two-sided Student-t survival probability P(|T_df| >= |t|), computed via the
// regularized incomplete beta function. students_t_sf(0, df) == 1.
double students_t_sf(double t, double df);

struct PairedComparison {
  int n = 0;
  double df = 0;
  double mean_human = 0;
  double mean_model = 0;
  double t = 0;        // paired t on (human - model) differences
  double p = 0;        // two-sided
  double cohen_d = 0;  // mean difference / sd of differences
};

struct LaneChangeStats {
  PairedComparison inv_ttc;
  PairedComparison t_gap;
};

// Pairs human and model lane-change series by demo id and compares the
// metric at each source's own lane-change frame. Throws
// InsufficientDataError below two pairs.
LaneChangeStats lane_change_point_stats(const std::vector<PhaseSeries>& human,
                                        const std::vector<PhaseSeries>& model);

// Writes one CSV per usable series (t_gap, inv_ttc per frame, with the
// initial and lane-change frames marked) grouped into
// <source>_<label>/ subdirectories, plus an index JSON. Returns the index
// path. Empty input still writes the (empty) index.
std::filesystem::path emit_phase_data(const std::vector<PhaseSeries>& series,
                                      const std::filesystem::path& out_dir);

}  // namespace dmval
