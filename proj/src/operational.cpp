#include "dmval/operational.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "dmval/csv.hpp"
#include "dmval/errors.hpp"
#include "json.hpp"

namespace dmval {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Metrics compute_metrics(double x_gap, double v_rel, double v_agent) {
  Metrics m;
  m.ttc = v_rel > 0 ? x_gap / v_rel : kInf;
  m.inv_ttc = v_rel / x_gap;
  m.t_gap = v_agent > 0 ? x_gap / v_agent : kInf;
  return m;
}

std::string to_string(Exclusion e) {
  switch (e) {
    case Exclusion::kNone: return "none";
    case Exclusion::kMultiplePreceding: return "multiple_preceding";
    case Exclusion::kOutOfSightAtChange: return "out_of_sight_at_change";
    case Exclusion::kNoPreceding: return "no_preceding";
  }
  throw ContractError("unknown exclusion");
}

const OperationalSample* PhaseSeries::at(int frame) const {
  for (const OperationalSample& s : samples) {
    if (s.frame == frame) return &s;
  }
  return nullptr;
}

PhaseSeries preceding_series(const std::string& demo_id, const std::string& source,
                             const EgoPath& path, const std::vector<Track>& neighbors,
                             const RoadLayout& layout, TacticalLabel label,
                             std::optional<int> lane_change_frame) {
  if (path.states.empty()) throw ContractError("empty path in preceding_series");
  PhaseSeries series;
  series.demo_id = demo_id;
  series.source = source;
  series.label = label;
  series.lane_change_frame = lane_change_frame;

  const int ref_lane = layout.lane_index(path.states.front().y);
  int end_frame = path.last_frame();
  if (label == TacticalLabel::kLaneChange && lane_change_frame.has_value()) {
    end_frame = std::min(end_frame, *lane_change_frame);
  }

  // Leader per frame: nearest neighbor strictly ahead in the reference lane.
  // The reference lane is fixed at the start; at the lane-change frame the
  // ego has already left it, but the metric still refers to the evaded
  // leader, so the search lane does not follow the ego.
  struct LeaderHit {
    int frame;
    const Track* leader;
    const TrackFrame* leader_frame;
    const State* ego;
  };
  std::vector<LeaderHit> hits;
  std::set<int> leader_ids;
  for (int f = path.first_frame; f <= end_frame; ++f) {
    const State& ego = path.states[static_cast<size_t>(f - path.first_frame)];
    const Track* best = nullptr;
    const TrackFrame* best_frame = nullptr;
    for (const Track& nb : neighbors) {
      const TrackFrame* nf = nb.at(f);
      if (nf == nullptr) continue;
      if (layout.lane_index(nf->y) != ref_lane) continue;
      if (!(nf->x > ego.x)) continue;
      if (best == nullptr || nf->x < best_frame->x) {
        best = &nb;
        best_frame = nf;
      }
    }
    if (best != nullptr) {
      hits.push_back({f, best, best_frame, &ego});
      leader_ids.insert(best->id);
    }
  }

  if (leader_ids.empty()) {
    series.exclusion = Exclusion::kNoPreceding;
    return series;
  }
  if (leader_ids.size() > 1) {
    series.exclusion = Exclusion::kMultiplePreceding;
    return series;
  }
  series.preceding_id = *leader_ids.begin();

  if (label == TacticalLabel::kLaneChange && lane_change_frame.has_value() &&
      (hits.empty() || hits.back().frame != *lane_change_frame)) {
    series.exclusion = Exclusion::kOutOfSightAtChange;
    return series;
  }

  for (const LeaderHit& h : hits) {
    OperationalSample s;
    s.frame = h.frame;
    s.x_gap = (h.leader_frame->x - h.ego->x) - 0.5 * (h.leader->length + path.length);
    s.v_rel = h.ego->vx - h.leader_frame->vx;
    s.v_agent = h.ego->vx;
    s.m = compute_metrics(s.x_gap, s.v_rel, s.v_agent);
    s.degenerate = s.x_gap <= 0;
    series.samples.push_back(s);
  }
  return series;
}

double students_t_sf(double t, double df) {
  if (!(df > 0)) throw ContractError("student-t degrees of freedom must be positive");
  if (std::isnan(t)) throw ContractError("student-t statistic is NaN");
  if (std::isinf(t)) return 0;
  return boost::math::ibeta(df / 2, 0.5, df / (df + t * t));
}

namespace {

PairedComparison paired_comparison(const std::vector<double>& human,
                                   const std::vector<double>& model, const std::string& what) {
  if (human.size() != model.size()) throw ContractError("unpaired comparison inputs");
  const int n = static_cast<int>(human.size());
  if (n < 2) {
    throw InsufficientDataError("need at least 2 usable lane-change pairs for " + what +
                                ", have " + std::to_string(n));
  }
  PairedComparison c;
  c.n = n;
  c.df = n - 1;
  double sum_h = 0, sum_m = 0, sum_d = 0;
  for (int i = 0; i < n; ++i) {
    sum_h += human[static_cast<size_t>(i)];
    sum_m += model[static_cast<size_t>(i)];
    sum_d += human[static_cast<size_t>(i)] - model[static_cast<size_t>(i)];
  }
  c.mean_human = sum_h / n;
  c.mean_model = sum_m / n;
  double mean_d = sum_d / n;
  double ss = 0;
  for (int i = 0; i < n; ++i) {
    double d = human[static_cast<size_t>(i)] - model[static_cast<size_t>(i)] - mean_d;
    ss += d * d;
  }
  double sd = std::sqrt(ss / (n - 1));
  if (sd == 0) {
    c.t = mean_d == 0 ? 0 : (mean_d > 0 ? kInf : -kInf);
    c.cohen_d = c.t;
  } else {
    c.t = mean_d * std::sqrt(static_cast<double>(n)) / sd;
    c.cohen_d = mean_d / sd;
  }
  c.p = students_t_sf(c.t, c.df);
  return c;
}

}  // namespace

LaneChangeStats lane_change_point_stats(const std::vector<PhaseSeries>& human,
                                        const std::vector<PhaseSeries>& model) {
  // Metric value at the series' own lane-change frame, keyed by demo.
  auto point_values = [](const std::vector<PhaseSeries>& all) {
    std::map<std::string, Metrics> vals;
    for (const PhaseSeries& s : all) {
      if (s.label != TacticalLabel::kLaneChange || !s.usable() || !s.lane_change_frame) continue;
      const OperationalSample* sample = s.at(*s.lane_change_frame);
      if (sample == nullptr) continue;
      vals[s.demo_id] = sample->m;
    }
    return vals;
  };
  std::map<std::string, Metrics> hv = point_values(human);
  std::map<std::string, Metrics> mv = point_values(model);

  std::vector<double> inv_h, inv_m, gap_h, gap_m;
  for (const auto& [id, h] : hv) {
    auto it = mv.find(id);
    if (it == mv.end()) continue;
    const Metrics& m = it->second;
    if (std::isfinite(h.inv_ttc) && std::isfinite(m.inv_ttc)) {
      inv_h.push_back(h.inv_ttc);
      inv_m.push_back(m.inv_ttc);
    }
    if (std::isfinite(h.t_gap) && std::isfinite(m.t_gap)) {
      gap_h.push_back(h.t_gap);
      gap_m.push_back(m.t_gap);
    }
  }

  LaneChangeStats stats;
  stats.inv_ttc = paired_comparison(inv_h, inv_m, "inverse ttc");
  stats.t_gap = paired_comparison(gap_h, gap_m, "time gap");
  return stats;
}

std::filesystem::path emit_phase_data(const std::vector<PhaseSeries>& series,
                                      const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  nlohmann::ordered_json index;
  index["series"] = nlohmann::ordered_json::array();
  for (const PhaseSeries& s : series) {
    nlohmann::ordered_json entry;
    entry["demo_id"] = s.demo_id;
    entry["source"] = s.source;
    entry["label"] = to_string(s.label);
    entry["exclusion"] = to_string(s.exclusion);
    entry["preceding_id"] = s.preceding_id;
    if (s.lane_change_frame.has_value()) {
      entry["lane_change_frame"] = *s.lane_change_frame;
    } else {
      entry["lane_change_frame"] = nullptr;
    }
    entry["samples"] = s.samples.size();
    if (s.usable()) {
      std::string rel_dir = s.source + "_" + to_string(s.label);
      std::string rel_path = rel_dir + "/" + s.demo_id + ".csv";
      fs::create_directories(out_dir / rel_dir);

      csv::Writer w({"frame", "x_gap", "v_rel", "v_agent", "ttc", "inv_ttc", "t_gap",
                     "degenerate", "is_initial", "is_lane_change"});
      for (const OperationalSample& sample : s.samples) {
        bool is_initial = sample.frame == (s.samples.empty() ? -1 : s.samples.front().frame);
        bool is_change = s.lane_change_frame && sample.frame == *s.lane_change_frame;
        w.add_row({std::to_string(sample.frame), csv::Writer::format(sample.x_gap),
                   csv::Writer::format(sample.v_rel), csv::Writer::format(sample.v_agent),
                   csv::Writer::format(sample.m.ttc), csv::Writer::format(sample.m.inv_ttc),
                   csv::Writer::format(sample.m.t_gap), sample.degenerate ? "1" : "0",
                   is_initial ? "1" : "0", is_change ? "1" : "0"});
      }
      w.write_file(out_dir / rel_path);
      entry["path"] = rel_path;
    } else {
      entry["path"] = nullptr;
    }
    index["series"].push_back(entry);
  }

  fs::path index_path = out_dir / "phase_index.json";
  std::ofstream out(index_path);
  if (!out) throw ContractError("cannot write " + index_path.string());
  out << index.dump(2) << "\n";
  return index_path;
}

}  // namespace dmval
