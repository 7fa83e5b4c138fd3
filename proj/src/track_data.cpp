#include "dmval/track_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "dmval/csv.hpp"
#include "dmval/errors.hpp"

namespace dmval {

const TrackFrame* Track::at(int frame) const {
  if (frames.empty()) return nullptr;
  int first = frames.front().frame;
  int idx = frame - first;
  if (idx < 0 || idx >= static_cast<int>(frames.size())) return nullptr;
  return &frames[static_cast<std::size_t>(idx)];
}

int RoadLayout::lane_index(double y) const {
  // half-open upward: y exactly on a divider already counts as the far side
  int idx = 0;
  for (double m : markings) {
    if (y >= m) ++idx;
  }
  return idx;  // 0 = right of all markings, n_lanes()+1 = left of all
}

RoadLayout build_layout(const std::vector<double>& markings_canonical) {
  if (markings_canonical.size() < 2) {
    throw GeometryError("road layout needs at least two lane markings, got " +
                        std::to_string(markings_canonical.size()));
  }
  RoadLayout layout;
  layout.markings = markings_canonical;
  std::sort(layout.markings.begin(), layout.markings.end());
  std::vector<double> gaps;
  for (std::size_t i = 0; i + 1 < layout.markings.size(); ++i) {
    double gap = layout.markings[i + 1] - layout.markings[i];
    if (gap <= 0) throw GeometryError("duplicate lane marking at y = " +
                                      std::to_string(layout.markings[i]));
    layout.lane_centers.push_back(layout.markings[i] + gap / 2);
    gaps.push_back(gap);
  }
  // median gap; even count averages the middle pair
  std::sort(gaps.begin(), gaps.end());
  std::size_t n = gaps.size();
  layout.lane_width = (n % 2 == 1) ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
  layout.bound_low = layout.markings.front() - layout.lane_width / 2;
  layout.bound_high = layout.markings.back() + layout.lane_width / 2;
  return layout;
}

namespace {

struct MetaRow {
  int direction = 0;
  int num_lane_changes = 0;
  double length = 0;
  double width = 0;
};

}  // namespace

Recording load_recording(const std::filesystem::path& dir, const std::string& prefix,
                         const ColumnMap& cols) {
  const auto rec_path = dir / (prefix + "recordingMeta.csv");
  const auto meta_path = dir / (prefix + "tracksMeta.csv");
  const auto tracks_path = dir / (prefix + "tracks.csv");

  Recording rec;

  {
    csv::Table t = csv::read_file(rec_path);
    if (t.rows.size() != 1) {
      throw SchemaError(rec_path.string() + ": expected exactly one data row, got " +
                        std::to_string(t.rows.size()));
    }
    rec.meta.recording_id = static_cast<int>(csv::to_int(t, 0, t.column(cols.rec_id)));
    rec.meta.frame_rate = csv::to_double(t, 0, t.column(cols.frame_rate));
    if (!(rec.meta.frame_rate > 0)) {
      throw DataIntegrityError(rec_path.string() + ": frame rate must be positive");
    }
    rec.meta.speed_limit = csv::to_double(t, 0, t.column(cols.speed_limit));
    rec.meta.upper_markings = csv::split_double_list(
        t.rows[0][t.column(cols.upper_lane_markings)], rec_path.string() + ": upper markings");
    rec.meta.lower_markings = csv::split_double_list(
        t.rows[0][t.column(cols.lower_lane_markings)], rec_path.string() + ": lower markings");
    if (t.has_column(cols.has_merge_lane)) {
      rec.meta.has_merge_lane = csv::to_int(t, 0, t.column(cols.has_merge_lane)) != 0;
    }
  }

  std::map<int, MetaRow> metas;
  {
    csv::Table t = csv::read_file(meta_path);
    std::size_t c_id = t.column(cols.meta_id);
    std::size_t c_dir = t.column(cols.driving_direction);
    std::size_t c_nlc = t.column(cols.num_lane_changes);
    std::size_t c_w = t.column(cols.meta_width);
    std::size_t c_h = t.column(cols.meta_height);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      int id = static_cast<int>(csv::to_int(t, r, c_id));
      MetaRow m;
      m.direction = static_cast<int>(csv::to_int(t, r, c_dir));
      if (m.direction != 1 && m.direction != 2) {
        throw DataIntegrityError(meta_path.string() + ": track " + std::to_string(id) +
                                 ": drivingDirection must be 1 or 2");
      }
      m.num_lane_changes = static_cast<int>(csv::to_int(t, r, c_nlc));
      m.length = csv::to_double(t, r, c_w);
      m.width = csv::to_double(t, r, c_h);
      if (!metas.emplace(id, m).second) {
        throw DataIntegrityError(meta_path.string() + ": duplicate track id " +
                                 std::to_string(id));
      }
    }
  }

  {
    csv::Table t = csv::read_file(tracks_path);
    std::size_t c_frame = t.column(cols.frame);
    std::size_t c_id = t.column(cols.track_id);
    std::size_t c_x = t.column(cols.x);
    std::size_t c_y = t.column(cols.y);
    std::size_t c_w = t.column(cols.width);
    std::size_t c_h = t.column(cols.height);
    std::size_t c_vx = t.column(cols.x_velocity);
    std::size_t c_vy = t.column(cols.y_velocity);
    std::size_t c_ax = t.column(cols.x_acceleration);
    std::size_t c_ay = t.column(cols.y_acceleration);
    std::size_t c_lane = t.column(cols.lane_id);
    (void)t.column(cols.preceding_id);  // required by the schema, derived downstream

    std::map<int, Track> by_id;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      int id = static_cast<int>(csv::to_int(t, r, c_id));
      auto meta_it = metas.find(id);
      if (meta_it == metas.end()) {
        throw DataIntegrityError(tracks_path.string() + ":" + std::to_string(r + 2) +
                                 ": track " + std::to_string(id) + " has no tracksMeta row");
      }
      Track& track = by_id[id];
      if (track.frames.empty()) {
        track.id = id;
        track.driving_direction = meta_it->second.direction;
        track.num_lane_changes = meta_it->second.num_lane_changes;
        track.length = meta_it->second.length;
        track.width = meta_it->second.width;
      }
      double len = csv::to_double(t, r, c_w);
      double wid = csv::to_double(t, r, c_h);
      if (std::abs(len - track.length) > 1e-6 || std::abs(wid - track.width) > 1e-6) {
        throw DataIntegrityError(tracks_path.string() + ":" + std::to_string(r + 2) +
                                 ": track " + std::to_string(id) +
                                 ": bounding box disagrees with tracksMeta");
      }
      TrackFrame f;
      f.frame = static_cast<int>(csv::to_int(t, r, c_frame));
      // corner-to-center conversion happens here, once, at ingestion
      f.x = csv::to_double(t, r, c_x) + len / 2;
      f.y = csv::to_double(t, r, c_y) + wid / 2;
      f.vx = csv::to_double(t, r, c_vx);
      f.vy = csv::to_double(t, r, c_vy);
      f.ax = csv::to_double(t, r, c_ax);
      f.ay = csv::to_double(t, r, c_ay);
      f.lane_id = static_cast<int>(csv::to_int(t, r, c_lane));
      track.frames.push_back(f);
    }

    for (auto& [id, track] : by_id) {
      std::sort(track.frames.begin(), track.frames.end(),
                [](const TrackFrame& a, const TrackFrame& b) { return a.frame < b.frame; });
      for (std::size_t i = 0; i + 1 < track.frames.size(); ++i) {
        int a = track.frames[i].frame, b = track.frames[i + 1].frame;
        if (b == a) {
          throw DataIntegrityError(tracks_path.string() + ": track " + std::to_string(id) +
                                   ": duplicate frame " + std::to_string(a));
        }
        if (b != a + 1) {
          throw DataIntegrityError(tracks_path.string() + ": track " + std::to_string(id) +
                                   ": frames not contiguous between " + std::to_string(a) +
                                   " and " + std::to_string(b));
        }
      }
      rec.tracks.push_back(std::move(track));
    }

    for (const auto& [id, m] : metas) {
      (void)m;
      if (std::none_of(rec.tracks.begin(), rec.tracks.end(),
                       [id_ = id](const Track& tr) { return tr.id == id_; })) {
        throw DataIntegrityError(meta_path.string() + ": track " + std::to_string(id) +
                                 " has no rows in tracks.csv");
      }
    }
  }

  std::sort(rec.tracks.begin(), rec.tracks.end(),
            [](const Track& a, const Track& b) { return a.id < b.id; });
  return rec;
}

std::vector<std::string> find_recording_prefixes(const std::filesystem::path& dir) {
  const std::string suffix = "recordingMeta.csv";
  std::vector<std::string> prefixes;
  if (!std::filesystem::is_directory(dir)) {
    throw DataIntegrityError("data directory not found: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      prefixes.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(prefixes.begin(), prefixes.end());
  return prefixes;
}

namespace {

std::vector<double> canonical_markings(const RecordingMeta& meta, int direction) {
  // upper roadway: travel toward -x, driver's left toward +y (image frame),
  // so y values carry over; lower roadway: travel toward +x, left is -y,
  // so markings mirror.
  std::vector<double> m = direction == 1 ? meta.upper_markings : meta.lower_markings;
  if (direction == 2) {
    for (double& v : m) v = -v;
  }
  std::sort(m.begin(), m.end());
  return m;
}

}  // namespace

Track canonicalize(const Track& track, const RecordingMeta& meta) {
  if (track.canonical) return track;
  Track out = track;
  out.canonical = true;
  RoadLayout layout = build_layout(canonical_markings(meta, track.driving_direction));
  bool seen_on_road = false;
  for (TrackFrame& f : out.frames) {
    if (track.driving_direction == 1) {
      f.x = -f.x;
      f.vx = -f.vx;
      f.ax = -f.ax;
    } else {
      f.y = -f.y;
      f.vy = -f.vy;
      f.ay = -f.ay;
    }
    f.lane_id = layout.lane_index(f.y);
    if (f.lane_id >= 1 && f.lane_id <= layout.n_lanes()) seen_on_road = true;
  }
  if (!seen_on_road) {
    throw DataIntegrityError("track " + std::to_string(track.id) +
                             " never occupies a lane of its roadway");
  }
  return out;
}

const RoadLayout& CanonicalRecording::layout_for(int driving_direction) const {
  return driving_direction == 1 ? upper_layout : lower_layout;
}

CanonicalRecording canonicalize(const Recording& rec) {
  CanonicalRecording out;
  out.meta = rec.meta;
  if (rec.meta.upper_markings.size() >= 2) {
    out.upper_layout = build_layout(canonical_markings(rec.meta, 1));
  }
  if (rec.meta.lower_markings.size() >= 2) {
    out.lower_layout = build_layout(canonical_markings(rec.meta, 2));
  }
  for (const Track& t : rec.tracks) {
    const auto& markings =
        t.driving_direction == 1 ? rec.meta.upper_markings : rec.meta.lower_markings;
    if (markings.size() < 2) {
      throw GeometryError("track " + std::to_string(t.id) + " drives on roadway " +
                          std::to_string(t.driving_direction) + " which has no lane markings");
    }
    out.tracks.push_back(canonicalize(t, rec.meta));
  }
  return out;
}

}  // namespace dmval
