#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dmval {

// Column-name mapping for the three input CSV files. Defaults match the
// common drone-recording layout; override to ingest renamed exports.
struct ColumnMap {
  // tracks file
  std::string frame = "frame";
  std::string track_id = "id";
  std::string x = "x";
  std::string y = "y";
  std::string width = "width";    // longitudinal bounding-box length [m]
  std::string height = "height";  // lateral bounding-box width [m]
  std::string x_velocity = "xVelocity";
  std::string y_velocity = "yVelocity";
  std::string x_acceleration = "xAcceleration";
  std::string y_acceleration = "yAcceleration";
  std::string lane_id = "laneId";
  std::string preceding_id = "precedingId";
  // tracks meta file
  std::string meta_id = "id";
  std::string driving_direction = "drivingDirection";
  std::string num_lane_changes = "numLaneChanges";
  std::string meta_width = "width";
  std::string meta_height = "height";
  // recording meta file
  std::string rec_id = "id";
  std::string frame_rate = "frameRate";
  std::string speed_limit = "speedLimit";
  std::string upper_lane_markings = "upperLaneMarkings";
  std::string lower_lane_markings = "lowerLaneMarkings";
  std::string has_merge_lane = "hasMergeLane";  // optional column
};

struct RecordingMeta {
  int recording_id = 0;
  double frame_rate = 25.0;           // Hz
  double speed_limit = -1.0;          // m/s, -1 = none posted
  std::vector<double> upper_markings; // raw y positions, image frame
  std::vector<double> lower_markings;
  bool has_merge_lane = false;

  double dt() const { return 1.0 / frame_rate; }
};

struct TrackFrame {
  int frame = 0;
  double x = 0;   // vehicle center
  double y = 0;
  double vx = 0;
  double vy = 0;
  double ax = 0;
  double ay = 0;
  int lane_id = 0;  // raw value on ingestion; canonical index after canonicalize()
};

// Driving direction: 1 = upper roadway (decreasing raw x), 2 = lower
// roadway (increasing raw x).
struct Track {
  int id = 0;
  int driving_direction = 0;
  int num_lane_changes = 0;
  double length = 0;  // longitudinal extent [m]
  double width = 0;   // lateral extent [m]
  bool canonical = false;
  std::vector<TrackFrame> frames;  // contiguous frame indices

  int first_frame() const { return frames.front().frame; }
  int last_frame() const { return frames.back().frame; }
  // Frame lookup by absolute index; nullptr outside the recorded span.
  const TrackFrame* at(int frame) const;
};

// Per-roadway geometry in the canonical frame (x along travel, y toward the
// driver's left, lane 1 = rightmost).
struct RoadLayout {
  std::vector<double> markings;      // ascending canonical y
  std::vector<double> lane_centers;  // midpoints of adjacent markings
  double lane_width = 0;             // median gap between adjacent markings
  double bound_low = 0;              // rightmost marking - lane_width / 2
  double bound_high = 0;             // leftmost marking + lane_width / 2

  int n_lanes() const { return static_cast<int>(lane_centers.size()); }
  // 1-based lane index of a canonical y; 0 right of all markings,
  // n_lanes()+1 left of all markings. Intervals are half-open upward.
  int lane_index(double y) const;
  bool valid_lane(int index) const { return index >= 1 && index <= n_lanes(); }
  bool offroad(double y) const { return y < bound_low || y > bound_high; }
};

// Markings must be ascending canonical positions, at least two of them.
RoadLayout build_layout(const std::vector<double>& markings_canonical);

struct Recording {
  RecordingMeta meta;
  std::vector<Track> tracks;  // raw image-frame coordinates
};

// Recording with every track rotated into its roadway's canonical frame and
// per-roadway layouts attached.
struct CanonicalRecording {
  RecordingMeta meta;
  RoadLayout upper_layout;  // empty markings if the roadway is unused
  RoadLayout lower_layout;
  std::vector<Track> tracks;

  const RoadLayout& layout_for(int driving_direction) const;
};

// Reads recordingMeta/tracksMeta/tracks CSVs from `dir` (names
// "<prefix>recordingMeta.csv" etc., prefix e.g. "01_"). Converts bounding-box
// corners to centers, validates cross-file id consistency and per-track frame
// contiguity. Throws SchemaError / DataIntegrityError with file context.
Recording load_recording(const std::filesystem::path& dir, const std::string& prefix,
                         const ColumnMap& cols = {});

// Lists "<prefix>" values for all recordings found in `dir`.
std::vector<std::string> find_recording_prefixes(const std::filesystem::path& dir);

// Mirrors a track into the canonical frame of its roadway. Idempotent:
// canonical tracks pass through unchanged. Lane indices are recomputed from
// the center's position between markings (the raw laneId numbering scheme is
// not portable across datasets).
Track canonicalize(const Track& track, const RecordingMeta& meta);

// Canonicalizes every track and builds both roadway layouts. Tracks whose
// centers never fall inside their roadway's marking span raise
// DataIntegrityError.
CanonicalRecording canonicalize(const Recording& rec);

}  // namespace dmval
