#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ocr/geom.hpp"
#include "ocr/json_io.hpp"
#include "ocr/sim.hpp"

namespace ocr {

/// Policy observation: object keypoints plus the ground-truth object pose
/// reported by the simulator.
struct Observation {
  KeypointSet keypoints;
  Pose2 obj_pose;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct EpisodeStep {
  Observation obs;
  Action action;
  Point2 proprio;
  friend bool operator==(const EpisodeStep&, const EpisodeStep&) = default;
};

struct Episode {
  std::vector<EpisodeStep> steps;
  friend bool operator==(const Episode&, const Episode&) = default;
};

struct RecStep {
  KeypointSet keypoints;
  Pose2 obj_pose;
  Action action;
  Point2 proprio;
  friend bool operator==(const RecStep&, const RecStep&) = default;
};

struct RecEpisode {
  std::vector<RecStep> steps;
  friend bool operator==(const RecEpisode&, const RecEpisode&) = default;
};

/// Contiguous window of one recovery episode.
struct Sequence {
  std::vector<KeypointSet> keypoints;
  std::vector<Action> actions;
  Point2 proprio0;
  /// Object pose at the first step of the window.
  Pose2 frame;
};

/// Window re-expressed in the frame of its initial object pose.
struct ZeroedSequence {
  std::vector<KeypointSet> keypoints_seq;
  std::vector<Action> actions_seq;
  Point2 proprio0;
  Pose2 source_frame;
};

/// Observation of a simulator state: template keypoints placed at the block pose.
Observation observe(const SimState& s, const KeypointSet& keypoint_template);

std::vector<RecEpisode> build_recovery_dataset(const std::vector<Episode>& demos, const KeypointSet& keypoint_template);

struct SequenceSet {
  std::vector<Sequence> sequences;
  /// Episodes shorter than the window length.
  int skipped = 0;
};

/// All stride-1 windows of length L that fit inside an episode.
SequenceSet extract_sequences(const std::vector<RecEpisode>& rec, int length);

/// Maps keypoints, actions and proprioception through inverse(frame).
ZeroedSequence zero_out(const Sequence& s);
/// Keeps world coordinates (identity source frame); the non-zeroed ablation.
ZeroedSequence keep_world_frame(const Sequence& s);
/// Maps a zeroed sequence back through its source frame.
Sequence restore(const ZeroedSequence& z);

/// Applies a rigid transform to every spatial quantity of a sequence.
Sequence transform_sequence(const Pose2& g, const Sequence& s);

/// Flattens the keypoint frames of an episode.
std::vector<KeypointSet> keypoint_frames(const Episode& e);

// Persistence: line-delimited JSON. Line 1 is a header naming the format,
// schema version and record kind; each episode is an "episode" line followed
// by one line per step.
inline constexpr int kEpisodeFormatVersion = 1;

// `meta` (when not null) is stored in the header for provenance.
void save_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes, const Json& meta = nullptr);
void save_episodes(const std::filesystem::path& path, const std::vector<RecEpisode>& episodes, const Json& meta = nullptr);
std::vector<Episode> load_episodes(const std::filesystem::path& path);
std::vector<RecEpisode> load_rec_episodes(const std::filesystem::path& path);

}  // namespace ocr
