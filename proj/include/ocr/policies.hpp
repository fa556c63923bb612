#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "ocr/dataset.hpp"
#include "ocr/planner.hpp"

namespace ocr {

/// Brute-force k-nearest-neighbour regression over standardized feature rows.
/// Features are split into groups; each group's squared distance is averaged
/// over its dimensions and multiplied by the group weight.
class KnnIndex {
 public:
  struct Group {
    std::size_t dims = 0;
    double weight = 1.0;
  };

  KnnIndex() = default;
  KnnIndex(std::vector<std::vector<double>> rows, std::vector<Group> groups);

  /// Indices of the k nearest rows; ties resolve to insertion order.
  std::vector<std::size_t> query(std::span<const double> feature, int k) const;

  std::size_t size() const { return rows_.size(); }
  std::size_t dims() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& scale() const { return scale_; }
  const std::vector<Group>& groups() const { return groups_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }

  static KnnIndex restore(std::vector<std::vector<double>> rows, std::vector<double> mean, std::vector<double> scale,
                          std::vector<Group> groups);

 private:
  void build_weights();

  std::vector<std::vector<double>> rows_;  // raw (unstandardized)
  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<double> weight_;  // per-dimension: group weight / (group dims * scale^2)
  std::vector<Group> groups_;
};

struct KnnConfig {
  int k = 1;
  /// Length of the stored action windows.
  int horizon = 16;
  /// Weight of the proprioception group relative to the keypoint group.
  double proprio_weight = 1.0;
  /// Store action windows in the object frame of the query step and map them
  /// back through the current object pose at act time.
  bool object_frame_actions = true;
};

/// π_b: maps the current observation and proprioception to an action window.
class BasePolicy {
 public:
  virtual ~BasePolicy() = default;
  virtual std::vector<Action> act(const Observation& obs, Point2 proprio) const = 0;
};

/// Nearest-neighbour stand-in for a behaviour-cloned policy. Every step of
/// every demo is indexed with its next `horizon` actions, padded at the end
/// of the episode by repeating the final action.
class KnnBasePolicy final : public BasePolicy {
 public:
  KnnBasePolicy(KnnIndex index, std::vector<std::vector<Action>> windows, KnnConfig cfg);

  std::vector<Action> act(const Observation& obs, Point2 proprio) const override;

  const KnnConfig& config() const { return cfg_; }
  const KnnIndex& index() const { return index_; }
  const std::vector<std::vector<Action>>& windows() const { return windows_; }

 private:
  KnnIndex index_;
  std::vector<std::vector<Action>> windows_;
  KnnConfig cfg_;
};

KnnBasePolicy train_base(const std::vector<Episode>& demos, const KnnConfig& cfg);
/// As above, plus episodes that end mid-task (no terminal hold): only their
/// full-length windows are indexed.
KnnBasePolicy train_base(const std::vector<Episode>& demos, const std::vector<Episode>& unpadded, const KnnConfig& cfg);

/// Query for π_inv: L keypoint frames plus the initial proprioception.
struct InverseQuery {
  std::vector<KeypointSet> keypoints;
  Point2 proprio;
};

/// π_inv: keypoint trajectory and proprioception → action window, in the
/// frame the policy was trained in.
class InversePolicy {
 public:
  virtual ~InversePolicy() = default;
  virtual std::vector<Action> act(const InverseQuery& q) const = 0;
  /// True when trained on sequences zeroed to their initial object pose.
  virtual bool zeroed() const = 0;
};

struct InverseConfig {
  int k = 1;
  double proprio_weight = 30.0;
  /// false trains on world-frame windows (non-zeroed ablation).
  bool zero_out = true;
};

class KnnInversePolicy final : public InversePolicy {
 public:
  KnnInversePolicy(KnnIndex index, std::vector<std::vector<Action>> windows, InverseConfig cfg, std::size_t n_keypoints,
                   int horizon);

  std::vector<Action> act(const InverseQuery& q) const override;
  bool zeroed() const override { return cfg_.zero_out; }

  const InverseConfig& config() const { return cfg_; }
  const KnnIndex& index() const { return index_; }
  const std::vector<std::vector<Action>>& windows() const { return windows_; }
  std::size_t n_keypoints() const { return n_keypoints_; }
  int horizon() const { return horizon_; }

 private:
  KnnIndex index_;
  std::vector<std::vector<Action>> windows_;
  InverseConfig cfg_;
  std::size_t n_keypoints_;
  int horizon_;
};

/// Builds π_inv from prepared sequences (already zeroed or kept in world frame).
KnnInversePolicy train_inverse(const std::vector<ZeroedSequence>& seqs, const InverseConfig& cfg);
/// Extracts, zeroes (per cfg.zero_out) and indexes length-L windows.
KnnInversePolicy train_inverse(const std::vector<RecEpisode>& rec, int horizon, const InverseConfig& cfg);

/// Runs π_inv on a world-frame plan: the plan and proprioception are moved
/// into the current object frame, and the returned actions back to the world.
std::vector<Action> inverse_act(const InversePolicy& p, const RecoveryTrajectory& plan, const Pose2& obj_pose,
                                Point2 proprio);

// Model files: line-delimited JSON, header first, one index row per line.
inline constexpr int kPolicyFormatVersion = 1;
void save_policy(const std::filesystem::path& path, const KnnBasePolicy& p, const Json& meta = nullptr);
void save_policy(const std::filesystem::path& path, const KnnInversePolicy& p, const Json& meta = nullptr);
KnnBasePolicy load_base_policy(const std::filesystem::path& path);
KnnInversePolicy load_inverse_policy(const std::filesystem::path& path);

}  // namespace ocr
