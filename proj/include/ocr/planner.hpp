#pragma once

#include <vector>

#include "ocr/geom.hpp"

namespace ocr {

struct PlanConfig {
  /// Step scale applied to δ_rec per planned frame.
  double alpha = 4.0;
  /// Horizon (frames per plan).
  int horizon = 16;
  /// End-effector/object distances bounding the delay ramp.
  double d_min = 20.0;
  double d_max = 160.0;
};

void validate(const PlanConfig& cfg);

/// Planned keypoint frames 1..L in the world frame.
struct RecoveryTrajectory {
  std::vector<KeypointSet> frames;
};

/// Number of stationary frames before the plan starts moving: the linear ramp
/// through (d_min, L) and (d_max, 0), rounded half-to-even, clamped to [0, L].
int delay(double d_pos, const PlanConfig& cfg);

/// Frame t (1-based) translates every keypoint by max(0, t - delay) * alpha * delta_rec.
RecoveryTrajectory plan_recovery(const KeypointSet& kps, Vec2 delta_rec, double d_pos, const PlanConfig& cfg);

}  // namespace ocr
