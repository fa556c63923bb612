#include "ocr/planner.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>

#include "ocr/error.hpp"

namespace ocr {

void validate(const PlanConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw Error(ErrorKind::kInvalidConfig, "plan.alpha must be > 0");
  if (cfg.horizon < 1) throw Error(ErrorKind::kInvalidConfig, "plan.horizon must be >= 1");
  if (!(cfg.d_min >= 0.0 && cfg.d_min < cfg.d_max))
    throw Error(ErrorKind::kInvalidConfig, "plan requires 0 <= d_min < d_max");
}

int delay(double d_pos, const PlanConfig& cfg) {
  const double L = static_cast<double>(cfg.horizon);
  const double ramp = -L / (cfg.d_max - cfg.d_min) * (d_pos - cfg.d_min) + L;
  // nearbyint honours the default FE_TONEAREST mode: ties go to even.
  const double rounded = std::nearbyint(ramp);
  return static_cast<int>(std::min(std::max(0.0, rounded), L));
}

RecoveryTrajectory plan_recovery(const KeypointSet& kps, Vec2 delta_rec, double d_pos, const PlanConfig& cfg) {
  const int df = delay(d_pos, cfg);
  RecoveryTrajectory plan;
  plan.frames.reserve(cfg.horizon);
  for (int t = 1; t <= cfg.horizon; ++t) {
    const double steps = static_cast<double>(std::max(0, t - df));
    plan.frames.push_back(translate_keypoints(kps, (steps * cfg.alpha) * delta_rec));
  }
  return plan;
}

}  // namespace ocr
