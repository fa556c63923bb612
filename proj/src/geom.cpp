#include "ocr/geom.hpp"

namespace ocr {

double wrap_angle(double theta) {
  double w = std::remainder(theta, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

Point2 Pose2::apply(Point2 p) const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  return {c * p.x - s * p.y + x_, s * p.x + c * p.y + y_};
}

Vec2 Pose2::rotate_vec(Vec2 v) const { return rotate(v, theta_); }

Pose2 compose(const Pose2& a, const Pose2& b) {
  const Point2 t = a.apply(b.translation());
  return {t.x, t.y, a.theta() + b.theta()};
}

Pose2 inverse(const Pose2& p) {
  const Vec2 t = rotate(-p.translation(), -p.theta());
  return {t.x, t.y, -p.theta()};
}

KeypointSet transform_keypoints(const Pose2& pose, const KeypointSet& keypoints) {
  KeypointSet out;
  out.points.reserve(keypoints.size());
  for (const Point2& p : keypoints.points) out.points.push_back(pose.apply(p));
  return out;
}

KeypointSet translate_keypoints(const KeypointSet& keypoints, Vec2 offset) {
  KeypointSet out = keypoints;
  for (Point2& p : out.points) p += offset;
  return out;
}

}  // namespace ocr
