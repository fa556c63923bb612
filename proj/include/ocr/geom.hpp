#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace ocr {

/// Planar point or free vector in workspace units.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator-(Point2 a) { return {-a.x, -a.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
  friend Point2 operator/(Point2 a, double s) { return {a.x / s, a.y / s}; }
  Point2& operator+=(Point2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Point2& operator-=(Point2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  friend bool operator==(const Point2&, const Point2&) = default;
};

using Vec2 = Point2;

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
inline Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// SE(2) rigid transform. `theta` is kept in (-pi, pi].
class Pose2 {
 public:
  Pose2() = default;
  Pose2(double x, double y, double theta) : x_(x), y_(y), theta_(wrap_angle(theta)) {}

  static Pose2 identity() { return {}; }

  double x() const { return x_; }
  double y() const { return y_; }
  double theta() const { return theta_; }
  Point2 translation() const { return {x_, y_}; }

  /// Applies the transform to a point: R p + t.
  Point2 apply(Point2 p) const;
  /// Applies only the rotation part (for free vectors).
  Vec2 rotate_vec(Vec2 v) const;

  friend bool operator==(const Pose2&, const Pose2&) = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double theta_ = 0.0;
};

/// a∘b: first b, then a.
Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& p);

/// Ordered keypoints; index k always refers to the same template point.
struct KeypointSet {
  std::vector<Point2> points;

  std::size_t size() const { return points.size(); }
  friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

/// Rigid image of every template point under `pose` (homogeneous transform).
KeypointSet transform_keypoints(const Pose2& pose, const KeypointSet& keypoints);

/// Translates every keypoint by the same offset.
KeypointSet translate_keypoints(const KeypointSet& keypoints, Vec2 offset);

}  // namespace ocr
