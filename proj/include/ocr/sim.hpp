#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ocr/geom.hpp"

namespace ocr {

/// T-block dimensions. The object frame has its origin at the area centroid,
/// the bar on top (+y) and the stem pointing down (-y).
struct TBlockSpec {
  double bar_width = 120.0;
  double bar_height = 30.0;
  double stem_width = 30.0;
  double stem_height = 90.0;
};

/// Axis-aligned box.
struct Box2 {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 512.0;
  double y_max = 512.0;

  bool contains(Point2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }
  Point2 clamp(Point2 p) const;
  double area() const { return std::max(0.0, x_max - x_min) * std::max(0.0, y_max - y_min); }
};

enum class Region { kId, kOod, kAny };

/// "id", "ood", "any".
const char* region_name(Region r);
Region parse_region(const std::string& s);

/// Half-plane split on the block centroid: ID iff coord[axis] <= threshold
/// (or >= when `id_below` is false). The threshold itself belongs to ID.
struct IdRegionSpec {
  int axis = 0;
  double threshold = 256.0;
  bool id_below = true;
  /// OOD resets keep the centroid at least this far past the threshold.
  double ood_reset_margin = 100.0;
};

struct SimConfig {
  Box2 workspace{};
  double ee_radius = 15.0;
  TBlockSpec t_block{};
  Pose2 target_pose{256.0, 256.0, std::numbers::pi / 4.0};
  double dt = 0.1;
  double max_push_speed = 10.0;
  /// Pusher/block Coulomb coefficient (sticking inside the cone).
  double contact_friction = 0.3;
  /// Characteristic length of the block/table limit surface; smaller values
  /// make off-centre pushes rotate the block more.
  double limit_surface_radius = 45.0;
  /// Longest ee displacement resolved in one contact sub-step.
  double substep_length = 1.0;
  double success_coverage = 0.90;
  int max_steps = 300;
  IdRegionSpec id_region{};
  /// Box the block centroid is sampled from at reset (intersected with the region).
  Box2 block_spawn{110.0, 110.0, 420.0, 402.0};
  /// Box the end-effector is sampled from at reset.
  Box2 ee_spawn{30.0, 30.0, 482.0, 482.0};
  /// Optional override of the keypoint template (object frame). Empty selects
  /// the default five-point layout.
  std::vector<Point2> keypoint_template;
  std::uint64_t seed = 0;
};

/// Validates invariants; throws ocr::Error(kInvalidConfig) on violation.
void validate(const SimConfig& cfg);

struct SimState {
  Pose2 block_pose;
  Point2 ee_pos;
  int step_count = 0;
  /// Stream state of the reset generator (kept for provenance).
  std::uint64_t rng_state = 0;

  friend bool operator==(const SimState&, const SimState&) = default;
};

/// Commanded end-effector position for one control tick.
struct Action {
  Point2 target;
  friend bool operator==(const Action&, const Action&) = default;
};

/// Block geometry derived from a TBlockSpec.
class TBlock {
 public:
  explicit TBlock(const TBlockSpec& spec = {});

  const TBlockSpec& spec() const { return spec_; }
  /// Counter-clockwise outline in the object frame.
  const std::array<Point2, 8>& outline() const { return outline_; }
  /// The two interior-disjoint rectangles (bar, stem), CCW corners.
  const std::array<std::array<Point2, 4>, 2>& rects() const { return rects_; }
  double area() const;
  /// Largest centroid-to-vertex distance.
  double radius() const { return radius_; }
  /// Centroid, two bar tips, stem tip, bar/stem junction.
  KeypointSet default_keypoints() const;

  struct Closest {
    Point2 point;      // closest boundary point
    Vec2 normal;       // outward unit normal at that point
    double signed_distance;  // negative inside
  };
  /// Closest outline point to `p`, everything in the object frame.
  Closest closest(Point2 p) const;
  bool contains(Point2 p) const;

 private:
  TBlockSpec spec_;
  std::array<Point2, 8> outline_{};
  std::array<std::array<Point2, 4>, 2> rects_{};
  double radius_ = 0.0;
};

KeypointSet keypoint_template(const SimConfig& cfg);

SimState reset(const SimConfig& cfg, std::uint64_t seed, Region region);
SimState step(const SimState& s, const Action& a, const SimConfig& cfg);

/// area(block ∩ block-at-target) / area(block).
double coverage(const SimState& s, const SimConfig& cfg);
double coverage(const Pose2& block_pose, const SimConfig& cfg);
bool is_success(const SimState& s, const SimConfig& cfg);

Region region_of(const Pose2& p, const SimConfig& cfg);

/// Depth by which the ee disc overlaps the block (0 when separated).
double penetration_depth(const SimState& s, const SimConfig& cfg);

/// Area of the intersection of two convex polygons (CCW).
double convex_intersection_area(std::span<const Point2> a, std::span<const Point2> b);

/// Greedy push controller used to generate demonstrations.
///
/// Each tick it scores a fixed set of feasible contact points on the block
/// outline by the best reduction of the pose error
/// |p - p*| + 0.5 |θ - θ*| R achievable with one push, keeps the current
/// contact while it stays competitive, travels around the block to the
/// pre-contact standoff, and then pushes along the contact normal.
class ScriptedExpert {
 public:
  explicit ScriptedExpert(const SimConfig& cfg);

  Action act(const SimState& s);
  void reset() { committed_.reset(); }

  struct Contact {
    Point2 point;   // object frame
    Vec2 normal;    // outward, object frame
  };
  const std::vector<Contact>& contacts() const { return contacts_; }

  double pose_error(const Pose2& p) const;
  /// Index of the best contact for the current block pose (no commitment).
  std::size_t best_contact(const SimState& s) const;

 private:
  struct Score {
    double gain = 0.0;
    double push = 0.0;
  };
  Score score(const Pose2& block, const Contact& c) const;
  Action travel_to(const SimState& s, Point2 goal) const;
  bool segment_clear(const Pose2& block, Point2 a, Point2 b, double clearance) const;

  SimConfig cfg_;
  TBlock block_;
  std::vector<Contact> contacts_;
  std::optional<std::size_t> committed_;
};

}  // namespace ocr
