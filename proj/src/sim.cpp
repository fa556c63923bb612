#include "ocr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ocr/error.hpp"
#include "ocr/rng.hpp"

namespace ocr {

namespace {

constexpr double kContactTol = 1e-9;
constexpr int kProjectionIters = 8;

double segment_point_distance(Point2 a, Point2 b, Point2 p, Point2* closest) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Point2 c = a + t * ab;
  if (closest) *closest = c;
  return norm(p - c);
}

bool segments_intersect(Point2 p1, Point2 p2, Point2 q1, Point2 q2) {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

double segment_segment_distance(Point2 a, Point2 b, Point2 c, Point2 d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({segment_point_distance(c, d, a, nullptr), segment_point_distance(c, d, b, nullptr),
                   segment_point_distance(a, b, c, nullptr), segment_point_distance(a, b, d, nullptr)});
}

double polygon_area(std::span<const Point2> poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * a;
}

// Sutherland-Hodgman against one half-plane (left of edge a->b).
std::vector<Point2> clip_half_plane(const std::vector<Point2>& poly, Point2 a, Point2 b) {
  std::vector<Point2> out;
  if (poly.empty()) return out;
  const Vec2 e = b - a;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2 p = poly[i];
    const Point2 q = poly[(i + 1) % poly.size()];
    const double sp = cross(e, p - a);
    const double sq = cross(e, q - a);
    if (sp >= 0.0) out.push_back(p);
    if ((sp >= 0.0) != (sq >= 0.0)) {
      const double t = sp / (sp - sq);
      out.push_back(p + t * (q - p));
    }
  }
  return out;
}

std::array<Point2, 4> world_rect(const Pose2& pose, const std::array<Point2, 4>& r) {
  return {pose.apply(r[0]), pose.apply(r[1]), pose.apply(r[2]), pose.apply(r[3])};
}

}  // namespace

Point2 Box2::clamp(Point2 p) const { return {std::clamp(p.x, x_min, x_max), std::clamp(p.y, y_min, y_max)}; }

void validate(const SimConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::kInvalidConfig, m); };
  if (!(cfg.ee_radius > 0.0)) fail("ee_radius must be > 0");
  if (!(cfg.success_coverage > 0.0 && cfg.success_coverage <= 1.0)) fail("success_coverage must be in (0, 1]");
  if (cfg.workspace.area() <= 0.0) fail("workspace must have positive area");
  if (!(cfg.max_push_speed > 0.0)) fail("max_push_speed must be > 0");
  if (!(cfg.dt > 0.0)) fail("dt must be > 0");
  if (cfg.max_steps < 1) fail("max_steps must be >= 1");
  if (!(cfg.limit_surface_radius > 0.0)) fail("limit_surface_radius must be > 0");
  if (cfg.contact_friction < 0.0) fail("contact_friction must be >= 0");
  if (!(cfg.substep_length > 0.0)) fail("substep_length must be > 0");
  if (cfg.id_region.axis != 0 && cfg.id_region.axis != 1) fail("id_region.axis must be 0 (x) or 1 (y)");
  if (!(cfg.id_region.ood_reset_margin >= 0.0)) fail("id_region.ood_reset_margin must be >= 0");
  const auto& t = cfg.t_block;
  if (!(t.bar_width > t.stem_width && t.stem_width > 0 && t.bar_height > 0 && t.stem_height > 0))
    fail("t_block dimensions must be positive with bar_width > stem_width");
}

// --- TBlock -----------------------------------------------------------------

TBlock::TBlock(const TBlockSpec& spec) : spec_(spec) {
  const double bw = spec.bar_width, bh = spec.bar_height, sw = spec.stem_width, sh = spec.stem_height;
  const double bar_area = bw * bh;
  const double stem_area = sw * sh;
  // Junction height chosen so the area centroid sits at the origin.
  const double yb = -(bar_area * 0.5 * bh - stem_area * 0.5 * sh) / (bar_area + stem_area);
  outline_ = {Point2{-sw / 2, yb - sh}, {sw / 2, yb - sh}, {sw / 2, yb},       {bw / 2, yb},
              {bw / 2, yb + bh},        {-bw / 2, yb + bh}, {-bw / 2, yb}, {-sw / 2, yb}};
  rects_[0] = {Point2{-bw / 2, yb}, {bw / 2, yb}, {bw / 2, yb + bh}, {-bw / 2, yb + bh}};
  rects_[1] = {Point2{-sw / 2, yb - sh}, {sw / 2, yb - sh}, {sw / 2, yb}, {-sw / 2, yb}};
  for (const Point2& v : outline_) radius_ = std::max(radius_, norm(v));
}

double TBlock::area() const {
  return spec_.bar_width * spec_.bar_height + spec_.stem_width * spec_.stem_height;
}

KeypointSet TBlock::default_keypoints() const {
  const double yb = outline_[2].y;
  const double bar_mid = yb + 0.5 * spec_.bar_height;
  return {{Point2{0.0, 0.0}, Point2{-spec_.bar_width / 2, bar_mid}, Point2{spec_.bar_width / 2, bar_mid},
           Point2{0.0, yb - spec_.stem_height}, Point2{0.0, yb}}};
}

bool TBlock::contains(Point2 p) const {
  for (const auto& r : rects_) {
    if (p.x >= r[0].x && p.x <= r[2].x && p.y >= r[0].y && p.y <= r[2].y) return true;
  }
  return false;
}

TBlock::Closest TBlock::closest(Point2 p) const {
  Closest best{{}, {}, std::numeric_limits<double>::infinity()};
  std::size_t best_edge = 0;
  for (std::size_t i = 0; i < outline_.size(); ++i) {
    Point2 c;
    const double d = segment_point_distance(outline_[i], outline_[(i + 1) % outline_.size()], p, &c);
    if (d < best.signed_distance) {
      best.signed_distance = d;
      best.point = c;
      best_edge = i;
    }
  }
  const bool inside = contains(p);
  const Vec2 offset = p - best.point;
  const double len = norm(offset);
  if (len > 1e-12) {
    best.normal = (inside ? -1.0 : 1.0) * offset / len;
  } else {
    const Vec2 e = outline_[(best_edge + 1) % outline_.size()] - outline_[best_edge];
    best.normal = Vec2{e.y, -e.x} / norm(e);
  }
  if (inside) best.signed_distance = -best.signed_distance;
  return best;
}

KeypointSet keypoint_template(const SimConfig& cfg) {
  if (!cfg.keypoint_template.empty()) return {cfg.keypoint_template};
  return TBlock(cfg.t_block).default_keypoints();
}

// --- reset / step -------------------------------------------------------------

const char* region_name(Region r) {
  switch (r) {
    case Region::kId: return "id";
    case Region::kOod: return "ood";
    case Region::kAny: break;
  }
  return "any";
}

Region parse_region(const std::string& s) {
  if (s == "id") return Region::kId;
  if (s == "ood") return Region::kOod;
  if (s == "any") return Region::kAny;
  throw Error(ErrorKind::kInvalidConfig, "unknown region '" + s + "' (expected id, ood or any)");
}

Region region_of(const Pose2& p, const SimConfig& cfg) {
  const double v = cfg.id_region.axis == 0 ? p.x() : p.y();
  const bool id = cfg.id_region.id_below ? v <= cfg.id_region.threshold : v >= cfg.id_region.threshold;
  return id ? Region::kId : Region::kOod;
}

SimState reset(const SimConfig& cfg, std::uint64_t seed, Region region) {
  validate(cfg);
  Box2 box = cfg.block_spawn;
  if (region != Region::kAny) {
    const bool want_low = (region == Region::kId) == cfg.id_region.id_below;
    double& lo = cfg.id_region.axis == 0 ? box.x_min : box.y_min;
    double& hi = cfg.id_region.axis == 0 ? box.x_max : box.y_max;
    const double margin = region == Region::kOod ? cfg.id_region.ood_reset_margin : 0.0;
    if (want_low) hi = std::min(hi, cfg.id_region.threshold - margin);
    else lo = std::max(lo, cfg.id_region.threshold + margin);
  }
  if (box.area() <= 0.0) throw Error(ErrorKind::kInvalidConfig, "empty reset region");

  SplitMix64 rng(seed);
  const TBlock block(cfg.t_block);
  SimState s;
  // Sampling directly in box ∩ region keeps ID resets independent of the OOD
  // extent of the spawn box. The check only rejects the measure-zero boundary.
  for (;;) {
    const Point2 c{uniform(rng, box.x_min, box.x_max), uniform(rng, box.y_min, box.y_max)};
    const double theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const Pose2 pose{c.x, c.y, theta};
    if (region == Region::kAny || (region_of(pose, cfg) == region && box.contains(c))) {
      s.block_pose = pose;
      break;
    }
  }
  for (int tries = 0;; ++tries) {
    const Point2 ee{uniform(rng, cfg.ee_spawn.x_min, cfg.ee_spawn.x_max),
                    uniform(rng, cfg.ee_spawn.y_min, cfg.ee_spawn.y_max)};
    const Point2 local = inverse(s.block_pose).apply(ee);
    if (block.closest(local).signed_distance > cfg.ee_radius + 1.0 || tries > 10000) {
      s.ee_pos = ee;
      break;
    }
  }
  s.rng_state = rng.state();
  return s;
}

namespace {

// Resolves ee/block overlap after the ee moved along `motion`.
void resolve_contact(Pose2& pose, Point2& ee, Vec2 motion, const TBlock& block, const SimConfig& cfg) {
  const double c2 = cfg.limit_surface_radius * cfg.limit_surface_radius;
  const double mu = cfg.contact_friction;
  for (int it = 0; it < kProjectionIters; ++it) {
    const Point2 local = inverse(pose).apply(ee);
    const TBlock::Closest cl = block.closest(local);
    const double depth = cfg.ee_radius - cl.signed_distance;
    if (depth <= kContactTol) return;
    const Point2 cp = pose.apply(cl.point);
    const Vec2 n_in = -pose.rotate_vec(cl.normal);
    const Vec2 r = cp - pose.translation();

    Vec2 f = n_in;
    const double m_len = norm(motion);
    if (m_len > 0.0) {
      const Vec2 m = motion / m_len;
      const double mn = dot(m, n_in);
      if (mn > 0.0) {
        const Vec2 mt = m - mn * n_in;
        const double mt_len = norm(mt);
        if (mt_len <= mu * mn) {
          f = m;
        } else {
          f = n_in + mu * mt / mt_len;
          f = f / norm(f);
        }
      }
    }
    double denom = dot(f, n_in) + cross(r, f) * cross(r, n_in) / c2;
    if (denom < 0.2) {
      f = n_in;
      denom = 1.0 + cross(r, n_in) * cross(r, n_in) / c2;
    }
    const double s = depth / denom;
    const Vec2 v = s * f;
    const double omega = s * cross(r, f) / c2;
    pose = Pose2{pose.x() + v.x, pose.y() + v.y, pose.theta() + omega};
  }
}

// Guarantees separation: first by moving the ee out, then by sliding the block.
void enforce_separation(Pose2& pose, Point2& ee, const TBlock& block, const SimConfig& cfg) {
  for (int it = 0; it < 32; ++it) {
    const Point2 local = inverse(pose).apply(ee);
    const TBlock::Closest cl = block.closest(local);
    const double depth = cfg.ee_radius - cl.signed_distance;
    if (depth <= kContactTol) return;
    const Vec2 n = pose.rotate_vec(cl.normal);
    const Point2 moved = ee + (depth + kContactTol) * n;
    const Point2 clipped = cfg.workspace.clamp(moved);
    if (clipped == moved) {
      ee = moved;
      continue;
    }
    // ee against a wall: move the block instead, and when the block is pinned
    // too, let the ee slide along the wall.
    const Point2 want = pose.translation() - (depth + kContactTol) * n;
    const Point2 got = cfg.workspace.clamp(want);
    pose = Pose2{got.x, got.y, pose.theta()};
    if (got != want) ee = clipped;
  }
}

}  // namespace

SimState step(const SimState& s, const Action& a, const SimConfig& cfg) {
  const TBlock block(cfg.t_block);
  SimState out = s;
  const Point2 target = cfg.workspace.clamp(a.target);
  const Vec2 delta = target - out.ee_pos;
  const double dist = norm(delta);
  const double travel = std::min(dist, cfg.max_push_speed);
  if (travel > 0.0) {
    const Vec2 dir = delta / dist;
    const int n_sub = std::max(1, static_cast<int>(std::ceil(travel / cfg.substep_length)));
    const Vec2 inc = (travel / n_sub) * dir;
    for (int i = 0; i < n_sub; ++i) {
      out.ee_pos = i + 1 == n_sub ? (dist <= cfg.max_push_speed ? target : s.ee_pos + travel * dir)
                                  : out.ee_pos + inc;
      out.ee_pos = cfg.workspace.clamp(out.ee_pos);
      resolve_contact(out.block_pose, out.ee_pos, inc, block, cfg);
      const Point2 c = cfg.workspace.clamp(out.block_pose.translation());
      out.block_pose = Pose2{c.x, c.y, out.block_pose.theta()};
      enforce_separation(out.block_pose, out.ee_pos, block, cfg);
    }
  }
  ++out.step_count;
  return out;
}

double penetration_depth(const SimState& s, const SimConfig& cfg) {
  const TBlock block(cfg.t_block);
  const TBlock::Closest cl = block.closest(inverse(s.block_pose).apply(s.ee_pos));
  return std::max(0.0, cfg.ee_radius - cl.signed_distance);
}

// --- coverage -----------------------------------------------------------------

double convex_intersection_area(std::span<const Point2> a, std::span<const Point2> b) {
  std::vector<Point2> poly(a.begin(), a.end());
  for (std::size_t i = 0; i < b.size() && !poly.empty(); ++i) poly = clip_half_plane(poly, b[i], b[(i + 1) % b.size()]);
  return poly.size() < 3 ? 0.0 : std::abs(polygon_area(poly));
}

double coverage(const Pose2& block_pose, const SimConfig& cfg) {
  const TBlock block(cfg.t_block);
  double inter = 0.0;
  for (const auto& r : block.rects()) {
    const auto wa = world_rect(block_pose, r);
    for (const auto& q : block.rects()) {
      const auto wb = world_rect(cfg.target_pose, q);
      inter += convex_intersection_area(wa, wb);
    }
  }
  return std::clamp(inter / block.area(), 0.0, 1.0);
}

double coverage(const SimState& s, const SimConfig& cfg) { return coverage(s.block_pose, cfg); }

bool is_success(const SimState& s, const SimConfig& cfg) { return coverage(s, cfg) >= cfg.success_coverage; }

// --- scripted expert ------------------------------------------------------------

namespace {
constexpr double kStandoff = 6.0;
constexpr double kAlignTol = 2.0;
// gain lost per unit of ee travel to the standoff point
constexpr double kTravelPenalty = 0.01;
// stay on the committed contact while it scores at least this share of the best
constexpr double kKeepRatio = 0.2;
constexpr double kMinGain = 0.05;
constexpr double kPushHorizon = 90.0;
constexpr int kHorizonSamples = 30;
}  // namespace

ScriptedExpert::ScriptedExpert(const SimConfig& cfg) : cfg_(cfg), block_(cfg.t_block) {
  // Feasible contacts: a disc of radius r touching the edge must clear the
  // rest of the outline, so points near concave corners are skipped.
  const auto& o = block_.outline();
  const double r = cfg_.ee_radius;
  const double spacing = 6.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const Point2 a = o[i];
    const Point2 b = o[(i + 1) % o.size()];
    const Vec2 e = b - a;
    const double len = norm(e);
    const Vec2 t = e / len;
    const Vec2 n{t.y, -t.x};
    const int count = std::max(1, static_cast<int>(std::floor(len / spacing)));
    for (int k = 0; k <= count; ++k) {
      const Point2 p = a + (len * k / count) * t;
      const Point2 center = p + r * n;
      const TBlock::Closest cl = block_.closest(center);
      if (cl.signed_distance < r - 1e-6) continue;
      if (norm(p - a) < 3.0 || norm(p - b) < 3.0) continue;
      contacts_.push_back({p, n});
    }
  }
}

double ScriptedExpert::pose_error(const Pose2& p) const {
  const double dpos = norm(p.translation() - cfg_.target_pose.translation());
  const double dth = std::abs(wrap_angle(p.theta() - cfg_.target_pose.theta()));
  return dpos + 0.5 * dth * block_.radius();
}

ScriptedExpert::Score ScriptedExpert::score(const Pose2& block, const Contact& c) const {
  // Integrates the push once and samples the error along the way.
  const double c2 = cfg_.limit_surface_radius * cfg_.limit_surface_radius;
  const double e0 = pose_error(block);
  const Vec2 f = -block.rotate_vec(c.normal);
  const double ds = kPushHorizon / kHorizonSamples;
  Pose2 pose = block;
  Score best;
  for (int i = 1; i <= kHorizonSamples; ++i) {
    const Vec2 r = pose.apply(c.point) - pose.translation();
    const Vec2 n_in = -pose.rotate_vec(c.normal);
    const double denom = std::max(dot(f, n_in) + cross(r, f) * cross(r, n_in) / c2, 0.2);
    const double s = ds * dot(f, n_in) / denom;
    pose = Pose2{pose.x() + s * f.x, pose.y() + s * f.y, pose.theta() + s * cross(r, f) / c2};
    const double gain = e0 - pose_error(pose);
    if (gain > best.gain) best = {gain, ds * i};
  }
  return best;
}

std::size_t ScriptedExpert::best_contact(const SimState& s) const {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < contacts_.size(); ++i) {
    const Contact& c = contacts_[i];
    const Point2 standoff = s.block_pose.apply(c.point + (cfg_.ee_radius + kStandoff) * c.normal);
    const double value = score(s.block_pose, c).gain - kTravelPenalty * norm(standoff - s.ee_pos);
    if (value > best_value) {
      best_value = value;
      best = i;
    }
  }
  return best;
}

bool ScriptedExpert::segment_clear(const Pose2& block, Point2 a, Point2 b, double clearance) const {
  const Pose2 inv = inverse(block);
  const Point2 la = inv.apply(a);
  const Point2 lb = inv.apply(b);
  const auto& o = block_.outline();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (segment_segment_distance(la, lb, o[i], o[(i + 1) % o.size()]) < clearance) return false;
  }
  return true;
}

Action ScriptedExpert::travel_to(const SimState& s, Point2 goal) const {
  const double r = cfg_.ee_radius;
  if (segment_clear(s.block_pose, s.ee_pos, goal, r + 0.5)) return {goal};

  const Point2 ctr = s.block_pose.translation();
  const TBlock::Closest cl = block_.closest(inverse(s.block_pose).apply(s.ee_pos));
  if (cl.signed_distance < r + 4.0) {
    // Back away from the nearest feature before orbiting.
    return {s.ee_pos + 6.0 * s.block_pose.rotate_vec(cl.normal)};
  }
  const double orbit = block_.radius() + r + 10.0;
  const double a_ee = std::atan2(s.ee_pos.y - ctr.y, s.ee_pos.x - ctr.x);
  const double a_goal = std::atan2(goal.y - ctr.y, goal.x - ctr.x);
  const double diff = wrap_angle(a_goal - a_ee);
  const double stepa = std::copysign(std::min(std::abs(diff), 0.5), diff);
  const double a_next = a_ee + stepa;
  return {ctr + orbit * Vec2{std::cos(a_next), std::sin(a_next)}};
}

Action ScriptedExpert::act(const SimState& s) {
  if (coverage(s, cfg_) >= cfg_.success_coverage) return {s.ee_pos};

  const std::size_t best = best_contact(s);
  if (committed_) {
    const Score cur = score(s.block_pose, contacts_[*committed_]);
    const Score top = score(s.block_pose, contacts_[best]);
    if (!(cur.gain > kMinGain && cur.gain >= kKeepRatio * top.gain)) committed_ = best;
  } else {
    committed_ = best;
  }
  const Contact& c = contacts_[*committed_];
  const Vec2 n = s.block_pose.rotate_vec(c.normal);
  const Point2 touch = s.block_pose.apply(c.point) + cfg_.ee_radius * n;

  // Aligned when the ee sits on the contact normal line, outside the block.
  const Vec2 rel = s.ee_pos - touch;
  const double along = dot(rel, n);
  const double lateral = std::abs(cross(n, rel));
  if (lateral <= kAlignTol && along >= -1.0 && along <= kStandoff + 2.0) {
    const double push = std::min(score(s.block_pose, c).push, cfg_.max_push_speed);
    return {touch - push * n};
  }
  return travel_to(s, touch + kStandoff * n);
}

}  // namespace ocr
