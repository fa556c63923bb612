#include <gtest/gtest.h>

#include <numbers>

#include "ocr/error.hpp"
#include "ocr/rng.hpp"
#include "ocr/sim.hpp"

using namespace ocr;

namespace {

SimState at(Pose2 block, Point2 ee) {
  SimState s;
  s.block_pose = block;
  s.ee_pos = ee;
  return s;
}

}  // namespace

TEST(Reset, Deterministic) {
  const SimConfig cfg;
  for (Region r : {Region::kId, Region::kOod, Region::kAny}) {
    EXPECT_EQ(reset(cfg, 42, r), reset(cfg, 42, r));
  }
  EXPECT_NE(reset(cfg, 1, Region::kId), reset(cfg, 2, Region::kId));
}

TEST(Reset, RespectsRegion) {
  const SimConfig cfg;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    EXPECT_LE(reset(cfg, seed, Region::kId).block_pose.x(), 256.0);
    const SimState o = reset(cfg, seed, Region::kOod);
    EXPECT_GE(o.block_pose.x(), 256.0 + cfg.id_region.ood_reset_margin);
    EXPECT_EQ(region_of(o.block_pose, cfg), Region::kOod);
  }
}

TEST(Reset, EeStartsClearOfBlock) {
  const SimConfig cfg;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    EXPECT_EQ(penetration_depth(reset(cfg, seed, Region::kAny), cfg), 0.0);
  }
}

TEST(Reset, OodCentroidsUniformOverResetBox) {
  // χ² goodness of fit on a 5×5 grid over the OOD reset box.
  const SimConfig cfg;
  const double x0 = cfg.id_region.threshold + cfg.id_region.ood_reset_margin, x1 = cfg.block_spawn.x_max;
  const double y0 = cfg.block_spawn.y_min, y1 = cfg.block_spawn.y_max;
  constexpr int kBins = 5, kN = 1000;
  int counts[kBins][kBins] = {};
  for (int i = 0; i < kN; ++i) {
    const Pose2 p = reset(cfg, 10000 + i, Region::kOod).block_pose;
    const int bx = std::min(kBins - 1, static_cast<int>((p.x() - x0) / (x1 - x0) * kBins));
    const int by = std::min(kBins - 1, static_cast<int>((p.y() - y0) / (y1 - y0) * kBins));
    ++counts[bx][by];
  }
  const double expected = static_cast<double>(kN) / (kBins * kBins);
  double chi2 = 0.0;
  for (auto& row : counts)
    for (int c : row) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 42.98);  // χ²(24) upper 1% point
}

TEST(Reset, InvalidConfigRejected) {
  SimConfig cfg;
  cfg.max_steps = 0;
  EXPECT_THROW(reset(cfg, 0, Region::kId), Error);
  SimConfig cfg2;
  cfg2.id_region.ood_reset_margin = 1000.0;
  try {
    reset(cfg2, 0, Region::kOod);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
  }
}

TEST(Step, NoContactLeavesBlock) {
  const SimConfig cfg;
  const SimState s = at(Pose2{256, 256, 0.3}, {40, 40});
  const SimState n = step(s, {{45, 48}}, cfg);
  EXPECT_EQ(n.block_pose, s.block_pose);
  EXPECT_EQ(n.ee_pos, (Point2{45, 48}));
  EXPECT_EQ(n.step_count, 1);
}

TEST(Step, SpeedLimited) {
  const SimConfig cfg;
  const SimState n = step(at(Pose2{256, 256, 0}, {40, 40}), {{140, 40}}, cfg);
  EXPECT_NEAR(n.ee_pos.x, 40 + cfg.max_push_speed, 1e-12);
  EXPECT_EQ(n.ee_pos.y, 40);
}

TEST(Step, CenteredPushOnBarTranslatesAlongNormal) {
  const SimConfig cfg;
  const TBlock block(cfg.t_block);
  const double top = block.outline()[4].y;  // bar top edge in the object frame
  SimState s = at(Pose2{256, 256, 0}, {256, 256 + top + cfg.ee_radius + 2});
  for (int i = 0; i < 10; ++i) s = step(s, {{256, s.ee_pos.y - 10}}, cfg);
  EXPECT_LT(s.block_pose.y(), 256 - 20);
  EXPECT_NEAR(s.block_pose.x(), 256, 1e-6);
  EXPECT_LT(std::abs(s.block_pose.theta()), 0.01);
}

TEST(Step, OffCenterPushRotates) {
  const SimConfig cfg;
  const TBlock block(cfg.t_block);
  const double top = block.outline()[4].y;
  SimState s = at(Pose2{256, 256, 0}, {256 + 50, 256 + top + cfg.ee_radius + 2});
  for (int i = 0; i < 10; ++i) s = step(s, {{306, s.ee_pos.y - 10}}, cfg);
  EXPECT_GT(std::abs(s.block_pose.theta()), 0.05);
}

TEST(Step, TargetOutsideWorkspaceIsClipped) {
  const SimConfig cfg;
  SimState s = at(Pose2{256, 256, 0}, {500, 20});
  for (int i = 0; i < 5; ++i) s = step(s, {{900, -300}}, cfg);
  EXPECT_EQ(s.ee_pos.x, cfg.workspace.x_max);
  EXPECT_EQ(s.ee_pos.y, cfg.workspace.y_min);
}

TEST(Step, RandomPushingInvariants) {
  const SimConfig cfg;
  SplitMix64 rng(11);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SimState s = reset(cfg, seed, Region::kAny);
    for (int t = 0; t < 150; ++t) {
      // Bias targets toward the block so contact is frequent.
      const Point2 c = s.block_pose.translation();
      const Action a{{c.x + uniform(rng, -80, 80), c.y + uniform(rng, -80, 80)}};
      const SimState n = step(s, a, cfg);
      ASSERT_EQ(step(s, a, cfg), n);  // determinism
      ASSERT_LE(penetration_depth(n, cfg), 1e-6);
      ASSERT_TRUE(cfg.workspace.contains(n.ee_pos));
      ASSERT_TRUE(cfg.workspace.contains(n.block_pose.translation()));
      s = n;
    }
  }
}

TEST(Step, BlockAtRestWithoutContact) {
  const SimConfig cfg;
  SimState s = at(Pose2{300, 300, 1.0}, {50, 50});
  for (int t = 0; t < 20; ++t) {
    const SimState n = step(s, {{50 + (t % 2) * 5.0, 50}}, cfg);
    EXPECT_EQ(n.block_pose, s.block_pose);
    s = n;
  }
}

TEST(Coverage, Examples) {
  const SimConfig cfg;
  EXPECT_NEAR(coverage(cfg.target_pose, cfg), 1.0, 1e-12);
  EXPECT_EQ(coverage(Pose2{60, 60, 0}, cfg), 0.0);
}

TEST(Coverage, HalfBarOffsetMatchesMonteCarlo) {
  const SimConfig cfg;
  const TBlock block(cfg.t_block);
  const Pose2 target = cfg.target_pose;
  const Pose2 moved = compose(target, Pose2{cfg.t_block.bar_width / 2, 0, 0});
  // Sample the moved block's bounding box in its own frame.
  SplitMix64 rng(7);
  const double r = block.radius();
  int inside = 0, both = 0;
  for (int i = 0; i < 1000000; ++i) {
    const Point2 local{uniform(rng, -r, r), uniform(rng, -r, r)};
    if (!block.contains(local)) continue;
    ++inside;
    const Point2 world = moved.apply(local);
    if (block.contains(inverse(target).apply(world))) ++both;
  }
  EXPECT_NEAR(coverage(moved, cfg), static_cast<double>(both) / inside, 0.01);
}

TEST(Coverage, ConvexIntersectionOfUnitSquares) {
  const std::vector<Point2> a{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const std::vector<Point2> b{{0.5, 0.5}, {1.5, 0.5}, {1.5, 1.5}, {0.5, 1.5}};
  EXPECT_NEAR(convex_intersection_area(a, b), 0.25, 1e-12);
  EXPECT_NEAR(convex_intersection_area(a, a), 1.0, 1e-12);
}

TEST(RegionOf, Examples) {
  const SimConfig cfg;
  EXPECT_EQ(region_of(Pose2{100, 256, 0}, cfg), Region::kId);
  EXPECT_EQ(region_of(Pose2{400, 256, 0}, cfg), Region::kOod);
  EXPECT_EQ(region_of(Pose2{256, 256, 0}, cfg), Region::kId);
}

TEST(RegionNames, RoundTripAndReject) {
  for (Region r : {Region::kId, Region::kOod, Region::kAny}) EXPECT_EQ(parse_region(region_name(r)), r);
  EXPECT_THROW(parse_region("left"), Error);
}

TEST(TBlockGeometry, CentroidAtOriginAndArea) {
  const TBlock b;
  EXPECT_DOUBLE_EQ(b.area(), 120.0 * 30.0 + 30.0 * 90.0);
  double cx = 0, cy = 0;
  for (const auto& r : b.rects()) {
    const double a = (r[2].x - r[0].x) * (r[2].y - r[0].y);
    cx += a * 0.5 * (r[0].x + r[2].x);
    cy += a * 0.5 * (r[0].y + r[2].y);
  }
  EXPECT_NEAR(cx, 0.0, 1e-9);
  EXPECT_NEAR(cy, 0.0, 1e-9);
  EXPECT_EQ(b.default_keypoints().size(), 5u);
}

TEST(ScriptedExpert, HoldsAtTarget) {
  const SimConfig cfg;
  ScriptedExpert ex(cfg);
  const SimState s = at(cfg.target_pose, {40, 40});
  EXPECT_EQ(ex.act(s).target, s.ee_pos);
}

TEST(ScriptedExpert, PureTranslationPicksTrailingFace) {
  const SimConfig cfg;
  ScriptedExpert ex(cfg);
  const Pose2 left_of_target{cfg.target_pose.x() - 60, cfg.target_pose.y(), cfg.target_pose.theta()};
  const auto& c = ex.contacts()[ex.best_contact(at(left_of_target, {40, 40}))];
  const Vec2 push = -left_of_target.rotate_vec(c.normal);
  EXPECT_GT(push.x, 0.7);
}

TEST(ScriptedExpert, SolvesIdResets) {
  const SimConfig cfg;
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ScriptedExpert ex(cfg);
    SimState s = reset(cfg, seed, Region::kId);
    while (!is_success(s, cfg) && s.step_count < cfg.max_steps) s = step(s, ex.act(s), cfg);
    ok += is_success(s, cfg);
  }
  EXPECT_GE(ok, 90);
}
