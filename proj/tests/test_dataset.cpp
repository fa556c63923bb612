#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "ocr/dataset.hpp"
#include "ocr/error.hpp"
#include "ocr/rng.hpp"

using namespace ocr;
namespace fs = std::filesystem;

namespace {

const KeypointSet kTemplate{{{0, 0}, {-60, 30}, {60, 30}, {0, -80}, {0, 10}}};

Pose2 random_pose(SplitMix64& rng) {
  return {uniform(rng, 0, 512), uniform(rng, 0, 512), uniform(rng, -std::numbers::pi, std::numbers::pi)};
}

Episode random_episode(SplitMix64& rng, int len) {
  Episode e;
  for (int t = 0; t < len; ++t) {
    const Pose2 p = random_pose(rng);
    e.steps.push_back({Observation{transform_keypoints(p, kTemplate), p},
                       Action{{uniform(rng, 0, 512), uniform(rng, 0, 512)}},
                       {uniform(rng, 0, 512), uniform(rng, 0, 512)}});
  }
  return e;
}

Sequence random_sequence(SplitMix64& rng, int len) {
  Sequence s;
  for (int t = 0; t < len; ++t) {
    const Pose2 p = random_pose(rng);
    if (t == 0) s.frame = p;
    s.keypoints.push_back(transform_keypoints(p, kTemplate));
    s.actions.push_back({{uniform(rng, 0, 512), uniform(rng, 0, 512)}});
  }
  s.proprio0 = {uniform(rng, 0, 512), uniform(rng, 0, 512)};
  return s;
}

void expect_near(Point2 a, Point2 b, double tol) {
  EXPECT_NEAR(a.x, b.x, tol);
  EXPECT_NEAR(a.y, b.y, tol);
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("ocr_dataset_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                                 ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(BuildRecoveryDataset, IdentityPoseGivesTemplate) {
  Episode e;
  for (int t = 0; t < 3; ++t) e.steps.push_back({Observation{{}, Pose2::identity()}, Action{{1.0 * t, 0}}, {5, 5}});
  const auto rec = build_recovery_dataset({e}, kTemplate);
  ASSERT_EQ(rec.size(), 1u);
  ASSERT_EQ(rec[0].steps.size(), 3u);
  for (const RecStep& s : rec[0].steps) EXPECT_EQ(s.keypoints, kTemplate);
  EXPECT_EQ(rec[0].steps[2].action.target, (Point2{2, 0}));
}

TEST(BuildRecoveryDataset, SingleStepAndHandComputedPoses) {
  Episode e;
  e.steps.push_back({Observation{{}, Pose2{10, 20, std::numbers::pi / 2}}, Action{{0, 0}}, {0, 0}});
  const auto rec = build_recovery_dataset({e}, kTemplate);
  ASSERT_EQ(rec[0].steps.size(), 1u);
  // Quarter turn maps (x, y) to (-y, x), then translate.
  for (std::size_t k = 0; k < kTemplate.size(); ++k) {
    expect_near(rec[0].steps[0].keypoints.points[k],
                {10 - kTemplate.points[k].y, 20 + kTemplate.points[k].x}, 1e-12);
  }
}

TEST(ExtractSequences, WindowCounts) {
  SplitMix64 rng(1);
  const int L = 16;
  std::vector<Episode> eps{random_episode(rng, L), random_episode(rng, L + 2), random_episode(rng, L - 1)};
  const auto rec = build_recovery_dataset(eps, kTemplate);
  EXPECT_EQ(extract_sequences({rec[0]}, L).sequences.size(), 1u);
  EXPECT_EQ(extract_sequences({rec[1]}, L).sequences.size(), 3u);
  const SequenceSet all = extract_sequences(rec, L);
  EXPECT_EQ(all.sequences.size(), 4u);
  EXPECT_EQ(all.skipped, 1);
}

TEST(ExtractSequences, StrideOneIndexOracle) {
  SplitMix64 rng(2);
  const int L = 5;
  const auto rec = build_recovery_dataset({random_episode(rng, 12)}, kTemplate);
  const SequenceSet set = extract_sequences(rec, L);
  ASSERT_EQ(set.sequences.size(), 8u);
  for (std::size_t w = 0; w < set.sequences.size(); ++w) {
    const Sequence& s = set.sequences[w];
    EXPECT_EQ(s.frame, rec[0].steps[w].obj_pose);
    EXPECT_EQ(s.proprio0, rec[0].steps[w].proprio);
    for (int t = 0; t < L; ++t) {
      EXPECT_EQ(s.keypoints[t], rec[0].steps[w + t].keypoints);
      EXPECT_EQ(s.actions[t], rec[0].steps[w + t].action);
    }
  }
}

TEST(ZeroOut, IdentityFrameIsNoOp) {
  SplitMix64 rng(3);
  Sequence s = random_sequence(rng, 6);
  s.frame = Pose2::identity();
  const ZeroedSequence z = zero_out(s);
  for (std::size_t t = 0; t < s.keypoints.size(); ++t) {
    EXPECT_EQ(z.keypoints_seq[t], s.keypoints[t]);
    EXPECT_EQ(z.actions_seq[t], s.actions[t]);
  }
  EXPECT_EQ(z.proprio0, s.proprio0);
}

TEST(ZeroOut, FirstFrameEqualsTemplate) {
  SplitMix64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const ZeroedSequence z = zero_out(random_sequence(rng, 4));
    for (std::size_t k = 0; k < kTemplate.size(); ++k) expect_near(z.keypoints_seq[0].points[k], kTemplate.points[k], 1e-9);
  }
}

TEST(ZeroOut, InvariantUnderRigidTransform) {
  SplitMix64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const Sequence s = random_sequence(rng, 8);
    const Pose2 g{uniform(rng, -1000, 1000), uniform(rng, -1000, 1000), uniform(rng, -10, 10)};
    const ZeroedSequence a = zero_out(s), b = zero_out(transform_sequence(g, s));
    for (std::size_t t = 0; t < s.keypoints.size(); ++t) {
      for (std::size_t k = 0; k < kTemplate.size(); ++k)
        expect_near(a.keypoints_seq[t].points[k], b.keypoints_seq[t].points[k], 1e-9);
      expect_near(a.actions_seq[t].target, b.actions_seq[t].target, 1e-9);
    }
    expect_near(a.proprio0, b.proprio0, 1e-9);
  }
}

TEST(ZeroOut, RestoreRoundTrip) {
  SplitMix64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const Sequence s = random_sequence(rng, 8);
    const Sequence r = restore(zero_out(s));
    for (std::size_t t = 0; t < s.keypoints.size(); ++t) {
      for (std::size_t k = 0; k < kTemplate.size(); ++k) expect_near(r.keypoints[t].points[k], s.keypoints[t].points[k], 1e-9);
      expect_near(r.actions[t].target, s.actions[t].target, 1e-9);
    }
    expect_near(r.proprio0, s.proprio0, 1e-9);
  }
}

TEST(KeepWorldFrame, LeavesCoordinates) {
  SplitMix64 rng(7);
  const Sequence s = random_sequence(rng, 4);
  const ZeroedSequence z = keep_world_frame(s);
  EXPECT_EQ(z.source_frame, Pose2::identity());
  EXPECT_EQ(z.keypoints_seq, s.keypoints);
  EXPECT_EQ(z.actions_seq, s.actions);
}

TEST(Observe, PlacesTemplateAtBlockPose) {
  SimState s;
  s.block_pose = Pose2{100, 200, 0.5};
  const Observation o = observe(s, kTemplate);
  EXPECT_EQ(o.obj_pose, s.block_pose);
  EXPECT_EQ(o.keypoints, transform_keypoints(s.block_pose, kTemplate));
}

TEST(Persistence, RoundTripIsBitExact) {
  TempDir dir;
  SplitMix64 rng(8);
  std::vector<Episode> eps{random_episode(rng, 7), random_episode(rng, 1), random_episode(rng, 30)};
  save_episodes(dir.path / "d.jsonl", eps, Json{{"note", "x"}});
  EXPECT_EQ(load_episodes(dir.path / "d.jsonl"), eps);
  const auto rec = build_recovery_dataset(eps, kTemplate);
  save_episodes(dir.path / "r.jsonl", rec);
  EXPECT_EQ(load_rec_episodes(dir.path / "r.jsonl"), rec);
}

TEST(Persistence, EmptyFileReportsNoRecords) {
  TempDir dir;
  std::ofstream(dir.path / "empty.jsonl").close();
  try {
    load_episodes(dir.path / "empty.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no records"), std::string::npos);
    EXPECT_EQ(e.kind(), ErrorKind::kMissingFile);
  }
}

TEST(Persistence, MissingFileKind) {
  try {
    load_episodes("/nonexistent/ocr/demos.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingFile);
  }
}

TEST(Persistence, CorruptedLineIsNamed) {
  TempDir dir;
  SplitMix64 rng(9);
  save_episodes(dir.path / "d.jsonl", std::vector<Episode>{random_episode(rng, 5)});
  std::vector<std::string> lines;
  {
    std::ifstream in(dir.path / "d.jsonl");
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  lines[4] = "{\"kp\": [[1, 2]], \"pose\": oops";
  {
    std::ofstream out(dir.path / "d.jsonl");
    for (const auto& l : lines) out << l << '\n';
  }
  try {
    load_episodes(dir.path / "d.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":5:"), std::string::npos) << e.what();
  }
}

TEST(Persistence, KindMismatchRejected) {
  TempDir dir;
  SplitMix64 rng(10);
  save_episodes(dir.path / "d.jsonl", std::vector<Episode>{random_episode(rng, 3)});
  EXPECT_THROW(load_rec_episodes(dir.path / "d.jsonl"), Error);
}
