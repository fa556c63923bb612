#include "ocr/dataset.hpp"

#include <sstream>

#include "ocr/error.hpp"
#include "ocr/json_io.hpp"

namespace ocr {

Observation observe(const SimState& s, const KeypointSet& keypoint_template) {
  return {transform_keypoints(s.block_pose, keypoint_template), s.block_pose};
}

std::vector<RecEpisode> build_recovery_dataset(const std::vector<Episode>& demos, const KeypointSet& keypoint_template) {
  if (demos.empty()) throw Error("build_recovery_dataset: empty demo list");
  std::vector<RecEpisode> out;
  out.reserve(demos.size());
  for (const Episode& ep : demos) {
    RecEpisode rec;
    rec.steps.reserve(ep.steps.size());
    for (const EpisodeStep& s : ep.steps) {
      rec.steps.push_back({transform_keypoints(s.obs.obj_pose, keypoint_template), s.obs.obj_pose, s.action, s.proprio});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

SequenceSet extract_sequences(const std::vector<RecEpisode>& rec, int length) {
  if (length < 1) throw Error(ErrorKind::kInvalidConfig, "extract_sequences: L must be >= 1");
  const auto L = static_cast<std::size_t>(length);
  SequenceSet out;
  for (const RecEpisode& ep : rec) {
    if (ep.steps.size() < L) {
      ++out.skipped;
      continue;
    }
    for (std::size_t j = 0; j + L <= ep.steps.size(); ++j) {
      Sequence s;
      s.keypoints.reserve(L);
      s.actions.reserve(L);
      for (std::size_t t = j; t < j + L; ++t) {
        s.keypoints.push_back(ep.steps[t].keypoints);
        s.actions.push_back(ep.steps[t].action);
      }
      s.proprio0 = ep.steps[j].proprio;
      s.frame = ep.steps[j].obj_pose;
      out.sequences.push_back(std::move(s));
    }
  }
  return out;
}

namespace {

ZeroedSequence map_sequence(const Sequence& s, const Pose2& to_local, const Pose2& source) {
  ZeroedSequence z;
  z.keypoints_seq.reserve(s.keypoints.size());
  for (const KeypointSet& k : s.keypoints) z.keypoints_seq.push_back(transform_keypoints(to_local, k));
  z.actions_seq.reserve(s.actions.size());
  for (const Action& a : s.actions) z.actions_seq.push_back({to_local.apply(a.target)});
  z.proprio0 = to_local.apply(s.proprio0);
  z.source_frame = source;
  return z;
}

}  // namespace

ZeroedSequence zero_out(const Sequence& s) { return map_sequence(s, inverse(s.frame), s.frame); }

ZeroedSequence keep_world_frame(const Sequence& s) { return map_sequence(s, Pose2::identity(), Pose2::identity()); }

Sequence restore(const ZeroedSequence& z) {
  Sequence s;
  for (const KeypointSet& k : z.keypoints_seq) s.keypoints.push_back(transform_keypoints(z.source_frame, k));
  for (const Action& a : z.actions_seq) s.actions.push_back({z.source_frame.apply(a.target)});
  s.proprio0 = z.source_frame.apply(z.proprio0);
  s.frame = z.source_frame;
  return s;
}

Sequence transform_sequence(const Pose2& g, const Sequence& s) {
  Sequence out;
  for (const KeypointSet& k : s.keypoints) out.keypoints.push_back(transform_keypoints(g, k));
  for (const Action& a : s.actions) out.actions.push_back({g.apply(a.target)});
  out.proprio0 = g.apply(s.proprio0);
  out.frame = compose(g, s.frame);
  return out;
}

std::vector<KeypointSet> keypoint_frames(const Episode& e) {
  std::vector<KeypointSet> out;
  out.reserve(e.steps.size());
  for (const EpisodeStep& s : e.steps) out.push_back(s.obs.keypoints);
  return out;
}

// --- persistence -----------------------------------------------------------------

namespace {

constexpr const char* kFormatName = "ocr-episodes";

Json step_record(const KeypointSet& kps, const Pose2& pose, const Action& a, Point2 proprio) {
  return Json{{"kp", to_json(kps)}, {"pose", to_json(pose)}, {"action", to_json(a.target)}, {"proprio", to_json(proprio)}};
}

template <typename Ep, typename Fn>
void save_impl(const std::filesystem::path& path, const std::vector<Ep>& episodes, const char* kind, const Json& meta,
               Fn&& record) {
  auto out = open_output(path);
  Json header{{"format", kFormatName}, {"version", kEpisodeFormatVersion}, {"kind", kind}, {"episodes", episodes.size()}};
  if (!meta.is_null()) header["meta"] = meta;
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    out << Json{{"episode", i}, {"length", episodes[i].steps.size()}}.dump() << '\n';
    for (const auto& s : episodes[i].steps) out << record(s).dump() << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

struct RawStep {
  KeypointSet kps;
  Pose2 pose;
  Action action;
  Point2 proprio;
};

// Reads a file of the given kind; returns episodes as lists of raw steps.
std::vector<std::vector<RawStep>> load_impl(const std::filesystem::path& path, const std::string& kind) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  std::size_t expected = 0;
  bool header = false;
  std::vector<std::vector<RawStep>> episodes;
  std::size_t remaining = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception&) {
      fail("malformed record");
    }
    try {
      if (!header) {
        if (j.value("format", "") != kFormatName) fail("not an episode file (bad header)");
        if (j.value("version", -1) != kEpisodeFormatVersion)
          fail("schema version mismatch: expected " + std::to_string(kEpisodeFormatVersion));
        if (j.value("kind", "") != kind) fail("schema mismatch: expected kind '" + kind + "'");
        expected = j.at("episodes").get<std::size_t>();
        header = true;
        continue;
      }
      if (remaining == 0) {
        if (!j.contains("episode")) fail("expected an episode record");
        if (j.at("episode").get<std::size_t>() != episodes.size()) fail("episode index out of order");
        remaining = j.at("length").get<std::size_t>();
        if (remaining == 0) fail("empty episode");
        episodes.emplace_back();
        continue;
      }
      episodes.back().push_back({keypoints_from_json(j.at("kp")), pose_from_json(j.at("pose")),
                                 Action{point_from_json(j.at("action"))}, point_from_json(j.at("proprio"))});
      if (episodes.back().size() > 1 && episodes.back().back().kps.size() != episodes.back().front().kps.size())
        fail("inconsistent keypoint count");
      --remaining;
    } catch (const Json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    } catch (const Error& e) {
      const std::string what = e.what();
      if (what.rfind(path.string(), 0) == 0) throw;
      fail("malformed record: " + what);
    }
  }
  if (!header) throw Error(ErrorKind::kMissingFile, path.string() + ": no records");
  if (remaining != 0) throw Error(path.string() + ": truncated episode at end of file");
  if (episodes.size() != expected)
    throw Error(path.string() + ": header declares " + std::to_string(expected) + " episodes, found " +
                std::to_string(episodes.size()));
  if (episodes.empty()) throw Error(ErrorKind::kMissingFile, path.string() + ": no records");
  return episodes;
}

}  // namespace

void save_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes, const Json& meta) {
  save_impl(path, episodes, "episode", meta,
            [](const EpisodeStep& s) { return step_record(s.obs.keypoints, s.obs.obj_pose, s.action, s.proprio); });
}

void save_episodes(const std::filesystem::path& path, const std::vector<RecEpisode>& episodes, const Json& meta) {
  save_impl(path, episodes, "rec_episode", meta,
            [](const RecStep& s) { return step_record(s.keypoints, s.obj_pose, s.action, s.proprio); });
}

std::vector<Episode> load_episodes(const std::filesystem::path& path) {
  std::vector<Episode> out;
  for (auto& raw : load_impl(path, "episode")) {
    Episode ep;
    for (auto& r : raw) ep.steps.push_back({{std::move(r.kps), r.pose}, r.action, r.proprio});
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<RecEpisode> load_rec_episodes(const std::filesystem::path& path) {
  std::vector<RecEpisode> out;
  for (auto& raw : load_impl(path, "rec_episode")) {
    RecEpisode ep;
    for (auto& r : raw) ep.steps.push_back({std::move(r.kps), r.pose, r.action, r.proprio});
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace ocr
