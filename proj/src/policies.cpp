#include "ocr/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ocr/error.hpp"
#include "ocr/json_io.hpp"

namespace ocr {

// --- KnnIndex -------------------------------------------------------------------

KnnIndex::KnnIndex(std::vector<std::vector<double>> rows, std::vector<Group> groups)
    : rows_(std::move(rows)), groups_(std::move(groups)) {
  if (rows_.empty()) throw Error("knn index: no training rows");
  const std::size_t d = rows_.front().size();
  std::size_t gdims = 0;
  for (const Group& g : groups_) gdims += g.dims;
  if (gdims != d) throw Error("knn index: feature groups do not cover the feature vector");
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (const auto& r : rows_) {
    if (r.size() != d) throw Error("knn index: inconsistent feature length");
    for (std::size_t i = 0; i < d; ++i) mean_[i] += r[i];
  }
  const double n = static_cast<double>(rows_.size());
  for (double& m : mean_) m /= n;
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < d; ++i) scale_[i] += (r[i] - mean_[i]) * (r[i] - mean_[i]);
  }
  for (double& s : scale_) {
    s = std::sqrt(s / n);
    if (!(s > 1e-9)) s = 1.0;
  }
  build_weights();
}

KnnIndex KnnIndex::restore(std::vector<std::vector<double>> rows, std::vector<double> mean, std::vector<double> scale,
                           std::vector<Group> groups) {
  KnnIndex idx;
  idx.rows_ = std::move(rows);
  idx.mean_ = std::move(mean);
  idx.scale_ = std::move(scale);
  idx.groups_ = std::move(groups);
  if (idx.rows_.empty()) throw Error("knn index: no training rows");
  for (const auto& r : idx.rows_) {
    if (r.size() != idx.mean_.size()) throw Error("knn index: inconsistent feature length");
  }
  if (idx.scale_.size() != idx.mean_.size()) throw Error("knn index: scale/mean length mismatch");
  idx.build_weights();
  return idx;
}

void KnnIndex::build_weights() {
  weight_.clear();
  std::size_t i = 0;
  for (const Group& g : groups_) {
    for (std::size_t j = 0; j < g.dims; ++j, ++i) {
      weight_.push_back(g.weight / (static_cast<double>(g.dims) * scale_[i] * scale_[i]));
    }
  }
}

std::vector<std::size_t> KnnIndex::query(std::span<const double> feature, int k) const {
  if (feature.size() != dims()) throw Error("knn query: feature length mismatch");
  const std::size_t kk = std::min<std::size_t>(std::max(k, 1), rows_.size());
  std::vector<std::pair<double, std::size_t>> dist(rows_.size());
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const auto& row = rows_[r];
    double d = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double diff = feature[i] - row[i];
      d += weight_[i] * diff * diff;
    }
    dist[r] = {d, r};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
  std::vector<std::size_t> out(kk);
  for (std::size_t i = 0; i < kk; ++i) out[i] = dist[i].second;
  return out;
}

namespace {

void append(std::vector<double>& f, const KeypointSet& k) {
  for (const Point2& p : k.points) {
    f.push_back(p.x);
    f.push_back(p.y);
  }
}

std::vector<Action> mean_window(const std::vector<std::vector<Action>>& windows, const std::vector<std::size_t>& ids) {
  if (ids.size() == 1) return windows[ids.front()];
  std::vector<Action> out(windows[ids.front()].size());
  for (std::size_t i : ids) {
    for (std::size_t t = 0; t < out.size(); ++t) out[t].target += windows[i][t].target;
  }
  for (Action& a : out) a.target = a.target / static_cast<double>(ids.size());
  return out;
}

std::vector<double> base_feature(const Observation& obs, Point2 proprio) {
  std::vector<double> f;
  f.reserve(2 * obs.keypoints.size() + 2);
  append(f, obs.keypoints);
  f.push_back(proprio.x);
  f.push_back(proprio.y);
  return f;
}

std::vector<double> inverse_feature(const InverseQuery& q) {
  std::vector<double> f;
  for (const KeypointSet& k : q.keypoints) append(f, k);
  f.push_back(q.proprio.x);
  f.push_back(q.proprio.y);
  return f;
}

}  // namespace

// --- base policy ------------------------------------------------------------------

KnnBasePolicy::KnnBasePolicy(KnnIndex index, std::vector<std::vector<Action>> windows, KnnConfig cfg)
    : index_(std::move(index)), windows_(std::move(windows)), cfg_(cfg) {
  if (cfg_.k < 1) throw Error(ErrorKind::kInvalidConfig, "base policy: k must be >= 1");
  if (windows_.size() != index_.size()) throw Error("base policy: index/window count mismatch");
}

std::vector<Action> KnnBasePolicy::act(const Observation& obs, Point2 proprio) const {
  std::vector<Action> out = mean_window(windows_, index_.query(base_feature(obs, proprio), cfg_.k));
  if (cfg_.object_frame_actions) {
    for (Action& a : out) a.target = obs.obj_pose.apply(a.target);
  }
  return out;
}

KnnBasePolicy train_base(const std::vector<Episode>& demos, const KnnConfig& cfg) { return train_base(demos, {}, cfg); }

KnnBasePolicy train_base(const std::vector<Episode>& demos, const std::vector<Episode>& unpadded, const KnnConfig& cfg) {
  if (demos.empty() && unpadded.empty()) throw Error("train_base: empty demo list");
  if (cfg.horizon < 1) throw Error(ErrorKind::kInvalidConfig, "train_base: horizon must be >= 1");
  if (cfg.k < 1) throw Error(ErrorKind::kInvalidConfig, "train_base: k must be >= 1");
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<Action>> windows;
  std::size_t n_kp = 0;
  auto add = [&](const Episode& ep, bool pad) {
    const std::size_t T = ep.steps.size();
    const std::size_t H = static_cast<std::size_t>(cfg.horizon);
    const std::size_t last = pad ? T : (T >= H ? T - H + 1 : 0);
    for (std::size_t t = 0; t < last; ++t) {
      const auto& s = ep.steps[t];
      if (n_kp == 0) n_kp = s.obs.keypoints.size();
      if (s.obs.keypoints.size() != n_kp) throw Error("train_base: inconsistent keypoint count");
      rows.push_back(base_feature(s.obs, s.proprio));
      const Pose2 to_local = cfg.object_frame_actions ? inverse(s.obs.obj_pose) : Pose2::identity();
      std::vector<Action> w;
      w.reserve(H);
      for (std::size_t h = 0; h < H; ++h) w.push_back({to_local.apply(ep.steps[std::min(t + h, T - 1)].action.target)});
      windows.push_back(std::move(w));
    }
  };
  for (const Episode& ep : demos) add(ep, true);
  for (const Episode& ep : unpadded) add(ep, false);
  if (rows.empty()) throw Error("train_base: demos contain no steps");
  KnnIndex index(std::move(rows), {{2 * n_kp, 1.0}, {2, cfg.proprio_weight}});
  return KnnBasePolicy(std::move(index), std::move(windows), cfg);
}

// --- inverse policy ----------------------------------------------------------------

KnnInversePolicy::KnnInversePolicy(KnnIndex index, std::vector<std::vector<Action>> windows, InverseConfig cfg,
                                   std::size_t n_keypoints, int horizon)
    : index_(std::move(index)), windows_(std::move(windows)), cfg_(cfg), n_keypoints_(n_keypoints), horizon_(horizon) {
  if (cfg_.k < 1) throw Error(ErrorKind::kInvalidConfig, "inverse policy: k must be >= 1");
  if (windows_.size() != index_.size()) throw Error("inverse policy: index/window count mismatch");
}

std::vector<Action> KnnInversePolicy::act(const InverseQuery& q) const {
  if (q.keypoints.size() != static_cast<std::size_t>(horizon_))
    throw Error("inverse policy: query has " + std::to_string(q.keypoints.size()) + " frames, expected " +
                std::to_string(horizon_));
  return mean_window(windows_, index_.query(inverse_feature(q), cfg_.k));
}

KnnInversePolicy train_inverse(const std::vector<ZeroedSequence>& seqs, const InverseConfig& cfg) {
  if (seqs.empty()) throw Error("train_inverse: no sequences");
  const std::size_t L = seqs.front().keypoints_seq.size();
  const std::size_t n = L > 0 ? seqs.front().keypoints_seq.front().size() : 0;
  if (L == 0 || n == 0) throw Error("train_inverse: empty sequence");
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<Action>> windows;
  rows.reserve(seqs.size());
  windows.reserve(seqs.size());
  for (const ZeroedSequence& z : seqs) {
    if (z.keypoints_seq.size() != L || z.actions_seq.size() != L)
      throw Error("train_inverse: inconsistent sequence length L");
    for (const KeypointSet& k : z.keypoints_seq) {
      if (k.size() != n) throw Error("train_inverse: inconsistent keypoint count n");
    }
    rows.push_back(inverse_feature({z.keypoints_seq, z.proprio0}));
    windows.push_back(z.actions_seq);
  }
  KnnIndex index(std::move(rows), {{2 * n * L, 1.0}, {2, cfg.proprio_weight}});
  return KnnInversePolicy(std::move(index), std::move(windows), cfg, n, static_cast<int>(L));
}

KnnInversePolicy train_inverse(const std::vector<RecEpisode>& rec, int horizon, const InverseConfig& cfg) {
  const SequenceSet set = extract_sequences(rec, horizon);
  std::vector<ZeroedSequence> seqs;
  seqs.reserve(set.sequences.size());
  for (const Sequence& s : set.sequences) seqs.push_back(cfg.zero_out ? zero_out(s) : keep_world_frame(s));
  return train_inverse(seqs, cfg);
}

std::vector<Action> inverse_act(const InversePolicy& p, const RecoveryTrajectory& plan, const Pose2& obj_pose,
                                Point2 proprio) {
  if (!p.zeroed()) return p.act({plan.frames, proprio});
  const Pose2 to_local = inverse(obj_pose);
  InverseQuery q;
  q.keypoints.reserve(plan.frames.size());
  for (const KeypointSet& k : plan.frames) q.keypoints.push_back(transform_keypoints(to_local, k));
  q.proprio = to_local.apply(proprio);
  std::vector<Action> out = p.act(q);
  for (Action& a : out) a.target = obj_pose.apply(a.target);
  return out;
}

// --- persistence ---------------------------------------------------------------------

namespace {

constexpr const char* kPolicyFormat = "ocr-policy";

Json index_header(const KnnIndex& idx) {
  Json groups = Json::array();
  for (const auto& g : idx.groups()) groups.push_back(Json::array({g.dims, g.weight}));
  return Json{{"groups", groups}, {"mean", idx.mean()}, {"scale", idx.scale()}, {"rows", idx.size()}};
}

void write_rows(std::ofstream& out, const KnnIndex& idx, const std::vector<std::vector<Action>>& windows) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    Json a = Json::array();
    for (const Action& act : windows[i]) a.push_back(to_json(act.target));
    out << Json{{"f", idx.rows()[i]}, {"a", a}}.dump() << '\n';
  }
}

struct LoadedIndex {
  Json header;
  KnnIndex index;
  std::vector<std::vector<Action>> windows;
};

LoadedIndex read_policy(const std::filesystem::path& path, const std::string& kind) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) { throw Error(path.string() + ":" + std::to_string(line_no) + ": " + msg); };
  LoadedIndex out;
  std::vector<std::vector<double>> rows;
  try {
    if (!std::getline(in, line)) throw Error(ErrorKind::kMissingFile, path.string() + ": no records");
    ++line_no;
    out.header = Json::parse(line);
    if (out.header.value("format", "") != kPolicyFormat) fail("not a policy file (bad header)");
    if (out.header.value("version", -1) != kPolicyFormatVersion) fail("schema version mismatch");
    if (out.header.value("kind", "") != kind) fail("schema mismatch: expected a " + kind + " policy");
    const std::size_t n_rows = out.header.at("rows").get<std::size_t>();
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      rows.push_back(j.at("f").get<std::vector<double>>());
      std::vector<Action> w;
      for (const Json& a : j.at("a")) w.push_back({point_from_json(a)});
      out.windows.push_back(std::move(w));
    }
    if (rows.size() != n_rows) fail("header declares " + std::to_string(n_rows) + " rows, found " + std::to_string(rows.size()));
    std::vector<KnnIndex::Group> groups;
    for (const Json& g : out.header.at("groups")) groups.push_back({g.at(0).get<std::size_t>(), g.at(1).get<double>()});
    out.index = KnnIndex::restore(std::move(rows), out.header.at("mean").get<std::vector<double>>(),
                                  out.header.at("scale").get<std::vector<double>>(), std::move(groups));
  } catch (const Json::exception& e) {
    fail(std::string("malformed record: ") + e.what());
  }
  return out;
}

}  // namespace

void save_policy(const std::filesystem::path& path, const KnnBasePolicy& p, const Json& meta) {
  auto out = open_output(path);
  Json h = index_header(p.index());
  h["format"] = kPolicyFormat;
  h["version"] = kPolicyFormatVersion;
  h["kind"] = "base";
  h["k"] = p.config().k;
  h["horizon"] = p.config().horizon;
  h["proprio_weight"] = p.config().proprio_weight;
  h["object_frame_actions"] = p.config().object_frame_actions;
  if (!meta.is_null()) h["meta"] = meta;
  out << h.dump() << '\n';
  write_rows(out, p.index(), p.windows());
}

void save_policy(const std::filesystem::path& path, const KnnInversePolicy& p, const Json& meta) {
  auto out = open_output(path);
  Json h = index_header(p.index());
  h["format"] = kPolicyFormat;
  h["version"] = kPolicyFormatVersion;
  h["kind"] = "inverse";
  h["k"] = p.config().k;
  h["horizon"] = p.horizon();
  h["n_keypoints"] = p.n_keypoints();
  h["proprio_weight"] = p.config().proprio_weight;
  h["zero_out"] = p.config().zero_out;
  if (!meta.is_null()) h["meta"] = meta;
  out << h.dump() << '\n';
  write_rows(out, p.index(), p.windows());
}

KnnBasePolicy load_base_policy(const std::filesystem::path& path) {
  auto l = read_policy(path, "base");
  KnnConfig cfg;
  cfg.k = l.header.at("k").get<int>();
  cfg.horizon = l.header.at("horizon").get<int>();
  cfg.proprio_weight = l.header.at("proprio_weight").get<double>();
  cfg.object_frame_actions = l.header.at("object_frame_actions").get<bool>();
  return KnnBasePolicy(std::move(l.index), std::move(l.windows), cfg);
}

KnnInversePolicy load_inverse_policy(const std::filesystem::path& path) {
  auto l = read_policy(path, "inverse");
  InverseConfig cfg;
  cfg.k = l.header.at("k").get<int>();
  cfg.proprio_weight = l.header.at("proprio_weight").get<double>();
  cfg.zero_out = l.header.at("zero_out").get<bool>();
  return KnnInversePolicy(std::move(l.index), std::move(l.windows), cfg, l.header.at("n_keypoints").get<std::size_t>(),
                          l.header.at("horizon").get<int>());
}

}  // namespace ocr
