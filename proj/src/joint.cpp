#include "ocr/joint.hpp"

#include <cmath>
#include <limits>

#include "ocr/error.hpp"
#include "ocr/json_io.hpp"

namespace ocr {

const char* to_string(Branch b) { return b == Branch::kBase ? "BASE" : "RECOVER"; }
const char* to_string(RolloutStatus s) { return s == RolloutStatus::kSuccess ? "SUCCESS" : "TIMEOUT"; }

JointPolicy::JointPolicy(std::shared_ptr<const BasePolicy> base, std::shared_ptr<const InversePolicy> inv,
                         ManifoldModel manifold, PlanConfig plan, JointConfig cfg)
    : base_(std::move(base)), inv_(std::move(inv)), manifold_(std::move(manifold)), plan_(plan), cfg_(cfg) {
  if (!base_ || !inv_) throw Error("joint policy: missing sub-policy");
  validate(manifold_);
  validate(plan_);
  if (cfg_.exec_per_cycle < 1 || cfg_.exec_per_cycle > plan_.horizon)
    throw Error(ErrorKind::kInvalidConfig, "joint policy: exec_per_cycle must lie in [1, L]");
  if (!(cfg_.hysteresis >= 0.0)) throw Error(ErrorKind::kInvalidConfig, "joint policy: hysteresis must be >= 0");
}

Branch JointPolicy::select(double eta_rec, Branch prev) const {
  double eps = manifold_.eps_rec;
  if (prev == Branch::kRecover && cfg_.hysteresis > 0.0) eps *= 1.0 + cfg_.hysteresis;
  return eta_rec >= eps ? Branch::kBase : Branch::kRecover;
}

JointDecision JointPolicy::decide(const Observation& obs, Point2 proprio, Branch prev) const {
  const RecoveryTuple rt = recovery_tuple(manifold_, obs.keypoints);
  JointDecision d;
  d.eta_rec = rt.eta_rec;
  d.delta_rec = rt.delta_rec;
  d.branch = select(rt.eta_rec, prev);
  if (d.branch == Branch::kBase) {
    d.actions = base_->act(obs, proprio);
  } else {
    const double d_pos = norm(proprio - obs.obj_pose.translation());
    const RecoveryTrajectory plan = plan_recovery(obs.keypoints, rt.delta_rec, d_pos, plan_);
    d.actions = inverse_act(*inv_, plan, obs.obj_pose, proprio);
  }
  return d;
}

namespace {

template <typename Decide>
RolloutTrace run_loop(const SimConfig& cfg, std::uint64_t seed, Region region, int max_steps, int exec, Decide&& decide) {
  if (max_steps <= 0) max_steps = cfg.max_steps;
  const KeypointSet tmpl = keypoint_template(cfg);
  RolloutTrace t;
  t.seed = seed;
  t.region = region;
  SimState s = reset(cfg, seed, region);
  Branch prev = Branch::kBase;
  int cycle = 0;
  bool done = is_success(s, cfg);
  while (!done && s.step_count < max_steps) {
    const JointDecision d = decide(observe(s, tmpl), s.ee_pos, prev);
    if (d.actions.empty()) throw Error("rollout: policy returned no actions");
    prev = d.branch;
    const int n = std::min<int>(exec, static_cast<int>(d.actions.size()));
    for (int i = 0; i < n && !done && s.step_count < max_steps; ++i) {
      t.steps.push_back({s, d.eta_rec, d.branch, d.actions[i], cycle});
      s = step(s, d.actions[i], cfg);
      done = is_success(s, cfg);
    }
    ++cycle;
  }
  t.final_state = s;
  t.status = done ? RolloutStatus::kSuccess : RolloutStatus::kTimeout;
  return t;
}

}  // namespace

RolloutTrace rollout(const SimConfig& cfg, const JointPolicy& jp, std::uint64_t seed, Region region, int max_steps) {
  return run_loop(cfg, seed, region, max_steps, jp.config().exec_per_cycle,
                  [&](const Observation& o, Point2 p, Branch prev) { return jp.decide(o, p, prev); });
}

RolloutTrace rollout_base(const SimConfig& cfg, const BasePolicy& base, int exec_per_cycle, std::uint64_t seed,
                          Region region, int max_steps) {
  if (exec_per_cycle < 1) throw Error(ErrorKind::kInvalidConfig, "rollout_base: exec_per_cycle must be >= 1");
  return run_loop(cfg, seed, region, max_steps, exec_per_cycle, [&](const Observation& o, Point2 p, Branch) {
    JointDecision d;
    d.actions = base.act(o, p);
    d.eta_rec = std::numeric_limits<double>::quiet_NaN();
    return d;
  });
}

// --- trace files ------------------------------------------------------------------

namespace {

constexpr const char* kTraceFormat = "ocr-trace";
constexpr int kTraceVersion = 1;

Json state_json(const SimState& s) {
  return {{"pose", to_json(s.block_pose)}, {"ee", to_json(s.ee_pos)}, {"t", s.step_count}};
}

SimState state_from(const Json& j) {
  SimState s;
  s.block_pose = pose_from_json(j.at("pose"));
  s.ee_pos = point_from_json(j.at("ee"));
  s.step_count = j.at("t").get<int>();
  return s;
}

// JSON has no NaN; base-only traces store null.
Json eta_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
double eta_from(const Json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

void save_trace(const std::filesystem::path& path, const RolloutTrace& t, const Json& meta) {
  auto out = open_output(path);
  Json header{{"format", kTraceFormat},
              {"version", kTraceVersion},
              {"seed", t.seed},
              {"region", region_name(t.region)},
              {"status", to_string(t.status)},
              {"steps", t.steps.size()},
              {"final", state_json(t.final_state)}};
  if (!meta.is_null()) header["meta"] = meta;
  out << header.dump() << '\n';
  for (const TraceStep& s : t.steps) {
    out << Json{{"state", state_json(s.state)},
                {"eta", eta_json(s.eta_rec)},
                {"branch", to_string(s.branch)},
                {"action", to_json(s.action.target)},
                {"cycle", s.cycle}}
               .dump()
        << '\n';
  }
}

RolloutTrace load_trace(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  RolloutTrace t;
  try {
    if (!std::getline(in, line)) throw Error(ErrorKind::kMissingFile, path.string() + ": no records");
    ++line_no;
    const Json h = Json::parse(line);
    if (h.value("format", "") != kTraceFormat || h.value("version", -1) != kTraceVersion)
      throw Error(path.string() + ":1: not a version " + std::to_string(kTraceVersion) + " trace file");
    t.seed = h.at("seed").get<std::uint64_t>();
    t.region = parse_region(h.at("region").get<std::string>());
    t.status = h.at("status").get<std::string>() == "SUCCESS" ? RolloutStatus::kSuccess : RolloutStatus::kTimeout;
    t.final_state = state_from(h.at("final"));
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      TraceStep s;
      s.state = state_from(j.at("state"));
      s.eta_rec = eta_from(j.at("eta"));
      s.branch = j.at("branch").get<std::string>() == "BASE" ? Branch::kBase : Branch::kRecover;
      s.action.target = point_from_json(j.at("action"));
      s.cycle = j.at("cycle").get<int>();
      t.steps.push_back(s);
    }
    if (t.steps.size() != h.at("steps").get<std::size_t>())
      throw Error(path.string() + ": step count does not match header");
  } catch (const Json::exception& e) {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
  }
  return t;
}

}  // namespace ocr
