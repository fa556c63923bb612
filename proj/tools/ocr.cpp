// ocr: command-line front end for the recovery pipeline.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ocr/config.hpp"
#include "ocr/dataset.hpp"
#include "ocr/error.hpp"
#include "ocr/harness.hpp"
#include "ocr/joint.hpp"
#include "ocr/manifold.hpp"
#include "ocr/policies.hpp"

namespace fs = std::filesystem;
using namespace ocr;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInvalidConfig = 2;
constexpr int kExitMissingFile = 3;

// Flags shared by every subcommand. Only one subcommand runs per process, so
// a single instance is bound to all of them.
struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<int> jobs;
  std::optional<int> M, L, E;
  std::optional<double> alpha, d_min, d_max, phi, eta, eps;
  std::optional<double> stop_factor;
  std::optional<int> max_steps;

  std::string seeds;
  std::string region = "ood";
  std::string policy = "joint";
  std::string policy_id;
  std::uint64_t seed = 0;

  std::string out, csv, svg, out_policy;
  std::string demos, rec, aug, manifold, base, inverse, trace;
  std::vector<std::string> reports;
};

struct Command {
  std::string name;
  RunConfig cfg;
  Json effective;
};

void add_common(CLI::App* sc, Options& o) {
  sc->add_option("--config", o.config_path, "JSON config file (merged over defaults)");
  sc->add_option("--set", o.sets, "Override one config key, e.g. --set plan.alpha=6 (repeatable)");
  sc->add_option("--jobs", o.jobs, "Worker threads for per-seed work (default 1)");
  sc->add_option("--M", o.M, "Mixture components per keypoint (manifold.components)");
  sc->add_option("--L", o.L, "Plan horizon in frames (plan.horizon)");
  sc->add_option("--E", o.E, "Actions executed per decision cycle (joint.exec_per_cycle)");
  sc->add_option("--alpha", o.alpha, "Plan step scale (plan.alpha)");
  sc->add_option("--d-min", o.d_min, "Delay ramp lower distance (plan.d_min)");
  sc->add_option("--d-max", o.d_max, "Delay ramp upper distance (plan.d_max)");
  sc->add_option("--phi", o.phi, "Override calibrated phi (manifold.calibration.phi)");
  sc->add_option("--eta", o.eta, "Override eta (manifold.calibration.eta)");
  sc->add_option("--eps", o.eps, "Override eps_rec (manifold.calibration.eps)");
  sc->add_option("--max-steps", o.max_steps, "Episode step limit (sim.max_steps)");
}

// "a..b" (inclusive) or "a,b,c".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto num = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw Error(ErrorKind::kInvalidConfig, "bad seed '" + s + "' in --seeds");
    return std::stoull(s);
  };
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t a = num(text.substr(0, dots)), b = num(text.substr(dots + 2));
    if (b < a) throw Error(ErrorKind::kInvalidConfig, "--seeds range is empty");
    if (b - a >= 10000000) throw Error(ErrorKind::kInvalidConfig, "--seeds range too large");
    for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    out.push_back(num(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Command resolve(const std::string& name, const Options& o) {
  Json doc = to_json(RunConfig{});
  if (!o.config_path.empty()) merge_config(doc, read_json_file(o.config_path));
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::kInvalidConfig, "--set expects key=value, got '" + kv + "'");
    set_config_value(doc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  auto put = [&](const char* key, const auto& v) {
    if (v) set_config_value(doc, key, Json(*v).dump());
  };
  put("jobs", o.jobs);
  put("manifold.components", o.M);
  put("plan.horizon", o.L);
  put("joint.exec_per_cycle", o.E);
  put("plan.alpha", o.alpha);
  put("plan.d_min", o.d_min);
  put("plan.d_max", o.d_max);
  put("manifold.calibration.phi", o.phi);
  put("manifold.calibration.eta", o.eta);
  put("manifold.calibration.eps", o.eps);
  put("augment.stop_factor", o.stop_factor);
  put("sim.max_steps", o.max_steps);
  Command c{name, run_config_from_json(doc), {}};
  c.effective = to_json(c.cfg);
  // Thread count never changes results; keeping it out lets artifacts from
  // different --jobs compare byte for byte.
  c.effective.erase("jobs");
  return c;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorKind::kInvalidConfig, std::string(flag) + " is required");
}

// Provenance stored in every artifact: the command, the merged config and a
// hash of each input file's contents (paths are deliberately left out).
Json make_meta(const Command& c, const std::vector<std::pair<std::string, std::string>>& inputs, Json extra = Json::object()) {
  Json in = Json::object();
  for (const auto& [role, path] : inputs) in[role] = fingerprint({}, {path});
  Json meta = {{"tool", "ocr"}, {"command", c.name}, {"config", c.effective}, {"inputs", in}};
  for (auto& [k, v] : extra.items()) meta[k] = v;
  return meta;
}

std::vector<std::vector<KeypointSet>> frames_per_episode(const std::vector<Episode>& demos) {
  std::vector<std::vector<KeypointSet>> out;
  for (const Episode& e : demos) out.push_back(keypoint_frames(e));
  return out;
}

JointPolicy load_joint(const Command& c, const Options& o) {
  require(o.base, "--base");
  require(o.inverse, "--inverse");
  require(o.manifold, "--manifold");
  auto base = std::make_shared<KnnBasePolicy>(load_base_policy(o.base));
  auto inv = std::make_shared<KnnInversePolicy>(load_inverse_policy(o.inverse));
  return JointPolicy(base, inv, load_manifold(o.manifold), c.cfg.plan, c.cfg.joint);
}

std::vector<std::pair<std::string, std::string>> policy_inputs(const Options& o) {
  if (o.policy == "base") return {{"base", o.base}};
  return {{"base", o.base}, {"inverse", o.inverse}, {"manifold", o.manifold}};
}

void check_policy_kind(const Options& o) {
  if (o.policy != "joint" && o.policy != "base")
    throw Error(ErrorKind::kInvalidConfig, "--policy must be joint or base, got '" + o.policy + "'");
}

// --- subcommands ----------------------------------------------------------------

void cmd_demo_collect(const Command& c, const Options& o) {
  require(o.out, "--out");
  SimConfig sim = c.cfg.sim;
  if (c.cfg.demos.max_steps > 0) sim.max_steps = c.cfg.demos.max_steps;
  const DemoSet d = collect_demos(sim, c.cfg.demos.n, c.cfg.demos.first_seed);
  save_episodes(o.out, d.episodes, make_meta(c, {}, {{"seeds", d.seeds}, {"failed_seeds", d.failed}}));
  std::printf("demo-collect: %zu episodes, %zu expert timeouts -> %s\n", d.episodes.size(), d.failed.size(),
              o.out.c_str());
}

void cmd_build_rec(const Command& c, const Options& o) {
  require(o.demos, "--demos");
  require(o.out, "--out");
  const auto rec = build_recovery_dataset(load_episodes(o.demos), keypoint_template(c.cfg.sim));
  save_episodes(o.out, rec, make_meta(c, {{"demos", o.demos}}));
  std::printf("build-rec: %zu episodes -> %s\n", rec.size(), o.out.c_str());
}

void cmd_fit_manifold(const Command& c, const Options& o) {
  require(o.demos, "--demos");
  require(o.out, "--out");
  std::vector<KeypointSet> frames;
  for (const auto& ep : frames_per_episode(load_episodes(o.demos))) frames.insert(frames.end(), ep.begin(), ep.end());
  const ManifoldModel m = fit_manifold(frames, c.cfg.manifold.components, c.cfg.manifold.em);
  save_manifold(o.out, m, make_meta(c, {{"demos", o.demos}}));
  std::printf("fit-manifold: %zu keypoints, M=%d, %zu frames -> %s\n", m.size(), m.components, frames.size(),
              o.out.c_str());
}

void cmd_calibrate(const Command& c, const Options& o) {
  require(o.manifold, "--manifold");
  require(o.demos, "--demos");
  require(o.out, "--out");
  const auto eps = frames_per_episode(load_episodes(o.demos));
  const ManifoldModel m = calibrate(load_manifold(o.manifold), eps, c.cfg.manifold.calibration);
  save_manifold(o.out, m, make_meta(c, {{"manifold", o.manifold}, {"demos", o.demos}}));
  std::printf("calibrate: phi=%.6g eta=%.6g eps_rec=%.6g -> %s\n", m.q_phi, m.q_eta, m.eps_rec, o.out.c_str());
}

void cmd_train_base(const Command& c, const Options& o) {
  require(o.demos, "--demos");
  require(o.out, "--out");
  const auto demos = load_episodes(o.demos);
  std::vector<std::pair<std::string, std::string>> inputs{{"demos", o.demos}};
  KnnBasePolicy p = [&] {
    if (o.aug.empty()) return train_base(demos, c.cfg.base);
    inputs.emplace_back("aug", o.aug);
    AugmentedDataset aug;
    aug.episodes = load_episodes(o.aug);
    return retrain_augmented(demos, aug, c.cfg.base);
  }();
  save_policy(o.out, p, make_meta(c, inputs));
  std::printf("train-base: %zu rows -> %s\n", p.index().size(), o.out.c_str());
}

void cmd_train_inverse(const Command& c, const Options& o) {
  require(o.rec, "--rec");
  require(o.out, "--out");
  const KnnInversePolicy p = train_inverse(load_rec_episodes(o.rec), c.cfg.plan.horizon, c.cfg.inverse);
  save_policy(o.out, p, make_meta(c, {{"rec", o.rec}}));
  std::printf("train-inverse: %zu rows -> %s\n", p.index().size(), o.out.c_str());
}

void cmd_rollout(const Command& c, const Options& o) {
  check_policy_kind(o);
  require(o.out, "--out");
  const Region region = parse_region(o.region);
  RolloutTrace t;
  double eps_rec = 0.0;
  if (o.policy == "base") {
    require(o.base, "--base");
    t = rollout_base(c.cfg.sim, load_base_policy(o.base), c.cfg.joint.exec_per_cycle, o.seed, region);
  } else {
    const JointPolicy jp = load_joint(c, o);
    eps_rec = jp.manifold().eps_rec;
    t = rollout(c.cfg.sim, jp, o.seed, region);
  }
  const Json meta = make_meta(c, policy_inputs(o), {{"policy", o.policy}, {"seed", o.seed}, {"region", o.region}});
  save_trace(o.out, t, meta);
  if (!o.svg.empty()) write_density_svg(o.svg, t, eps_rec, meta);
  std::printf("rollout: seed %llu %s after %zu steps -> %s\n", static_cast<unsigned long long>(o.seed),
              to_string(t.status), t.steps.size(), o.out.c_str());
}

void cmd_eval(const Command& c, const Options& o) {
  check_policy_kind(o);
  require(o.seeds, "--seeds");
  require(o.out, "--out");
  const Region region = parse_region(o.region);
  const auto seeds = parse_seeds(o.seeds);
  const auto inputs = policy_inputs(o);
  const std::string id = o.policy_id.empty() ? o.policy : o.policy_id;
  std::vector<fs::path> files;
  for (const auto& in : inputs) files.emplace_back(in.second);
  const std::string fp = fingerprint({c.effective.dump(), o.policy, o.region, o.seeds}, files);
  EvalReport r;
  if (o.policy == "base") {
    require(o.base, "--base");
    r = eval_base(load_base_policy(o.base), c.cfg.joint.exec_per_cycle, c.cfg.sim, region, seeds, c.cfg.jobs, fp);
  } else {
    r = eval_joint(load_joint(c, o), c.cfg.sim, region, seeds, c.cfg.jobs, fp);
  }
  r.policy_id = id;
  const Json meta = make_meta(c, inputs, {{"seeds", o.seeds}});
  write_report(o.out, r, meta);
  if (!o.csv.empty()) write_report_csv(o.csv, r, meta);
  std::printf("eval: %s %s %d/%zu = %.3f -> %s\n", id.c_str(), region_name(region), r.successes(), r.n_seeds(),
              r.success_rate, o.out.c_str());
}

void cmd_augment(const Command& c, const Options& o) {
  require(o.demos, "--demos");
  require(o.out, "--out");
  const JointPolicy jp = load_joint(c, o);
  std::vector<std::uint64_t> seeds;
  if (o.seeds.empty()) {
    for (int i = 0; i < c.cfg.augment.n_inits; ++i) seeds.push_back(c.cfg.augment.first_seed + i);
  } else {
    seeds = parse_seeds(o.seeds);
  }
  const auto demos = load_episodes(o.demos);
  const AugmentedDataset aug = collect_aug_demos(jp, c.cfg.sim, seeds, c.cfg.jobs, c.cfg.augment.stop_factor);
  const Json meta = make_meta(c, {{"demos", o.demos}, {"base", o.base}, {"inverse", o.inverse}, {"manifold", o.manifold}},
                              {{"seeds", aug.seeds}, {"excluded_seeds", aug.excluded}, {"stop_factor", aug.stop_factor}});
  if (aug.episodes.empty()) throw Error("augment: no OOD initialization reached the ID region");
  save_episodes(o.out, aug.episodes, meta);
  if (!o.out_policy.empty()) save_policy(o.out_policy, retrain_augmented(demos, aug, c.cfg.base), meta);
  std::printf("augment: %zu episodes, %zu excluded -> %s\n", aug.episodes.size(), aug.excluded.size(), o.out.c_str());
}

void cmd_report(const Command& c, const Options& o) {
  if (o.reports.empty() && o.trace.empty())
    throw Error(ErrorKind::kInvalidConfig, "report needs --reports and/or --trace");
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<EvalReport> rs;
  for (std::size_t i = 0; i < o.reports.size(); ++i) {
    rs.push_back(report_from_json(read_json_file(o.reports[i])));
    inputs.emplace_back("report" + std::to_string(i), o.reports[i]);
  }
  if (!o.trace.empty()) inputs.emplace_back("trace", o.trace);
  if (!o.manifold.empty()) inputs.emplace_back("manifold", o.manifold);
  const Json meta = make_meta(c, inputs);
  if (!rs.empty()) {
    if (!o.svg.empty()) write_success_svg(o.svg, rs, meta);
    if (!o.csv.empty()) {
      auto out = open_output(o.csv);
      out << "# meta: " << meta.dump() << '\n' << "policy,region,n_seeds,successes,success_rate,mean_steps_to_success\n";
      for (const EvalReport& r : rs) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f,%.3f", r.success_rate, r.mean_steps_to_success);
        out << r.policy_id << ',' << region_name(r.region) << ',' << r.n_seeds() << ',' << r.successes() << ',' << buf
            << '\n';
      }
    }
    for (const EvalReport& r : rs)
      std::printf("%-16s %-4s %3d/%-3zu %.3f\n", r.policy_id.c_str(), region_name(r.region), r.successes(), r.n_seeds(),
                  r.success_rate);
  }
  if (!o.trace.empty()) {
    require(o.out, "--out (density SVG for --trace)");
    const RolloutTrace t = load_trace(o.trace);
    const double eps = o.manifold.empty() ? 0.0 : load_manifold(o.manifold).eps_rec;
    write_density_svg(o.out, t, eps, meta);
  }
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidConfig: return "invalid_config";
    case ErrorKind::kMissingFile: return "missing_file";
    case ErrorKind::kRuntime: break;
  }
  return "runtime";
}

int fail(int code, const char* kind, std::string msg) {
  for (char& ch : msg) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::cerr << "ocr: error: code=" << code << " kind=" << kind << " message=" << Json(msg).dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keypoint-manifold OOD recovery pipeline for planar pushing"};
  app.require_subcommand(1);
  Options o;

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const Command&, const Options&);
  };
  const Sub subs[] = {
      {"demo-collect", "Record scripted-expert ID demonstrations (D_b)", cmd_demo_collect},
      {"build-rec", "Convert demonstrations into the recovery dataset (D_rec)", cmd_build_rec},
      {"fit-manifold", "Fit per-keypoint Gaussian mixtures to demonstration frames", cmd_fit_manifold},
      {"calibrate", "Set phi, eta and eps_rec of a fitted manifold", cmd_calibrate},
      {"train-base", "Index the nearest-neighbour base policy (optionally with --aug)", cmd_train_base},
      {"train-inverse", "Index the keypoint inverse policy over D_rec", cmd_train_inverse},
      {"rollout", "Run one episode and dump its trace", cmd_rollout},
      {"eval", "Evaluate a policy over a seed list", cmd_eval},
      {"augment", "Collect recovery rollouts as demonstrations and retrain the base policy", cmd_augment},
      {"report", "Summaries and plots from reports and traces", cmd_report},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> bound;
  for (const Sub& s : subs) {
    CLI::App* sc = app.add_subcommand(s.name, s.help);
    add_common(sc, o);
    sc->add_option("--out", o.out, "Output file");
    const std::string n = s.name;
    if (n == "build-rec" || n == "fit-manifold" || n == "calibrate" || n == "train-base" || n == "augment")
      sc->add_option("--demos", o.demos, "Demonstration episodes (D_b)");
    if (n == "train-inverse") sc->add_option("--rec", o.rec, "Recovery dataset (D_rec)");
    if (n == "train-base") sc->add_option("--aug", o.aug, "Augmented episodes to append to D_b");
    if (n == "calibrate" || n == "rollout" || n == "eval" || n == "augment" || n == "report")
      sc->add_option("--manifold", o.manifold, "Manifold model");
    if (n == "rollout" || n == "eval" || n == "augment") {
      sc->add_option("--base", o.base, "Base policy");
      sc->add_option("--inverse", o.inverse, "Inverse policy");
    }
    if (n == "rollout" || n == "eval") {
      sc->add_option("--policy", o.policy, "joint or base")->capture_default_str();
      sc->add_option("--region", o.region, "Reset region: id, ood or any")->capture_default_str();
    }
    if (n == "rollout") {
      sc->add_option("--seed", o.seed, "Reset seed");
      sc->add_option("--svg", o.svg, "Also write an eta_rec-over-time SVG");
    }
    if (n == "eval" || n == "augment") sc->add_option("--seeds", o.seeds, "Seed list: a..b (inclusive) or a,b,c");
    if (n == "eval") {
      sc->add_option("--csv", o.csv, "Also write a per-seed CSV");
      sc->add_option("--policy-id", o.policy_id, "Label stored in the report (default: --policy)");
    }
    if (n == "augment") {
      sc->add_option("--out-policy", o.out_policy, "Write the retrained base policy here");
      sc->add_option("--stop-factor", o.stop_factor, "Stop recording at eta_rec >= factor * eps_rec");
    }
    if (n == "report") {
      sc->add_option("--reports", o.reports, "Evaluation report files");
      sc->add_option("--svg", o.svg, "Success-rate bar chart");
      sc->add_option("--csv", o.csv, "Summary CSV");
      sc->add_option("--trace", o.trace, "Trace file for an eta_rec-over-time SVG (written to --out)");
    }
    bound.emplace_back(sc, &s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitInvalidConfig, "invalid_config", e.what());
  }

  for (const auto& [sc, s] : bound) {
    if (!sc->parsed()) continue;
    try {
      const Command c = resolve(s->name, o);
      s->run(c, o);
      return 0;
    } catch (const Error& e) {
      const int code = e.kind() == ErrorKind::kInvalidConfig ? kExitInvalidConfig
                       : e.kind() == ErrorKind::kMissingFile ? kExitMissingFile
                                                             : kExitRuntime;
      return fail(code, kind_name(e.kind()), e.what());
    } catch (const std::exception& e) {
      return fail(kExitRuntime, "runtime", e.what());
    }
  }
  return 0;
}
