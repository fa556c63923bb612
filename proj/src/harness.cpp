#include "ocr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "ocr/error.hpp"
#include "ocr/json_io.hpp"

namespace ocr {

DemoSet collect_demos(const SimConfig& cfg, int n, std::uint64_t first_seed, Region region) {
  if (n < 1) throw Error(ErrorKind::kInvalidConfig, "collect_demos: n must be >= 1");
  validate(cfg);
  const KeypointSet tmpl = keypoint_template(cfg);
  DemoSet out;
  for (std::uint64_t seed = first_seed; static_cast<int>(out.episodes.size()) < n; ++seed) {
    if (seed - first_seed >= static_cast<std::uint64_t>(4 * n))
      throw Error("collect_demos: expert succeeded on only " + std::to_string(out.episodes.size()) + " of " +
                  std::to_string(seed - first_seed) + " resets");
    SimState s = reset(cfg, seed, region);
    ScriptedExpert expert(cfg);
    Episode ep;
    bool ok = is_success(s, cfg);
    while (!ok && s.step_count < cfg.max_steps) {
      const Action a = expert.act(s);
      ep.steps.push_back({observe(s, tmpl), a, s.ee_pos});
      s = step(s, a, cfg);
      ok = is_success(s, cfg);
    }
    if (ok && !ep.steps.empty()) {
      out.episodes.push_back(std::move(ep));
      out.seeds.push_back(seed);
    } else if (!ok) {
      out.failed.push_back(seed);
    }
  }
  return out;
}

int EvalReport::successes() const {
  return static_cast<int>(std::count_if(outcomes.begin(), outcomes.end(), [](const SeedOutcome& o) { return o.success; }));
}

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
// rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

EvalReport eval_suite(const std::string& policy_id, const SimConfig& cfg, Region region,
                      const std::vector<std::uint64_t>& seeds, const RolloutFn& run, int jobs,
                      const std::string& fingerprint) {
  if (seeds.empty()) throw Error(ErrorKind::kInvalidConfig, "eval_suite: empty seed list");
  EvalReport r;
  r.policy_id = policy_id;
  r.region = region;
  r.fingerprint = fingerprint;
  r.outcomes.resize(seeds.size());
  parallel_for(seeds.size(), jobs, [&](std::size_t i) {
    const RolloutTrace t = run(seeds[i]);
    r.outcomes[i] = {seeds[i], t.success(), t.final_state.step_count, coverage(t.final_state, cfg)};
  });
  int ok = 0;
  long total = 0;
  for (const SeedOutcome& o : r.outcomes) {
    if (o.success) {
      ++ok;
      total += o.steps;
    }
  }
  r.success_rate = static_cast<double>(ok) / static_cast<double>(seeds.size());
  r.mean_steps_to_success = ok > 0 ? static_cast<double>(total) / ok : 0.0;
  return r;
}

EvalReport eval_joint(const JointPolicy& jp, const SimConfig& cfg, Region region,
                      const std::vector<std::uint64_t>& seeds, int jobs, const std::string& fingerprint) {
  return eval_suite(
      "joint", cfg, region, seeds, [&](std::uint64_t seed) { return rollout(cfg, jp, seed, region); }, jobs,
      fingerprint);
}

EvalReport eval_base(const BasePolicy& base, int exec_per_cycle, const SimConfig& cfg, Region region,
                     const std::vector<std::uint64_t>& seeds, int jobs, const std::string& fingerprint) {
  return eval_suite(
      "base", cfg, region, seeds,
      [&](std::uint64_t seed) { return rollout_base(cfg, base, exec_per_cycle, seed, region); }, jobs, fingerprint);
}

// --- augmentation ------------------------------------------------------------------

namespace {

struct AugResult {
  Episode episode;
  bool reached = false;
};

AugResult record_recovery(const JointPolicy& jp, const SimConfig& cfg, const KeypointSet& tmpl, std::uint64_t seed,
                          double stop_factor) {
  AugResult out;
  SimState s = reset(cfg, seed, Region::kOod);
  const ManifoldModel& m = jp.manifold();
  std::vector<Action> window;
  std::size_t next = 0;
  Branch prev = Branch::kBase;
  while (s.step_count < cfg.max_steps) {
    const Observation obs = observe(s, tmpl);
    const double eta = recovery_tuple(m, obs.keypoints).eta_rec;
    if (eta >= stop_factor * m.eps_rec) {
      out.episode.steps.push_back({obs, jp.base().act(obs, s.ee_pos).front(), s.ee_pos});
      out.reached = true;
      return out;
    }
    if (next >= window.size() || next >= static_cast<std::size_t>(jp.config().exec_per_cycle)) {
      JointDecision d = jp.decide(obs, s.ee_pos, prev);
      prev = d.branch;
      window = std::move(d.actions);
      next = 0;
    }
    const Action a = window[next++];
    out.episode.steps.push_back({obs, a, s.ee_pos});
    s = step(s, a, cfg);
  }
  return out;
}

}  // namespace

AugmentedDataset collect_aug_demos(const JointPolicy& jp, const SimConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                   int jobs, double stop_factor) {
  if (seeds.empty()) throw Error(ErrorKind::kInvalidConfig, "collect_aug_demos: empty seed list");
  if (!(stop_factor >= 1.0)) throw Error(ErrorKind::kInvalidConfig, "collect_aug_demos: stop_factor must be >= 1");
  const KeypointSet tmpl = keypoint_template(cfg);
  std::vector<AugResult> results(seeds.size());
  parallel_for(seeds.size(), jobs, [&](std::size_t i) { results[i] = record_recovery(jp, cfg, tmpl, seeds[i], stop_factor); });
  AugmentedDataset out;
  out.stop_factor = stop_factor;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (results[i].reached) {
      out.episodes.push_back(std::move(results[i].episode));
      out.seeds.push_back(seeds[i]);
    } else {
      out.excluded.push_back(seeds[i]);
    }
  }
  return out;
}

KnnBasePolicy retrain_augmented(const std::vector<Episode>& base_demos, const AugmentedDataset& aug,
                                const KnnConfig& cfg) {
  if (base_demos.empty()) throw Error("retrain_augmented: empty base demo list");
  const std::size_t n = base_demos.front().steps.empty() ? 0 : base_demos.front().steps.front().obs.keypoints.size();
  for (const Episode& e : aug.episodes) {
    for (const EpisodeStep& s : e.steps) {
      if (s.obs.keypoints.size() != n) throw Error("retrain_augmented: schema mismatch (keypoint count)");
    }
  }
  // Recovery episodes stop at the ID boundary, not at task completion, so
  // their tails are not padded with a hold.
  return train_base(base_demos, aug.episodes, cfg);
}

// --- fingerprints and reports ---------------------------------------------------

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fingerprint(const std::vector<std::string>& texts, const std::vector<std::filesystem::path>& files) {
  std::string all;
  for (const std::string& t : texts) {
    all += t;
    all += '\0';
  }
  for (const auto& f : files) {
    auto in = open_input(f);
    std::ostringstream ss;
    ss << in.rdbuf();
    all += ss.str();
    all += '\0';
  }
  return fnv1a_hex(all);
}

Json to_json(const EvalReport& r) {
  Json outcomes = Json::array();
  for (const SeedOutcome& o : r.outcomes) {
    outcomes.push_back({{"seed", o.seed}, {"success", o.success}, {"steps", o.steps}, {"coverage", o.final_coverage}});
  }
  return {{"format", "ocr-eval-report"},
          {"version", 1},
          {"policy", r.policy_id},
          {"region", region_name(r.region)},
          {"n_seeds", r.n_seeds()},
          {"successes", r.successes()},
          {"success_rate", r.success_rate},
          {"mean_steps_to_success", r.mean_steps_to_success},
          {"fingerprint", r.fingerprint},
          {"outcomes", outcomes}};
}

EvalReport report_from_json(const Json& j) {
  try {
    if (j.value("format", "") != "ocr-eval-report") throw Error("not an evaluation report");
    EvalReport r;
    r.policy_id = j.at("policy").get<std::string>();
    r.region = parse_region(j.at("region").get<std::string>());
    r.success_rate = j.at("success_rate").get<double>();
    r.mean_steps_to_success = j.at("mean_steps_to_success").get<double>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    for (const Json& o : j.at("outcomes")) {
      r.outcomes.push_back({o.at("seed").get<std::uint64_t>(), o.at("success").get<bool>(), o.at("steps").get<int>(),
                            o.at("coverage").get<double>()});
    }
    return r;
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed evaluation report: ") + e.what());
  }
}

void write_report(const std::filesystem::path& json_path, const EvalReport& r, const Json& meta) {
  Json j = to_json(r);
  if (!meta.is_null()) j["meta"] = meta;
  write_json_file(json_path, j);
}

void write_report_csv(const std::filesystem::path& csv_path, const EvalReport& r, const Json& meta) {
  auto out = open_output(csv_path);
  if (!meta.is_null()) out << "# meta: " << meta.dump() << '\n';
  out << "policy,region,seed,success,steps,coverage\n";
  char buf[64];
  for (const SeedOutcome& o : r.outcomes) {
    std::snprintf(buf, sizeof buf, "%.6f", o.final_coverage);
    out << r.policy_id << ',' << region_name(r.region) << ',' << o.seed << ',' << (o.success ? 1 : 0) << ',' << o.steps
        << ',' << buf << '\n';
  }
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void svg_metadata(std::ostream& out, const Json& meta) {
  if (meta.is_null()) return;
  std::string text;
  for (char c : meta.dump()) {
    if (c == '<') text += "&lt;";
    else if (c == '&') text += "&amp;";
    else text += c;
  }
  out << "<metadata>" << text << "</metadata>\n";
}

}  // namespace

void write_success_svg(const std::filesystem::path& path, const std::vector<EvalReport>& reports, const Json& meta) {
  const double bar = 60.0, gap = 30.0, h = 200.0, top = 20.0, left = 40.0;
  const double width = left + reports.size() * (bar + gap) + gap;
  auto out = open_output(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(h + top + 50)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg_metadata(out, meta);
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + h
      << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = top + h - tick * h / 4;
    out << "<text x=\"4\" y=\"" << fmt(y + 4) << "\">" << fmt(tick / 4.0) << "</text>\n";
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = reports[i];
    const double x = left + gap + i * (bar + gap);
    const double bh = r.success_rate * h;
    out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(top + h - bh) << "\" width=\"" << bar << "\" height=\"" << fmt(bh)
        << "\" fill=\"" << (r.region == Region::kOod ? "#d95f02" : "#1b9e77") << "\"/>\n";
    out << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(top + h - bh - 4) << "\">" << fmt(r.success_rate) << "</text>\n";
    out << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(top + h + 16) << "\">" << r.policy_id << "</text>\n";
    out << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(top + h + 30) << "\">" << region_name(r.region) << "</text>\n";
  }
  out << "</svg>\n";
}

void write_density_svg(const std::filesystem::path& path, const RolloutTrace& t, double eps_rec, const Json& meta) {
  const double w = 600.0, h = 240.0, pad = 40.0;
  // log10 scale; densities span many orders of magnitude
  double lo = std::log10(std::max(eps_rec, 1e-300)), hi = lo;
  for (const TraceStep& s : t.steps) {
    if (s.eta_rec > 0.0 && std::isfinite(s.eta_rec)) {
      lo = std::min(lo, std::log10(s.eta_rec));
      hi = std::max(hi, std::log10(s.eta_rec));
    }
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double n = std::max<double>(1.0, static_cast<double>(t.steps.size()) - 1.0);
  auto px = [&](double i) { return pad + i / n * (w - 2 * pad); };
  auto py = [&](double v) { return h - pad - (std::log10(v) - lo) / (hi - lo) * (h - 2 * pad); };
  auto out = open_output(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg_metadata(out, meta);
  out << "<text x=\"4\" y=\"14\">log10 eta_rec, seed " << t.seed << " (" << to_string(t.status) << ")</text>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f78b4\" points=\"";
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const double v = t.steps[i].eta_rec;
    if (v > 0.0 && std::isfinite(v)) out << fmt(px(static_cast<double>(i))) << ',' << fmt(py(v)) << ' ';
  }
  out << "\"/>\n";
  if (eps_rec > 0.0) {
    const double y = py(eps_rec);
    out << "<line x1=\"" << pad << "\" y1=\"" << fmt(y) << "\" x2=\"" << w - pad << "\" y2=\"" << fmt(y)
        << "\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace ocr
