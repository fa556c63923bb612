#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ocr/dataset.hpp"
#include "ocr/joint.hpp"
#include "ocr/json_io.hpp"
#include "ocr/policies.hpp"
#include "ocr/sim.hpp"

namespace ocr {

/// Scripted-expert demonstrations.
struct DemoSet {
  std::vector<Episode> episodes;
  /// Seed of each kept episode.
  std::vector<std::uint64_t> seeds;
  /// Seeds whose expert rollout timed out (not recorded).
  std::vector<std::uint64_t> failed;
};

/// Runs the scripted expert from `region` resets on seeds first_seed,
/// first_seed+1, ... until `n` successful episodes are recorded. Gives up
/// after 4n attempts.
DemoSet collect_demos(const SimConfig& cfg, int n, std::uint64_t first_seed, Region region = Region::kId);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool success = false;
  int steps = 0;
  double final_coverage = 0.0;
};

struct EvalReport {
  std::string policy_id;
  Region region = Region::kAny;
  std::vector<SeedOutcome> outcomes;
  double success_rate = 0.0;
  /// Mean steps over successful seeds (0 when none succeeded).
  double mean_steps_to_success = 0.0;
  std::string fingerprint;

  std::size_t n_seeds() const { return outcomes.size(); }
  int successes() const;
};

using RolloutFn = std::function<RolloutTrace(std::uint64_t seed)>;

/// One rollout per seed on up to `jobs` threads; results are reduced in seed
/// order so the report does not depend on scheduling.
EvalReport eval_suite(const std::string& policy_id, const SimConfig& cfg, Region region, const std::vector<std::uint64_t>& seeds,
                      const RolloutFn& run, int jobs = 1, const std::string& fingerprint = "");

EvalReport eval_joint(const JointPolicy& jp, const SimConfig& cfg, Region region,
                      const std::vector<std::uint64_t>& seeds, int jobs = 1, const std::string& fingerprint = "");
EvalReport eval_base(const BasePolicy& base, int exec_per_cycle, const SimConfig& cfg, Region region,
                     const std::vector<std::uint64_t>& seeds, int jobs = 1, const std::string& fingerprint = "");

/// Recovery rollouts recorded as demonstrations.
struct AugmentedDataset {
  std::vector<Episode> episodes;
  std::vector<std::uint64_t> seeds;
  /// Seeds that never reached η_rec ≥ ε_rec before the step limit.
  std::vector<std::uint64_t> excluded;
  /// Recording stops once η_rec ≥ stop_factor · ε_rec.
  double stop_factor = 1.0;
};

/// From each OOD reset, runs the joint policy and records (obs, action,
/// proprio) until η_rec ≥ stop_factor · ε_rec, or drops the episode at the
/// step limit. The final record is that frame, labelled with the base
/// policy's action.
AugmentedDataset collect_aug_demos(const JointPolicy& jp, const SimConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                   int jobs = 1, double stop_factor = 1.0);

/// Re-indexes the base policy over D_b ∪ D_aug.
KnnBasePolicy retrain_augmented(const std::vector<Episode>& base_demos, const AugmentedDataset& aug,
                                const KnnConfig& cfg);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view data);
/// Hash of a set of strings and file contents.
std::string fingerprint(const std::vector<std::string>& texts, const std::vector<std::filesystem::path>& files);

Json to_json(const EvalReport& r);
EvalReport report_from_json(const Json& j);
// `meta` (when not null) is stored under "meta" in JSON, as a leading
// "# meta: {...}" line in CSV and as a <metadata> element in SVG.
void write_report(const std::filesystem::path& json_path, const EvalReport& r, const Json& meta = nullptr);
void write_report_csv(const std::filesystem::path& csv_path, const EvalReport& r, const Json& meta = nullptr);
/// Success-rate bars, one per report.
void write_success_svg(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                       const Json& meta = nullptr);
/// η_rec over time for one trace, with ε_rec as a dashed line.
void write_density_svg(const std::filesystem::path& path, const RolloutTrace& t, double eps_rec,
                       const Json& meta = nullptr);

}  // namespace ocr
