#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ocr/joint.hpp"
#include "ocr/json_io.hpp"
#include "ocr/manifold.hpp"
#include "ocr/planner.hpp"
#include "ocr/policies.hpp"
#include "ocr/sim.hpp"

namespace ocr {

struct DemoConfig {
  int n = 100;
  std::uint64_t first_seed = 100000;
  /// Expert step limit; 0 uses sim.max_steps.
  int max_steps = 0;
};

struct ManifoldConfig {
  /// Mixture components per keypoint (M).
  int components = 5;
  EmConfig em{};
  CalibrationOptions calibration{};
};

struct AugmentConfig {
  /// OOD resets used for collection.
  int n_inits = 100;
  std::uint64_t first_seed = 500000;
  /// Collection stops at η_rec ≥ stop_factor · ε_rec.
  double stop_factor = 1.0;
};

/// Every tunable of the pipeline. Defaults < config file < command-line flags.
struct RunConfig {
  SimConfig sim{};
  DemoConfig demos{};
  ManifoldConfig manifold{};
  PlanConfig plan{};
  KnnConfig base{};
  InverseConfig inverse{};
  JointConfig joint{};
  AugmentConfig augment{};
  /// Worker threads for per-seed work.
  int jobs = 1;
};

/// Full configuration as JSON (NaN overrides become null).
Json to_json(const RunConfig& c);
/// Parses a complete or partial document on top of the defaults. Unknown
/// keys and type mismatches raise ErrorKind::kInvalidConfig.
RunConfig run_config_from_json(const Json& j);
/// Merges `patch` into `base`, validating keys and types against `base`.
void merge_config(Json& base, const Json& patch, const std::string& where = "");
/// Sets a dotted path ("plan.alpha") from a command-line string.
void set_config_value(Json& doc, const std::string& dotted, const std::string& value);

void validate(const RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ocr
