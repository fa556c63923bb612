#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ocr/dataset.hpp"
#include "ocr/manifold.hpp"
#include "ocr/planner.hpp"
#include "ocr/policies.hpp"
#include "ocr/sim.hpp"

namespace ocr {

enum class Branch { kBase, kRecover };

const char* to_string(Branch b);

struct JointConfig {
  /// Actions executed from each returned window before re-observing (E).
  int exec_per_cycle = 8;
  /// Two-threshold switching: once recovering, return to the base policy only
  /// when η_rec ≥ ε_rec·(1 + hysteresis). 0 disables it.
  double hysteresis = 0.0;
};

struct JointDecision {
  std::vector<Action> actions;
  Branch branch = Branch::kBase;
  double eta_rec = 0.0;
  Vec2 delta_rec;
};

/// Density-activated switch between the base policy and planned recovery.
class JointPolicy {
 public:
  JointPolicy(std::shared_ptr<const BasePolicy> base, std::shared_ptr<const InversePolicy> inv, ManifoldModel manifold,
              PlanConfig plan, JointConfig cfg = {});

  /// One decision. `prev` only matters when hysteresis is enabled.
  JointDecision decide(const Observation& obs, Point2 proprio, Branch prev = Branch::kBase) const;

  /// Branch selected for a given η_rec.
  Branch select(double eta_rec, Branch prev = Branch::kBase) const;

  const BasePolicy& base() const { return *base_; }
  const InversePolicy& inverse() const { return *inv_; }
  const ManifoldModel& manifold() const { return manifold_; }
  const PlanConfig& plan_config() const { return plan_; }
  const JointConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<const BasePolicy> base_;
  std::shared_ptr<const InversePolicy> inv_;
  ManifoldModel manifold_;
  PlanConfig plan_;
  JointConfig cfg_;
};

enum class RolloutStatus { kSuccess, kTimeout };

const char* to_string(RolloutStatus s);

struct TraceStep {
  /// State before the action was applied.
  SimState state;
  double eta_rec = 0.0;
  Branch branch = Branch::kBase;
  Action action;
  /// Index of the decision cycle that produced the action.
  int cycle = 0;
};

struct RolloutTrace {
  std::uint64_t seed = 0;
  Region region = Region::kAny;
  std::vector<TraceStep> steps;
  SimState final_state;
  RolloutStatus status = RolloutStatus::kTimeout;

  bool success() const { return status == RolloutStatus::kSuccess; }
};

/// Closed loop: reset, then observe, decide, execute the first E actions,
/// until coverage success or `max_steps` (≤ 0 selects cfg.max_steps).
RolloutTrace rollout(const SimConfig& cfg, const JointPolicy& jp, std::uint64_t seed, Region region, int max_steps = 0);

/// Same loop driven by the base policy alone (η_rec is recorded as NaN).
RolloutTrace rollout_base(const SimConfig& cfg, const BasePolicy& base, int exec_per_cycle, std::uint64_t seed,
                          Region region, int max_steps = 0);

/// Trace files follow the dataset line convention: a header line, then one
/// record per step.
void save_trace(const std::filesystem::path& path, const RolloutTrace& t, const Json& meta = nullptr);
RolloutTrace load_trace(const std::filesystem::path& path);

}  // namespace ocr
