#pragma once

// Small trained pipeline shared by the joint and harness tests.

#include <memory>

#include "ocr/harness.hpp"
#include "ocr/manifold.hpp"

namespace ocr::fixture {

struct Pipeline {
  SimConfig sim;
  DemoSet demos;
  ManifoldModel manifold;
  std::shared_ptr<const KnnBasePolicy> base;
  std::shared_ptr<const KnnInversePolicy> inverse;

  JointPolicy joint(JointConfig cfg = {}) const { return JointPolicy(base, inverse, manifold, PlanConfig{}, cfg); }
};

inline const Pipeline& pipeline() {
  static const Pipeline p = [] {
    Pipeline p;
    p.demos = collect_demos(p.sim, 30, 100000);
    std::vector<std::vector<KeypointSet>> eps;
    std::vector<KeypointSet> frames;
    for (const Episode& e : p.demos.episodes) {
      eps.push_back(keypoint_frames(e));
      frames.insert(frames.end(), eps.back().begin(), eps.back().end());
    }
    EmConfig em;
    em.n_init = 1;
    p.manifold = calibrate(fit_manifold(frames, 5, em), eps);
    p.base = std::make_shared<KnnBasePolicy>(train_base(p.demos.episodes, KnnConfig{}));
    p.inverse = std::make_shared<KnnInversePolicy>(
        train_inverse(build_recovery_dataset(p.demos.episodes, keypoint_template(p.sim)), PlanConfig{}.horizon, {}));
    return p;
  }();
  return p;
}

}  // namespace ocr::fixture
