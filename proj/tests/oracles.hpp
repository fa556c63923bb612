#pragma once

// Shared oracles for the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "ocr/manifold.hpp"
#include "ocr/planner.hpp"
#include "ocr/rng.hpp"

namespace ocr::oracle {

inline Sym2 random_spd(SplitMix64& rng, double lo, double hi) {
  const double a = uniform(rng, lo, hi), b = uniform(rng, lo, hi), t = uniform(rng, 0.0, std::numbers::pi);
  const double c = std::cos(t), s = std::sin(t);
  return {a * c * c + b * s * s, (a - b) * c * s, a * s * s + b * c * c};
}

inline GmmParams random_gmm(SplitMix64& rng, int max_components = 4) {
  GmmParams g;
  const int m = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_components));
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    GaussianComponent c;
    c.weight = uniform(rng, 0.1, 1.0);
    total += c.weight;
    c.mean = {uniform(rng, 0, 100), uniform(rng, 0, 100)};
    c.cov = random_spd(rng, 4.0, 100.0);
    g.components.push_back(c);
  }
  for (auto& c : g.components) c.weight /= total;
  return g;
}

struct GradCheck {
  int pairs = 0;
  double max_rel_err = 0.0;
};

/// Central differences of the linear density against the analytic gradient,
/// norm-wise relative error, over `n` (GMM, point) pairs with density > 1e-300.
inline GradCheck gradient_check(std::uint64_t seed, int n, double h = 1e-5) {
  SplitMix64 rng(seed);
  GradCheck out;
  while (out.pairs < n) {
    const GmmParams g = random_gmm(rng);
    const GaussianComponent& c = g.components[rng() % g.size()];
    const double spread = uniform(rng, 0.5, 3.0);
    const Point2 x{c.mean.x + spread * std::sqrt(c.cov.xx) * normal01(rng),
                   c.mean.y + spread * std::sqrt(c.cov.yy) * normal01(rng)};
    if (!(density(g, x) > 1e-300)) continue;
    const Vec2 fd{(density(g, {x.x + h, x.y}) - density(g, {x.x - h, x.y})) / (2 * h),
                  (density(g, {x.x, x.y + h}) - density(g, {x.x, x.y - h})) / (2 * h)};
    const Vec2 an = grad(g, x);
    const double denom = norm(fd);
    if (!(denom > 0.0)) continue;
    out.max_rel_err = std::max(out.max_rel_err, norm(an - fd) / denom);
    ++out.pairs;
  }
  return out;
}

/// Random clustered 2-D dataset.
inline std::vector<Point2> random_dataset(SplitMix64& rng, int n) {
  const int clusters = 1 + static_cast<int>(rng() % 4);
  std::vector<Point2> centres;
  for (int i = 0; i < clusters; ++i) centres.push_back({uniform(rng, 0, 500), uniform(rng, 0, 500)});
  std::vector<Point2> pts;
  for (int i = 0; i < n; ++i) {
    const Point2 c = centres[rng() % centres.size()];
    const double s = uniform(rng, 3, 40);
    pts.push_back({c.x + s * normal01(rng), c.y + s * normal01(rng)});
  }
  return pts;
}

/// Largest per-iteration log-likelihood decrease over `n` random datasets
/// (0 when every trace is non-decreasing).
inline double em_worst_decrease(std::uint64_t seed, int n) {
  SplitMix64 rng(seed);
  double worst = 0.0;
  for (int d = 0; d < n; ++d) {
    const auto pts = random_dataset(rng, 300);
    EmConfig cfg;
    cfg.seed = rng();
    cfg.n_init = 2;
    const EmResult r = fit_em_detailed(pts, 1 + static_cast<int>(rng() % 5), cfg);
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
      worst = std::max(worst, r.log_likelihood[i - 1] - r.log_likelihood[i]);
  }
  return worst;
}

struct TwoClusters {
  std::vector<Point2> points;
  Point2 mean_a, mean_b;
};

/// σ = 10 clusters at (100, 100) and (400, 400), 500 points each.
inline TwoClusters two_clusters(std::uint64_t seed) {
  SplitMix64 rng(seed);
  TwoClusters out;
  for (int i = 0; i < 500; ++i) {
    const Point2 a{100 + 10 * normal01(rng), 100 + 10 * normal01(rng)};
    const Point2 b{400 + 10 * normal01(rng), 400 + 10 * normal01(rng)};
    out.points.push_back(a);
    out.points.push_back(b);
    out.mean_a += a / 500.0;
    out.mean_b += b / 500.0;
  }
  return out;
}

/// Largest distance between each recovered mean and its cluster's sample mean.
inline double two_cluster_error(std::uint64_t seed) {
  const TwoClusters tc = two_clusters(seed);
  EmConfig cfg;
  cfg.seed = seed;
  const GmmParams g = fit_em(tc.points, 2, cfg);
  double err = 0.0;
  for (Point2 target : {tc.mean_a, tc.mean_b}) {
    double best = 1e300;
    for (const auto& c : g.components) best = std::min(best, norm(c.mean - target));
    err = std::max(err, best);
  }
  return err;
}

struct Ascent {
  bool reached = false;
  int cycles = 0;
  /// Largest per-cycle drop of η_rec (0 when non-decreasing).
  double worst_drop = 0.0;
};

/// Teleports the keypoints to frame 1 of a fresh undelayed plan every cycle
/// until η_rec ≥ ε_rec or `max_cycles`.
inline Ascent kinematic_ascent(const ManifoldModel& m, KeypointSet kps, const PlanConfig& plan, int max_cycles) {
  Ascent a;
  RecoveryTuple t = recovery_tuple(m, kps);
  while (t.eta_rec < m.eps_rec && a.cycles < max_cycles) {
    kps = plan_recovery(kps, t.delta_rec, plan.d_max, plan).frames.front();
    const RecoveryTuple next = recovery_tuple(m, kps);
    a.worst_drop = std::max(a.worst_drop, t.eta_rec - next.eta_rec);
    t = next;
    ++a.cycles;
  }
  a.reached = t.eta_rec >= m.eps_rec;
  return a;
}

}  // namespace ocr::oracle
