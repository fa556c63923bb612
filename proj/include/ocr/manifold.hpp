#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ocr/geom.hpp"
#include "ocr/json_io.hpp"

namespace ocr {

/// Symmetric 2x2 matrix.
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  double det() const { return xx * yy - xy * xy; }
  Sym2 inverse() const {
    const double d = det();
    return {yy / d, -xy / d, xx / d};
  }
  Vec2 operator*(Vec2 v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
  double min_eigenvalue() const;
  /// Cholesky succeeds iff the matrix is symmetric positive definite.
  bool cholesky_ok() const;
};

struct GaussianComponent {
  double weight = 0.0;
  Vec2 mean;
  Sym2 cov;
};

/// Two-dimensional Gaussian mixture for one keypoint.
struct GmmParams {
  std::vector<GaussianComponent> components;

  std::size_t size() const { return components.size(); }
};

struct EmConfig {
  int max_iter = 300;
  double tol = 1e-7;
  /// reg_floor = reg_scale * (mean per-axis data variance), added to every covariance.
  double reg_scale = 1e-6;
  int n_init = 8;
  int kmeans_iter = 20;
  std::uint64_t seed = 0;
};

struct EmResult {
  GmmParams params;
  /// Mean per-point log-likelihood after each EM iteration (best restart).
  std::vector<double> log_likelihood;
  double reg_floor = 0.0;
  int iterations = 0;
};

/// Best-of-n_init EM fit from k-means++ starts. Throws on |points| < M or non-finite input.
EmResult fit_em_detailed(std::span<const Point2> points, int components, const EmConfig& cfg);
GmmParams fit_em(std::span<const Point2> points, int components, const EmConfig& cfg);

/// Picks M in [m_min, m_max] minimising BIC.
int select_components_bic(std::span<const Point2> points, int m_min, int m_max, const EmConfig& cfg);

double log_density(const GmmParams& g, Point2 x);
double density(const GmmParams& g, Point2 x);
/// Mean per-point log-likelihood.
double mean_log_likelihood(const GmmParams& g, std::span<const Point2> points);
/// Analytic ∇p(x), linear scale.
Vec2 grad(const GmmParams& g, Point2 x);
/// ∇log p(x), computed from log-space responsibilities.
Vec2 grad_log(const GmmParams& g, Point2 x);

/// Per-keypoint mixtures plus the recovery shaping and switching parameters.
struct ManifoldModel {
  std::vector<GmmParams> per_keypoint;
  /// Offset φ of the negative exponential q(x) = exp((φ - x) / η).
  double q_phi = 0.0;
  /// Scale η of q; must be > 0.
  double q_eta = 1.0;
  /// Density threshold separating OOD from ID.
  double eps_rec = 1e-12;
  // Fit metadata.
  int components = 0;
  std::uint64_t seed = 0;
  std::vector<double> log_likelihood;

  std::size_t size() const { return per_keypoint.size(); }
};

void validate(const ManifoldModel& m);

/// Exponential magnitude shaping.
double q_shape(const ManifoldModel& m, double grad_norm);

Vec2 modified_grad(const ManifoldModel& m, std::size_t k, Point2 x);

struct RecoveryTuple {
  Vec2 delta_rec;
  double eta_rec = 0.0;
};

RecoveryTuple recovery_tuple(const ManifoldModel& m, const KeypointSet& kps);

/// Fits one mixture per keypoint index over every frame.
ManifoldModel fit_manifold(std::span<const KeypointSet> frames, int components, const EmConfig& cfg);

struct CalibrationOptions {
  /// Percentile of training-frame η_rec used for ε_rec.
  double eps_percentile = 5.0;
  /// Overrides; NaN leaves the calibrated default.
  double phi_override = std::numeric_limits<double>::quiet_NaN();
  double eta_override = std::numeric_limits<double>::quiet_NaN();
  double eps_override = std::numeric_limits<double>::quiet_NaN();
};

/// φ = median training gradient norm, ε_rec = percentile of training η_rec.
/// `episodes` holds the keypoint frames of each training episode.
ManifoldModel calibrate(const ManifoldModel& m, std::span<const std::vector<KeypointSet>> episodes,
                        const CalibrationOptions& opts = {});

// Manifold files: one JSON document; `meta` is stored verbatim.
inline constexpr int kManifoldFormatVersion = 1;
Json to_json(const ManifoldModel& m);
ManifoldModel manifold_from_json(const Json& j);
void save_manifold(const std::filesystem::path& path, const ManifoldModel& m, const Json& meta = nullptr);
ManifoldModel load_manifold(const std::filesystem::path& path);

}  // namespace ocr
