#include "ocr/manifold.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numbers>

#include "ocr/error.hpp"
#include "ocr/rng.hpp"

namespace ocr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2π)

struct ComponentCache {
  double log_weight_norm;  // log λ - log 2π - 0.5 log|Σ|
  Sym2 precision;
  Vec2 mean;
};

std::vector<ComponentCache> make_cache(const GmmParams& g) {
  std::vector<ComponentCache> cache;
  cache.reserve(g.size());
  for (const auto& c : g.components) {
    cache.push_back({std::log(c.weight) - kLog2Pi - 0.5 * std::log(c.cov.det()), c.cov.inverse(), c.mean});
  }
  return cache;
}

double component_log(const ComponentCache& c, Point2 x) {
  const Vec2 d = x - c.mean;
  return c.log_weight_norm - 0.5 * dot(d, c.precision * d);
}

double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double sq_dist(Point2 a, Point2 b) { return dot(a - b, a - b); }

std::vector<Point2> kmeans_pp(std::span<const Point2> pts, int k, SplitMix64& rng, int iters) {
  const std::size_t n = pts.size();
  std::vector<Point2> centers;
  centers.push_back(pts[rng() % n]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(pts[i], centers[0]);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = rng() % n;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts[i], centers.back()));
  }
  // Lloyd refinement.
  std::vector<int> label(n, 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(pts[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(pts[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (best != label[i] || it == 0) changed = changed || best != label[i];
      label[i] = best;
    }
    std::vector<Point2> sum(k);
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[label[i]] += pts[i];
      ++count[label[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) centers[c] = sum[c] / count[c];
    }
    if (!changed && it > 0) break;
  }
  return centers;
}

// Weighted M-step; resp is n x k row-major.
GmmParams m_step(std::span<const Point2> pts, const std::vector<double>& resp, int k, double reg) {
  const std::size_t n = pts.size();
  GmmParams g;
  g.components.resize(k);
  std::vector<double> nk(k, 10.0 * DBL_EPSILON);
  std::vector<Point2> sx(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      const double r = resp[i * k + c];
      nk[c] += r;
      sx[c] += r * pts[i];
    }
  }
  double total = 0.0;
  for (int c = 0; c < k; ++c) total += nk[c];
  for (int c = 0; c < k; ++c) {
    g.components[c].weight = nk[c] / total;
    g.components[c].mean = sx[c] / nk[c];
  }
  std::vector<Sym2> s(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      const double r = resp[i * k + c];
      const Vec2 d = pts[i] - g.components[c].mean;
      s[c].xx += r * d.x * d.x;
      s[c].xy += r * d.x * d.y;
      s[c].yy += r * d.y * d.y;
    }
  }
  for (int c = 0; c < k; ++c) {
    g.components[c].cov = {s[c].xx / nk[c] + reg, s[c].xy / nk[c], s[c].yy / nk[c] + reg};
  }
  return g;
}

// E-step; returns mean log-likelihood and fills responsibilities.
double e_step(const GmmParams& g, std::span<const Point2> pts, std::vector<double>& resp) {
  const auto cache = make_cache(g);
  const int k = static_cast<int>(g.size());
  std::vector<double> lp(k);
  double ll = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int c = 0; c < k; ++c) lp[c] = component_log(cache[c], pts[i]);
    const double lse = log_sum_exp(lp);
    ll += lse;
    for (int c = 0; c < k; ++c) resp[i * k + c] = std::exp(lp[c] - lse);
  }
  return ll / static_cast<double>(pts.size());
}

}  // namespace

double Sym2::min_eigenvalue() const {
  const double tr = xx + yy;
  const double disc = std::sqrt(std::max(0.0, 0.25 * (xx - yy) * (xx - yy) + xy * xy));
  return 0.5 * tr - disc;
}

bool Sym2::cholesky_ok() const {
  if (!(xx > 0.0)) return false;
  const double l11 = std::sqrt(xx);
  const double l21 = xy / l11;
  return yy - l21 * l21 > 0.0;
}

EmResult fit_em_detailed(std::span<const Point2> points, int components, const EmConfig& cfg) {
  if (components < 1) throw Error(ErrorKind::kInvalidConfig, "fit_em: number of components must be >= 1");
  if (points.size() < static_cast<std::size_t>(components))
    throw Error("fit_em: need at least " + std::to_string(components) + " points, got " +
                std::to_string(points.size()));
  for (const Point2& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("fit_em: non-finite input point");
  }
  const std::size_t n = points.size();
  Point2 mean;
  for (const Point2& p : points) mean += p;
  mean = mean / static_cast<double>(n);
  double var = 0.0;
  for (const Point2& p : points) var += sq_dist(p, mean);
  var /= 2.0 * static_cast<double>(n);
  const double reg = cfg.reg_scale * (var > 0.0 ? var : 1.0);

  SplitMix64 rng(cfg.seed);
  EmResult best;
  double best_ll = -std::numeric_limits<double>::infinity();
  std::vector<double> resp(n * components);
  for (int init = 0; init < std::max(1, cfg.n_init); ++init) {
    const auto centers = kmeans_pp(points, components, rng, cfg.kmeans_iter);
    std::fill(resp.begin(), resp.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      int lbl = 0;
      for (int c = 1; c < components; ++c) {
        if (sq_dist(points[i], centers[c]) < sq_dist(points[i], centers[lbl])) lbl = c;
      }
      resp[i * components + lbl] = 1.0;
    }
    GmmParams g = m_step(points, resp, components, reg);
    std::vector<double> history;
    int it = 0;
    for (; it < cfg.max_iter; ++it) {
      const double ll = e_step(g, points, resp);
      history.push_back(ll);
      if (history.size() > 1 && ll - history[history.size() - 2] < cfg.tol) break;
      g = m_step(points, resp, components, reg);
    }
    if (history.size() == static_cast<std::size_t>(cfg.max_iter)) {
      // The last M-step has not been scored yet.
      history.push_back(e_step(g, points, resp));
    }
    if (history.back() > best_ll) {
      best_ll = history.back();
      best.params = std::move(g);
      best.log_likelihood = std::move(history);
      best.iterations = it;
    }
  }
  best.reg_floor = reg;
  return best;
}

GmmParams fit_em(std::span<const Point2> points, int components, const EmConfig& cfg) {
  return fit_em_detailed(points, components, cfg).params;
}

int select_components_bic(std::span<const Point2> points, int m_min, int m_max, const EmConfig& cfg) {
  int best_m = m_min;
  double best_bic = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(points.size());
  for (int m = m_min; m <= m_max; ++m) {
    if (points.size() < static_cast<std::size_t>(m)) break;
    const auto res = fit_em_detailed(points, m, cfg);
    const double bic = -2.0 * n * res.log_likelihood.back() + (6.0 * m - 1.0) * std::log(n);
    if (bic < best_bic) {
      best_bic = bic;
      best_m = m;
    }
  }
  return best_m;
}

double log_density(const GmmParams& g, Point2 x) {
  const auto cache = make_cache(g);
  std::vector<double> lp(cache.size());
  for (std::size_t c = 0; c < cache.size(); ++c) lp[c] = component_log(cache[c], x);
  return log_sum_exp(lp);
}

double density(const GmmParams& g, Point2 x) { return std::exp(log_density(g, x)); }

double mean_log_likelihood(const GmmParams& g, std::span<const Point2> points) {
  double ll = 0.0;
  for (const Point2& p : points) ll += log_density(g, p);
  return ll / static_cast<double>(points.size());
}

Vec2 grad(const GmmParams& g, Point2 x) {
  const auto cache = make_cache(g);
  Vec2 out;
  for (const auto& c : cache) out += std::exp(component_log(c, x)) * (c.precision * (c.mean - x));
  return out;
}

Vec2 grad_log(const GmmParams& g, Point2 x) {
  const auto cache = make_cache(g);
  std::vector<double> lp(cache.size());
  for (std::size_t c = 0; c < cache.size(); ++c) lp[c] = component_log(cache[c], x);
  const double lse = log_sum_exp(lp);
  Vec2 out;
  for (std::size_t c = 0; c < cache.size(); ++c) {
    out += std::exp(lp[c] - lse) * (cache[c].precision * (cache[c].mean - x));
  }
  return out;
}

void validate(const ManifoldModel& m) {
  if (m.per_keypoint.empty()) throw Error(ErrorKind::kInvalidConfig, "manifold has no keypoint mixtures");
  if (!(m.q_eta > 0.0)) throw Error(ErrorKind::kInvalidConfig, "q_eta must be > 0");
  if (!(m.eps_rec >= 0.0) || !std::isfinite(m.eps_rec)) throw Error(ErrorKind::kInvalidConfig, "eps_rec must be finite and >= 0");
}

double q_shape(const ManifoldModel& m, double grad_norm) { return std::exp((m.q_phi - grad_norm) / m.q_eta); }

Vec2 modified_grad(const ManifoldModel& m, std::size_t k, Point2 x) {
  const GmmParams& g = m.per_keypoint.at(k);
  const Vec2 dir = grad_log(g, x);
  const double len = norm(dir);
  if (!(len >= 1e-12)) return {};
  return (q_shape(m, norm(grad(g, x))) / len) * dir;
}

RecoveryTuple recovery_tuple(const ManifoldModel& m, const KeypointSet& kps) {
  if (kps.size() != m.size()) throw Error("recovery_tuple: keypoint count does not match the manifold");
  RecoveryTuple t;
  const double n = static_cast<double>(kps.size());
  for (std::size_t k = 0; k < kps.size(); ++k) {
    t.delta_rec += modified_grad(m, k, kps.points[k]) / n;
    t.eta_rec += density(m.per_keypoint[k], kps.points[k]) / n;
  }
  return t;
}

ManifoldModel fit_manifold(std::span<const KeypointSet> frames, int components, const EmConfig& cfg) {
  if (frames.empty()) throw Error("fit_manifold: no keypoint frames");
  const std::size_t n_kp = frames.front().size();
  ManifoldModel m;
  m.components = components;
  m.seed = cfg.seed;
  std::vector<Point2> pts(frames.size());
  for (std::size_t k = 0; k < n_kp; ++k) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].size() != n_kp) throw Error("fit_manifold: inconsistent keypoint count");
      pts[i] = frames[i].points[k];
    }
    EmConfig kc = cfg;
    kc.seed = cfg.seed + k;
    auto res = fit_em_detailed(pts, components, kc);
    m.per_keypoint.push_back(std::move(res.params));
    m.log_likelihood.push_back(res.log_likelihood.back());
  }
  return m;
}

ManifoldModel calibrate(const ManifoldModel& m, std::span<const std::vector<KeypointSet>> episodes,
                        const CalibrationOptions& opts) {
  std::vector<double> grad_norms;
  std::vector<double> etas;
  for (const auto& ep : episodes) {
    for (const KeypointSet& kps : ep) {
      if (kps.size() != m.size()) throw Error("calibrate: keypoint count does not match the manifold");
      double eta = 0.0;
      for (std::size_t k = 0; k < kps.size(); ++k) {
        grad_norms.push_back(norm(grad(m.per_keypoint[k], kps.points[k])));
        eta += density(m.per_keypoint[k], kps.points[k]) / static_cast<double>(kps.size());
      }
      etas.push_back(eta);
    }
  }
  if (etas.empty()) throw Error("calibrate: empty training set");

  ManifoldModel out = m;
  std::sort(grad_norms.begin(), grad_norms.end());
  const std::size_t g = grad_norms.size();
  out.q_phi = g % 2 == 1 ? grad_norms[g / 2] : 0.5 * (grad_norms[g / 2 - 1] + grad_norms[g / 2]);

  std::sort(etas.begin(), etas.end());
  const auto idx = static_cast<std::size_t>(std::floor(opts.eps_percentile / 100.0 * static_cast<double>(etas.size() - 1)));
  out.eps_rec = etas[std::min(idx, etas.size() - 1)];
  if (!(out.eps_rec > 0.0)) {
    const auto pos = std::upper_bound(etas.begin(), etas.end(), 0.0);
    out.eps_rec = pos != etas.end() ? *pos : std::numeric_limits<double>::min();
  }

  if (!std::isnan(opts.phi_override)) out.q_phi = opts.phi_override;
  // η defaults to φ: q = e far from the data, 1 at the median gradient norm.
  if (out.q_phi > 0.0) out.q_eta = out.q_phi;
  if (!std::isnan(opts.eta_override)) out.q_eta = opts.eta_override;
  if (!std::isnan(opts.eps_override)) out.eps_rec = opts.eps_override;
  validate(out);
  return out;
}

Json to_json(const ManifoldModel& m) {
  Json kps = Json::array();
  for (const GmmParams& g : m.per_keypoint) {
    Json comps = Json::array();
    for (const GaussianComponent& c : g.components) {
      comps.push_back({{"w", c.weight}, {"mean", to_json(c.mean)}, {"cov", Json::array({c.cov.xx, c.cov.xy, c.cov.yy})}});
    }
    kps.push_back(comps);
  }
  return {{"format", "ocr-manifold"},
          {"version", kManifoldFormatVersion},
          {"components", m.components},
          {"seed", m.seed},
          {"q_phi", m.q_phi},
          {"q_eta", m.q_eta},
          {"eps_rec", m.eps_rec},
          {"log_likelihood", m.log_likelihood},
          {"keypoints", kps}};
}

ManifoldModel manifold_from_json(const Json& j) {
  if (j.value("format", "") != "ocr-manifold") throw Error("not a manifold file (bad header)");
  if (j.value("version", -1) != kManifoldFormatVersion) throw Error("manifold schema version mismatch");
  ManifoldModel m;
  try {
    m.components = j.at("components").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.q_phi = j.at("q_phi").get<double>();
    m.q_eta = j.at("q_eta").get<double>();
    m.eps_rec = j.at("eps_rec").get<double>();
    m.log_likelihood = j.at("log_likelihood").get<std::vector<double>>();
    for (const Json& comps : j.at("keypoints")) {
      GmmParams g;
      for (const Json& c : comps) {
        const auto cov = c.at("cov").get<std::vector<double>>();
        if (cov.size() != 3) throw Error("manifold: covariance must have 3 entries");
        g.components.push_back({c.at("w").get<double>(), point_from_json(c.at("mean")), {cov[0], cov[1], cov[2]}});
      }
      m.per_keypoint.push_back(std::move(g));
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed manifold: ") + e.what());
  }
  validate(m);
  return m;
}

void save_manifold(const std::filesystem::path& path, const ManifoldModel& m, const Json& meta) {
  Json j = to_json(m);
  if (!meta.is_null()) j["meta"] = meta;
  write_json_file(path, j);
}

ManifoldModel load_manifold(const std::filesystem::path& path) {
  try {
    return manifold_from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kMissingFile) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace ocr
