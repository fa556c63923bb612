#include "ocr/config.hpp"

#include <cmath>
#include <limits>

#include "ocr/error.hpp"

namespace ocr {

namespace {

[[noreturn]] void bad(const std::string& m) { throw Error(ErrorKind::kInvalidConfig, m); }

Json box_json(const Box2& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }
Box2 box_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) bad("box must be [x_min, y_min, x_max, y_max]");
  return {v[0], v[1], v[2], v[3]};
}

Json opt(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }
double opt_from(const Json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

// Keys whose default is null but accept a number.
bool nullable(const std::string& where) {
  return where == "manifold.calibration.phi" || where == "manifold.calibration.eta" ||
         where == "manifold.calibration.eps";
}

}  // namespace

Json to_json(const RunConfig& c) {
  const SimConfig& s = c.sim;
  Json tmpl = Json::array();
  for (Point2 p : s.keypoint_template) tmpl.push_back(to_json(p));
  const EmConfig& em = c.manifold.em;
  const CalibrationOptions& cal = c.manifold.calibration;
  return {
      {"sim",
       {{"workspace", box_json(s.workspace)},
        {"ee_radius", s.ee_radius},
        {"t_block",
         {{"bar_width", s.t_block.bar_width},
          {"bar_height", s.t_block.bar_height},
          {"stem_width", s.t_block.stem_width},
          {"stem_height", s.t_block.stem_height}}},
        {"target_pose", to_json(s.target_pose)},
        {"dt", s.dt},
        {"max_push_speed", s.max_push_speed},
        {"contact_friction", s.contact_friction},
        {"limit_surface_radius", s.limit_surface_radius},
        {"substep_length", s.substep_length},
        {"success_coverage", s.success_coverage},
        {"max_steps", s.max_steps},
        {"id_region",
         {{"axis", s.id_region.axis},
          {"threshold", s.id_region.threshold},
          {"id_below", s.id_region.id_below},
          {"ood_reset_margin", s.id_region.ood_reset_margin}}},
        {"block_spawn", box_json(s.block_spawn)},
        {"ee_spawn", box_json(s.ee_spawn)},
        {"keypoint_template", tmpl},
        {"seed", s.seed}}},
      {"demos", {{"n", c.demos.n}, {"first_seed", c.demos.first_seed}, {"max_steps", c.demos.max_steps}}},
      {"manifold",
       {{"components", c.manifold.components},
        {"em",
         {{"max_iter", em.max_iter},
          {"tol", em.tol},
          {"reg_scale", em.reg_scale},
          {"n_init", em.n_init},
          {"kmeans_iter", em.kmeans_iter},
          {"seed", em.seed}}},
        {"calibration",
         {{"eps_percentile", cal.eps_percentile},
          {"phi", opt(cal.phi_override)},
          {"eta", opt(cal.eta_override)},
          {"eps", opt(cal.eps_override)}}}}},
      {"plan", {{"alpha", c.plan.alpha}, {"horizon", c.plan.horizon}, {"d_min", c.plan.d_min}, {"d_max", c.plan.d_max}}},
      {"base",
       {{"k", c.base.k},
        {"horizon", c.base.horizon},
        {"proprio_weight", c.base.proprio_weight},
        {"object_frame_actions", c.base.object_frame_actions}}},
      {"inverse", {{"k", c.inverse.k}, {"proprio_weight", c.inverse.proprio_weight}, {"zero_out", c.inverse.zero_out}}},
      {"joint", {{"exec_per_cycle", c.joint.exec_per_cycle}, {"hysteresis", c.joint.hysteresis}}},
      {"augment",
       {{"n_inits", c.augment.n_inits}, {"first_seed", c.augment.first_seed}, {"stop_factor", c.augment.stop_factor}}},
      {"jobs", c.jobs}};
}

void merge_config(Json& base, const Json& patch, const std::string& where) {
  if (!patch.is_object()) bad((where.empty() ? std::string("config") : where) + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) bad("unknown config key '" + key + "'");
    Json& dst = base[it.key()];
    const Json& src = it.value();
    if (dst.is_object()) {
      merge_config(dst, src, key);
      continue;
    }
    const bool ok = (dst.is_number() && src.is_number()) || (dst.is_boolean() && src.is_boolean()) ||
                    (dst.is_array() && src.is_array()) || (dst.is_string() && src.is_string()) ||
                    (nullable(key) && (src.is_null() || src.is_number()));
    if (!ok) bad("config key '" + key + "' has the wrong type");
    if (dst.is_number_integer() && src.is_number_float()) bad("config key '" + key + "' must be an integer");
    if (dst.is_number_unsigned() && src.is_number_integer() && src.get<std::int64_t>() < 0)
      bad("config key '" + key + "' must be non-negative");
    // "--set plan.alpha=5" must not turn a float key into an integer one.
    if ((dst.is_number_float() || nullable(key)) && src.is_number_integer()) dst = src.get<double>();
    else dst = src;
  }
}

void set_config_value(Json& doc, const std::string& dotted, const std::string& value) {
  Json parsed;
  try {
    parsed = Json::parse(value);
  } catch (const Json::exception&) {
    parsed = value;  // bare strings
  }
  Json patch = parsed;
  std::string path = dotted;
  for (;;) {
    const auto dot = path.rfind('.');
    const std::string leaf = dot == std::string::npos ? path : path.substr(dot + 1);
    patch = Json{{leaf, patch}};
    if (dot == std::string::npos) break;
    path = path.substr(0, dot);
  }
  merge_config(doc, patch);
}

RunConfig run_config_from_json(const Json& j) {
  Json doc = to_json(RunConfig{});
  merge_config(doc, j);
  RunConfig c;
  try {
    const Json& s = doc.at("sim");
    c.sim.workspace = box_from(s.at("workspace"));
    c.sim.ee_radius = s.at("ee_radius").get<double>();
    const Json& t = s.at("t_block");
    c.sim.t_block = {t.at("bar_width").get<double>(), t.at("bar_height").get<double>(),
                     t.at("stem_width").get<double>(), t.at("stem_height").get<double>()};
    c.sim.target_pose = pose_from_json(s.at("target_pose"));
    c.sim.dt = s.at("dt").get<double>();
    c.sim.max_push_speed = s.at("max_push_speed").get<double>();
    c.sim.contact_friction = s.at("contact_friction").get<double>();
    c.sim.limit_surface_radius = s.at("limit_surface_radius").get<double>();
    c.sim.substep_length = s.at("substep_length").get<double>();
    c.sim.success_coverage = s.at("success_coverage").get<double>();
    c.sim.max_steps = s.at("max_steps").get<int>();
    const Json& r = s.at("id_region");
    c.sim.id_region = {r.at("axis").get<int>(), r.at("threshold").get<double>(), r.at("id_below").get<bool>(),
                       r.at("ood_reset_margin").get<double>()};
    c.sim.block_spawn = box_from(s.at("block_spawn"));
    c.sim.ee_spawn = box_from(s.at("ee_spawn"));
    for (const Json& p : s.at("keypoint_template")) c.sim.keypoint_template.push_back(point_from_json(p));
    c.sim.seed = s.at("seed").get<std::uint64_t>();

    c.demos.n = doc.at("demos").at("n").get<int>();
    c.demos.first_seed = doc.at("demos").at("first_seed").get<std::uint64_t>();
    c.demos.max_steps = doc.at("demos").at("max_steps").get<int>();

    const Json& m = doc.at("manifold");
    c.manifold.components = m.at("components").get<int>();
    const Json& em = m.at("em");
    c.manifold.em.max_iter = em.at("max_iter").get<int>();
    c.manifold.em.tol = em.at("tol").get<double>();
    c.manifold.em.reg_scale = em.at("reg_scale").get<double>();
    c.manifold.em.n_init = em.at("n_init").get<int>();
    c.manifold.em.kmeans_iter = em.at("kmeans_iter").get<int>();
    c.manifold.em.seed = em.at("seed").get<std::uint64_t>();
    const Json& cal = m.at("calibration");
    c.manifold.calibration.eps_percentile = cal.at("eps_percentile").get<double>();
    c.manifold.calibration.phi_override = opt_from(cal.at("phi"));
    c.manifold.calibration.eta_override = opt_from(cal.at("eta"));
    c.manifold.calibration.eps_override = opt_from(cal.at("eps"));

    const Json& p = doc.at("plan");
    c.plan = {p.at("alpha").get<double>(), p.at("horizon").get<int>(), p.at("d_min").get<double>(),
              p.at("d_max").get<double>()};
    const Json& b = doc.at("base");
    c.base.k = b.at("k").get<int>();
    c.base.horizon = b.at("horizon").get<int>();
    c.base.proprio_weight = b.at("proprio_weight").get<double>();
    c.base.object_frame_actions = b.at("object_frame_actions").get<bool>();
    const Json& iv = doc.at("inverse");
    c.inverse.k = iv.at("k").get<int>();
    c.inverse.proprio_weight = iv.at("proprio_weight").get<double>();
    c.inverse.zero_out = iv.at("zero_out").get<bool>();
    c.joint.exec_per_cycle = doc.at("joint").at("exec_per_cycle").get<int>();
    c.joint.hysteresis = doc.at("joint").at("hysteresis").get<double>();
    const Json& a = doc.at("augment");
    c.augment.n_inits = a.at("n_inits").get<int>();
    c.augment.first_seed = a.at("first_seed").get<std::uint64_t>();
    c.augment.stop_factor = a.at("stop_factor").get<double>();
    c.jobs = doc.at("jobs").get<int>();
  } catch (const Json::exception& e) {
    bad(std::string("invalid config: ") + e.what());
  }
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  validate(c.sim);
  validate(c.plan);
  if (c.demos.n < 1) bad("demos.n must be >= 1");
  if (c.demos.max_steps < 0) bad("demos.max_steps must be >= 0");
  if (c.manifold.components < 1) bad("manifold.components must be >= 1");
  const EmConfig& em = c.manifold.em;
  if (em.max_iter < 1 || em.n_init < 1 || em.kmeans_iter < 0) bad("manifold.em iteration counts must be positive");
  if (!(em.tol >= 0.0) || !(em.reg_scale >= 0.0)) bad("manifold.em tol and reg_scale must be >= 0");
  const double pct = c.manifold.calibration.eps_percentile;
  if (!(pct >= 0.0 && pct <= 100.0)) bad("manifold.calibration.eps_percentile must be in [0, 100]");
  if (!std::isnan(c.manifold.calibration.eta_override) && !(c.manifold.calibration.eta_override > 0.0))
    bad("manifold.calibration.eta must be > 0");
  if (!std::isnan(c.manifold.calibration.eps_override) && !(c.manifold.calibration.eps_override >= 0.0))
    bad("manifold.calibration.eps must be >= 0");
  if (c.base.k < 1 || c.inverse.k < 1) bad("k must be >= 1");
  if (c.base.horizon < 1) bad("base.horizon must be >= 1");
  if (!(c.base.proprio_weight >= 0.0) || !(c.inverse.proprio_weight >= 0.0)) bad("proprio weights must be >= 0");
  if (c.joint.exec_per_cycle < 1 || c.joint.exec_per_cycle > c.plan.horizon ||
      c.joint.exec_per_cycle > c.base.horizon)
    bad("joint.exec_per_cycle must lie in [1, min(plan.horizon, base.horizon)]");
  if (!(c.joint.hysteresis >= 0.0)) bad("joint.hysteresis must be >= 0");
  if (c.augment.n_inits < 1) bad("augment.n_inits must be >= 1");
  if (!(c.augment.stop_factor >= 1.0)) bad("augment.stop_factor must be >= 1");
  if (c.jobs < 1) bad("jobs must be >= 1");
}

RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(read_json_file(path)); }

}  // namespace ocr
