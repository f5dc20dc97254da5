#pragma once

// Run configuration: one JSON file, every key optional, unknown keys
// rejected. Diagnostics carry the dotted path of the offending field.

#include <cbctus/cbctus.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cbctus::cli {

class ConfigError : public InvalidInput {
 public:
  ConfigError(const std::string& field, const std::string& what) : InvalidInput("cli", "load_config", field + ": " + what) {}
};

/// Reader over one JSON object that remembers which keys were consumed.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    out = v.get<double>();
  }
  void integer(const std::string& key, int& out, int min_value) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
    const auto x = v.get<long long>();
    if (x < min_value) throw ConfigError(field(key), "must be >= " + std::to_string(min_value));
    out = static_cast<int>(x);
  }
  void seed(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(field(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
    out = v.get<bool>();
  }
  void string(const std::string& key, std::string& out, const std::set<std::string>& allowed) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    out = v.get<std::string>();
    if (!allowed.empty() && !allowed.contains(out)) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
      throw ConfigError(field(key), "must be one of: " + opts);
    }
  }
  void vec3(const std::string& key, Vec3& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_array() || v.size() != 3) throw ConfigError(field(key), "expected an array of 3 numbers");
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ConfigError(field(key), "expected an array of 3 numbers");
      out[i] = v[i].get<double>();
    }
  }
  void positive(const std::string& key, double& out) {
    number(key, out);
    if (has(key) && !(out > 0.0)) throw ConfigError(field(key), "must be > 0");
  }
  void non_negative(const std::string& key, double& out) {
    number(key, out);
    if (has(key) && !(out >= 0.0)) throw ConfigError(field(key), "must be >= 0");
  }
  Section child(const std::string& key) { return Section(raw(key), field(key)); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

struct SweepConfig {
  double pivot_x = 0.0;
  double pivot_y = 0.0;
  double range_deg = 30.0;
  double step_deg = 1.0;
};

struct FusionConfig {
  double inject_offset_mm = 0.0;
  std::string registration = "exact";  // exact | hand_eye
  double track_gate_mm = 5.0;
  double centerline_step_mm = 1.0;
  bool write_volume = true;
};

struct CalibrationConfig {
  int poses = 30;
  double sigma_rot_deg = 0.0;
  double sigma_trans_mm = 0.0;
  std::string pairing = "consecutive";
  int monte_carlo_trials = 100;
  double monte_carlo_sigma_rot_deg = 0.1;
  double monte_carlo_sigma_trans_mm = 0.5;
  std::vector<std::size_t> pair_counts{5, 10, 20, 29};
  std::vector<RigidTransform> border_poses = default_border_poses();
  HandEyeRig rig = default_rig();
  TsaiLenzOptions solver;
  /// Camera -> CBCT registration used when fusion.registration = hand_eye.
  RigidTransform t_o_c{Rotation::about_z(-90.0) * Rotation::about_x(15.0), Vec3(100.0, -50.0, 1200.0)};
};

struct PlannerConfig {
  NeedleWindow window;  // needle angle follows probe.needle_angle_deg
  int grid_samples = 1000;
  double min_vessel_area_mm2 = 1.0;
};

struct NoiseLevel {
  double sigma_rot_deg = 0.0;
  double sigma_trans_mm = 0.0;
};

struct RepositionConfig {
  int positions = 5;
  double range_primary_mm = 30.0;
  double range_secondary_mm = 10.0;
  std::vector<NoiseLevel> tracking_noise{{0.05, 0.25}, {0.1, 0.5}, {0.2, 1.0}};
  int noise_seeds = 20;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "cbctus_out";
  PhantomScene scene = build_default_phantom();
  VolumeGeometry grid;
  ProbeModel probe;
  SweepConfig sweep;
  RenderOptions render;
  SegmentFrameOptions segmentation;
  RegionGrowParams region_grow;
  FusionConfig fusion;
  CalibrationConfig calibration;
  PlannerConfig planner;
  RepositionConfig reposition;
};

namespace detail {

inline Box read_box(Section s) {
  Box b;
  s.vec3("min", b.min);
  s.vec3("max", b.max);
  s.finish();
  return b;
}

inline void read_phantom(Section s, PhantomScene& scene) {
  if (s.has("tank")) scene.tank = read_box(s.child("tank"));
  if (s.has("tubes")) {
    const Json& arr = s.raw("tubes");
    if (!arr.is_array()) throw ConfigError(s.field("tubes"), "expected an array");
    scene.tubes.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section t(arr[i], s.field("tubes[" + std::to_string(i) + "]"));
      Tube tube;
      t.vec3("start", tube.start);
      t.vec3("end", tube.end);
      t.positive("inner_radius", tube.inner_radius);
      t.positive("wall_thickness", tube.wall_thickness);
      t.boolean("has_flow", tube.has_flow);
      t.finish();
      scene.tubes.push_back(tube);
    }
  }
  if (s.has("lesion")) {
    Section l = s.child("lesion");
    l.vec3("center", scene.lesion.center);
    l.positive("radius", scene.lesion.radius);
    l.finish();
  }
  if (s.has("ribs")) {
    const Json& arr = s.raw("ribs");
    if (!arr.is_array()) throw ConfigError(s.field("ribs"), "expected an array");
    scene.ribs.clear();
    for (std::size_t i = 0; i < arr.size(); ++i)
      scene.ribs.push_back(read_box(Section(arr[i], s.field("ribs[" + std::to_string(i) + "]"))));
  }
  if (s.has("intensities")) {
    Section t = s.child("intensities");
    IntensityTable& it = scene.intensities;
    t.number("background", it.background);
    t.number("water", it.water);
    t.number("lumen", it.lumen);
    t.number("wall", it.wall);
    t.number("lesion", it.lesion);
    t.number("rib", it.rib);
    t.finish();
  }
  s.finish();
}

inline std::vector<RigidTransform> read_transforms(Section& s, const std::string& key) {
  const Json& arr = s.raw(key);
  if (!arr.is_array()) throw ConfigError(s.field(key), "expected an array of transforms");
  std::vector<RigidTransform> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string f = s.field(key + "[" + std::to_string(i) + "]");
    try {
      out.push_back(transform_from_json(arr[i], f));
    } catch (const InvalidInput& e) {
      throw ConfigError(f, e.what());
    }
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const Json& j) {
  RunConfig c;
  Section root(j, "");
  root.seed("seed", c.seed);
  if (root.has("output_dir")) root.string("output_dir", c.output_dir, {});

  if (root.has("phantom")) detail::read_phantom(root.child("phantom"), c.scene);

  if (root.has("grid")) {
    Section g = root.child("grid");
    if (g.has("dims")) {
      const Json& d = g.raw("dims");
      if (!d.is_array() || d.size() != 3) throw ConfigError(g.field("dims"), "expected an array of 3 integers");
      for (int i = 0; i < 3; ++i) {
        if (!d[i].is_number_integer() || d[i].get<long long>() < 1)
          throw ConfigError(g.field("dims"), "entries must be integers >= 1");
        c.grid.dims[static_cast<std::size_t>(i)] = d[i].get<int>();
      }
    }
    g.vec3("spacing", c.grid.spacing);
    g.vec3("origin", c.grid.origin);
    g.finish();
    if ((c.grid.spacing.array() <= 0.0).any()) throw ConfigError("grid.spacing", "entries must be > 0");
  }

  if (root.has("probe")) {
    Section p = root.child("probe");
    p.integer("width", c.probe.width, 1);
    p.integer("height", c.probe.height, 1);
    p.positive("spacing_mm", c.probe.spacing_mm);
    p.positive("needle_angle_deg", c.probe.needle_angle_deg);
    p.positive("needle_crossing_depth_mm", c.probe.needle_crossing_depth_mm);
    p.finish();
    if (c.probe.needle_angle_deg >= 90.0) throw ConfigError("probe.needle_angle_deg", "must be < 90");
  }

  if (root.has("sweep")) {
    Section s = root.child("sweep");
    s.number("pivot_x", c.sweep.pivot_x);
    s.number("pivot_y", c.sweep.pivot_y);
    s.non_negative("range_deg", c.sweep.range_deg);
    s.positive("step_deg", c.sweep.step_deg);
    s.finish();
  }

  if (root.has("render")) {
    Section r = root.child("render");
    r.non_negative("speckle_sigma", c.render.speckle_sigma);
    r.non_negative("doppler_salt_fraction", c.render.doppler_salt_fraction);
    r.finish();
  }

  if (root.has("segmentation")) {
    Section s = root.child("segmentation");
    s.non_negative("min_area_mm2", c.segmentation.min_area_mm2);
    s.positive("max_area_factor", c.segmentation.max_area_factor);
    s.positive("tolerance_fraction", c.region_grow.tolerance_fraction);
    s.integer("neighborhood_radius", c.region_grow.neighborhood_radius, 0);
    s.finish();
  }

  if (root.has("fusion")) {
    Section f = root.child("fusion");
    f.non_negative("inject_offset_mm", c.fusion.inject_offset_mm);
    f.string("registration", c.fusion.registration, {"exact", "hand_eye"});
    f.positive("track_gate_mm", c.fusion.track_gate_mm);
    f.positive("centerline_step_mm", c.fusion.centerline_step_mm);
    f.boolean("write_volume", c.fusion.write_volume);
    f.finish();
  }

  if (root.has("calibration")) {
    Section s = root.child("calibration");
    CalibrationConfig& cal = c.calibration;
    s.integer("poses", cal.poses, 2);
    s.non_negative("sigma_rot_deg", cal.sigma_rot_deg);
    s.non_negative("sigma_trans_mm", cal.sigma_trans_mm);
    s.string("pairing", cal.pairing, {"consecutive", "all_pairs"});
    s.integer("monte_carlo_trials", cal.monte_carlo_trials, 0);
    s.non_negative("monte_carlo_sigma_rot_deg", cal.monte_carlo_sigma_rot_deg);
    s.non_negative("monte_carlo_sigma_trans_mm", cal.monte_carlo_sigma_trans_mm);
    if (s.has("pair_counts")) {
      const Json& pc = s.raw("pair_counts");
      if (!pc.is_array() || pc.empty()) throw ConfigError(s.field("pair_counts"), "expected a non-empty array");
      cal.pair_counts.clear();
      for (const auto& v : pc) {
        if (!v.is_number_integer() || v.get<long long>() < 2)
          throw ConfigError(s.field("pair_counts"), "entries must be integers >= 2");
        cal.pair_counts.push_back(v.get<std::size_t>());
      }
    }
    if (s.has("border_poses")) {
      cal.border_poses = detail::read_transforms(s, "border_poses");
      if (cal.border_poses.size() < 4 || cal.border_poses.size() > 6)
        throw ConfigError(s.field("border_poses"), "need 4 to 6 poses");
    }
    if (s.has("ground_truth_x")) cal.rig.t_b_o = detail::read_transforms(s, "ground_truth_x").at(0);
    if (s.has("marker_offset")) cal.rig.t_e_m = detail::read_transforms(s, "marker_offset").at(0);
    s.positive("min_rotation_deg", cal.solver.min_rotation_deg);
    s.positive("min_axis_angle_deg", cal.solver.min_axis_angle_deg);
    s.finish();
  }

  if (root.has("planner")) {
    Section p = root.child("planner");
    p.non_negative("max_rotation_deg", c.planner.window.max_rotation_deg);
    p.integer("grid_samples", c.planner.grid_samples, 2);
    p.non_negative("min_vessel_area_mm2", c.planner.min_vessel_area_mm2);
    p.finish();
  }
  c.planner.window.needle_angle_deg = c.probe.needle_angle_deg;
  {
    const double nominal = c.planner.window.nominal_angle_from_vertical_deg();
    if (nominal - c.planner.window.max_rotation_deg <= -90.0 || nominal + c.planner.window.max_rotation_deg >= 90.0)
      throw ConfigError("planner.max_rotation_deg", "window reaches a horizontal needle line");
  }

  if (root.has("reposition")) {
    Section r = root.child("reposition");
    RepositionConfig& rc = c.reposition;
    r.integer("positions", rc.positions, 1);
    r.non_negative("range_primary_mm", rc.range_primary_mm);
    r.non_negative("range_secondary_mm", rc.range_secondary_mm);
    r.integer("noise_seeds", rc.noise_seeds, 1);
    if (r.has("tracking_noise")) {
      const Json& arr = r.raw("tracking_noise");
      if (!arr.is_array()) throw ConfigError(r.field("tracking_noise"), "expected an array");
      rc.tracking_noise.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Section n(arr[i], r.field("tracking_noise[" + std::to_string(i) + "]"));
        NoiseLevel lvl;
        n.non_negative("sigma_rot_deg", lvl.sigma_rot_deg);
        n.non_negative("sigma_trans_mm", lvl.sigma_trans_mm);
        n.finish();
        rc.tracking_noise.push_back(lvl);
      }
    }
    r.finish();
  }

  root.finish();
  try {
    c.scene.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("phantom", e.what());
  }
  return c;
}

inline RunConfig load_config(const std::optional<std::string>& path) {
  if (!path) return parse_config(Json::object());
  return parse_config(read_json(*path));
}

}  // namespace cbctus::cli
