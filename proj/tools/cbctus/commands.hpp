#pragma once

// The five CLI commands. Each writes its artifacts under <out>/<command>/
// and returns a report that main() stores as report.json and report.txt.

#include "config.hpp"

#include <cbctus/cbctus.hpp>

#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

namespace cbctus::cli {

struct Report {
  Json json = Json::object();
  std::vector<std::string> lines;
};

inline std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

inline double num(double v) { return round_sig15(v); }

inline Json stats_json(const ResidualStats& s) {
  return {{"mean", num(s.mean)}, {"std", num(s.std)}, {"max", num(s.max)}, {"rms", num(s.rms)}, {"count", s.count}};
}

inline void write_report(const fs::path& dir, const Report& r) {
  fs::create_directories(dir);
  write_json(dir / "report.json", r.json);
  std::ofstream out(dir / "report.txt");
  if (!out) throw InvalidInput("cli", "write_report", "cannot open " + (dir / "report.txt").string());
  for (const auto& l : r.lines) out << l << '\n';
}

// --- shared pipeline pieces ----------------------------------------------------

struct CalibrationRun {
  std::vector<AbsolutePoseSample> samples;
  std::vector<MotionPair> pairs;
  CalibrationSolution solution;
  TransformError error;
};

inline CalibrationRun run_calibration(const RunConfig& c) {
  const CalibrationConfig& cal = c.calibration;
  CalibrationRun run;
  const auto poses = sample_poses_in_range(cal.border_poses, static_cast<std::size_t>(cal.poses), derive_seed(c.seed, 1));
  Rng rng(derive_seed(c.seed, 2));
  run.samples = synthesize_session(poses, cal.rig, {cal.sigma_rot_deg, cal.sigma_trans_mm}, rng);
  run.pairs = build_motion_pairs(run.samples, cal.pairing == "all_pairs" ? PairingMode::kAllPairs : PairingMode::kConsecutive);
  run.solution = solve_tsai_lenz(run.pairs, cal.solver);
  run.error = registration_error(run.solution.x, cal.rig.t_b_o);
  return run;
}

inline std::vector<RigidTransform> sweep_poses(const RunConfig& c) {
  FanSweepSpec spec;
  spec.pivot = probe_pose_on_surface(c.scene, c.sweep.pivot_x, c.sweep.pivot_y);
  spec.range_deg = c.sweep.range_deg;
  spec.step_deg = c.sweep.step_deg;
  return generate_fan_sweep(spec);
}

struct FusionRun {
  CbctVolume base;
  SweepFusionResult result;
  Vec3 injected = Vec3::Zero();
  std::optional<CalibrationRun> calibration;
  std::size_t frames = 0;
};

/// Mapping poses come from the true sweep poses, or from the registration
/// chain T^u_b * X_est * T^o_c when the hand-eye registration is simulated.
inline FusionRun run_fusion(const RunConfig& c) {
  FusionRun run;
  run.base = voxelize(c.scene, c.grid);
  const auto truth = sweep_poses(c);
  run.frames = truth.size();
  std::vector<RigidTransform> mapping = truth;
  if (c.fusion.registration == "hand_eye") {
    run.calibration = run_calibration(c);
    const RigidTransform& x_true = c.calibration.rig.t_b_o;
    const RigidTransform& t_o_c = c.calibration.t_o_c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      // Robot pose that holds the probe at the true sweep pose.
      const RigidTransform t_u_b = truth[i].inverse() * t_o_c.inverse() * x_true.inverse();
      mapping[i] = chain_us_to_cbct({t_u_b, run.calibration->solution.x, t_o_c}).inverse();
    }
  }
  if (c.fusion.inject_offset_mm > 0.0) {
    Rng rng(derive_seed(c.seed, 3));
    const Vec3 axis = c.scene.tubes.empty() ? Vec3::UnitY() : c.scene.tubes.front().direction();
    run.injected = perpendicular_offset(c.fusion.inject_offset_mm, axis, rng);
    mapping = inject_translation(mapping, run.injected);
  }
  SweepFusionOptions o;
  o.render = c.render;
  o.render.seed = derive_seed(c.seed, 4);
  o.segmentation = c.segmentation;
  o.region_grow = c.region_grow;
  o.track_gate_mm = c.fusion.track_gate_mm;
  o.centerline_step_mm = c.fusion.centerline_step_mm;
  run.result = run_sweep_fusion(c.scene, &run.base, c.probe, truth, mapping, o);
  return run;
}

inline Json calibration_json(const RunConfig& c, const CalibrationRun& r) {
  const auto& s = r.solution;
  return {{"poses", r.samples.size()},
          {"pairing", c.calibration.pairing},
          {"motion_pairs", r.pairs.size()},
          {"rotation_pairs_used", s.rotation_pairs_used},
          {"noise", {{"sigma_rot_deg", num(c.calibration.sigma_rot_deg)}, {"sigma_trans_mm", num(c.calibration.sigma_trans_mm)}}},
          {"estimated_x", transform_to_json(s.x)},
          {"ground_truth_x", transform_to_json(c.calibration.rig.t_b_o)},
          {"error", {{"translation_mm", num(r.error.translation_mm)}, {"rotation_deg", num(r.error.rotation_deg)}}},
          {"rotation_residual_deg", stats_json(s.rotation_residual_deg)},
          {"translation_residual_mm", stats_json(s.translation_residual_mm)}};
}

// --- phantom ----------------------------------------------------------------------

inline Report cmd_phantom(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  const CbctVolume vol = voxelize(c.scene, c.grid);
  write_volume(dir, "cbct", vol, c.scene.intensities);
  write_json(dir / "scene.json", scene_to_json(c.scene));

  std::vector<std::size_t> counts(static_cast<std::size_t>(Material::kMappedVessel) + 1, 0);
  for (std::uint8_t l : vol.labels) ++counts[l];

  Report r;
  r.json["command"] = "phantom";
  r.json["seed"] = c.seed;
  r.json["geometry"] = geometry_to_json(vol.geometry);
  r.json["scene"] = scene_to_json(c.scene);
  Json lc = Json::object();
  for (std::size_t m = 0; m < counts.size(); ++m) lc[material_name(static_cast<Material>(m))] = counts[m];
  r.json["label_counts"] = lc;
  r.json["files"] = {"cbct.raw", "cbct_labels.raw", "cbct.json", "scene.json"};

  const auto& g = vol.geometry;
  r.lines.push_back("phantom");
  r.lines.push_back(fmt("grid       %d x %d x %d voxels, spacing %.3f x %.3f x %.3f mm", g.dims[0], g.dims[1], g.dims[2],
                        g.spacing.x(), g.spacing.y(), g.spacing.z()));
  r.lines.push_back(fmt("tubes      %zu", c.scene.tubes.size()));
  r.lines.push_back(fmt("ribs       %zu", c.scene.ribs.size()));
  r.lines.push_back(fmt("lesion     r %.2f mm at (%.2f, %.2f, %.2f)", c.scene.lesion.radius, c.scene.lesion.center.x(),
                        c.scene.lesion.center.y(), c.scene.lesion.center.z()));
  for (std::size_t m = 0; m < counts.size(); ++m)
    if (counts[m]) r.lines.push_back(fmt("label %-14s %zu", material_name(static_cast<Material>(m)), counts[m]));

  if (counts[static_cast<std::size_t>(Material::kLesion)]) {
    const AxialSlice slice = select_axial_slice(vol);
    const Image<float> img = fused_slice(FusedVolume(vol), slice.frame, false);
    write_pgm(dir / "lesion_slice.pgm", to_gray8(img, 0.0, 1100.0));
    r.json["lesion_slice"] = {{"index", slice.frame.index}, {"occluded", slice.occluded}, {"file", "lesion_slice.pgm"}};
    r.lines.push_back(fmt("slice      j = %d through the lesion, %s", slice.frame.index,
                          slice.occluded ? "occluded by a rib" : "not occluded"));
  }
  return r;
}

// --- calibrate ------------------------------------------------------------------

inline Report cmd_calibrate(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  const CalibrationRun run = run_calibration(c);
  Report r;
  r.json["command"] = "calibrate";
  r.json["seed"] = c.seed;
  r.json["calibration"] = calibration_json(c, run);
  Json samples = Json::array();
  for (const auto& s : run.samples) samples.push_back({{"t_e_b", transform_to_json(s.t_e_b)}, {"t_o_m", transform_to_json(s.t_o_m)}});
  write_json(dir / "session.json", {{"samples", samples}});

  const auto& s = run.solution;
  r.lines.push_back("calibrate");
  r.lines.push_back(fmt("poses %zu, motion pairs %zu (%s), rotation pairs used %zu", run.samples.size(), run.pairs.size(),
                        c.calibration.pairing.c_str(), s.rotation_pairs_used));
  r.lines.push_back(fmt("noise      %.4f deg, %.4f mm", c.calibration.sigma_rot_deg, c.calibration.sigma_trans_mm));
  r.lines.push_back(fmt("error      %.6e mm, %.6e deg", run.error.translation_mm, run.error.rotation_deg));
  r.lines.push_back(fmt("residual   rotation mean %.6e deg, max %.6e deg", s.rotation_residual_deg.mean, s.rotation_residual_deg.max));
  r.lines.push_back(fmt("residual   translation mean %.6e mm, max %.6e mm", s.translation_residual_mm.mean,
                        s.translation_residual_mm.max));
  const Mat4 m = s.x.matrix();
  r.lines.push_back("estimated X (T^b_o):");
  for (int i = 0; i < 4; ++i)
    r.lines.push_back(fmt("  % 14.6f % 14.6f % 14.6f % 14.6f", m(i, 0), m(i, 1), m(i, 2), m(i, 3)));

  if (c.calibration.monte_carlo_trials > 0) {
    MonteCarloConfig mc;
    mc.pair_counts = c.calibration.pair_counts;
    mc.trials = static_cast<std::size_t>(c.calibration.monte_carlo_trials);
    mc.poses_per_session = static_cast<std::size_t>(c.calibration.poses);
    mc.noise = {c.calibration.monte_carlo_sigma_rot_deg, c.calibration.monte_carlo_sigma_trans_mm};
    mc.seed = derive_seed(c.seed, 5);
    const auto rows = monte_carlo_recovery(mc, c.calibration.border_poses, c.calibration.rig);
    Json table = Json::array();
    r.lines.push_back(fmt("monte carlo: %zu trials, noise %.3f deg / %.3f mm", mc.trials, mc.noise.sigma_rot_deg,
                          mc.noise.sigma_trans_mm));
    r.lines.push_back("  pairs  solved  degenerate  median_mm   median_deg");
    for (const auto& row : rows) {
      table.push_back({{"pair_count", row.pair_count},
                       {"trials_solved", row.trials_solved},
                       {"trials_degenerate", row.trials_degenerate},
                       {"median_translation_mm", num(row.median_translation_mm)},
                       {"median_rotation_deg", num(row.median_rotation_deg)}});
      r.lines.push_back(fmt("  %5zu  %6zu  %10zu  %9.4f  %11.5f", row.pair_count, row.trials_solved, row.trials_degenerate,
                            row.median_translation_mm, row.median_rotation_deg));
    }
    r.json["monte_carlo"] = {{"trials", mc.trials},
                             {"sigma_rot_deg", num(mc.noise.sigma_rot_deg)},
                             {"sigma_trans_mm", num(mc.noise.sigma_trans_mm)},
                             {"rows", table}};
  }
  return r;
}

// --- sweep-fuse ------------------------------------------------------------------

inline Report cmd_sweep_fuse(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  const FusionRun run = run_fusion(c);
  const SweepFusionResult& res = run.result;
  const FusedVolume& fused = *res.fused;

  Report r;
  r.json["command"] = "sweep-fuse";
  r.json["seed"] = c.seed;
  r.json["frames"] = run.frames;
  r.json["registration"] = c.fusion.registration;
  if (run.calibration) r.json["calibration"] = calibration_json(c, *run.calibration);
  r.json["injected_offset_mm"] = vec3_to_json(run.injected);
  r.json["masks_per_frame"] = res.masks_per_frame;
  r.json["labeled_voxels"] = fused.labeled_count();
  r.json["pixels_outside_grid"] = fused.outside_count;
  const double bound = c.probe.spacing_mm + 0.5 * c.grid.voxel_diagonal();
  r.json["zero_noise_bound_mm"] = num(bound);

  r.lines.push_back("sweep-fuse");
  r.lines.push_back(fmt("frames     %zu (%.1f deg fan, %.2f deg steps)", run.frames, c.sweep.range_deg, c.sweep.step_deg));
  r.lines.push_back("registration " + c.fusion.registration);
  if (run.calibration)
    r.lines.push_back(fmt("calibration error %.4f mm, %.4f deg", run.calibration->error.translation_mm,
                          run.calibration->error.rotation_deg));
  r.lines.push_back(fmt("injected   (%.4f, %.4f, %.4f) mm, |d| = %.4f mm", run.injected.x(), run.injected.y(), run.injected.z(),
                        run.injected.norm()));
  r.lines.push_back(fmt("labeled voxels %zu, pixels off grid %zu", fused.labeled_count(), fused.outside_count));

  Json tracks = Json::array();
  r.lines.push_back(fmt("tracks     %zu", res.tracking.tracks.size()));
  if (res.error) {
    for (const auto& te : res.error->tracks) {
      const auto& tr = res.tracking.tracks[static_cast<std::size_t>(te.track_id)];
      tracks.push_back({{"id", te.track_id},
                        {"points", tr.points.size()},
                        {"first_frame", tr.frames.front()},
                        {"last_frame", tr.frames.back()},
                        {"matched_tube", te.centerline},
                        {"error_mm", stats_json(te.stats)}});
      r.lines.push_back(fmt("  track %d  tube %zu  points %3zu  mean %.4f  std %.4f  max %.4f mm", te.track_id, te.centerline,
                            tr.points.size(), te.stats.mean, te.stats.std, te.stats.max));
    }
    r.json["mapping_error_mm"] = stats_json(res.error->global);
    r.lines.push_back(fmt("global     mean %.4f mm, std %.4f mm, max %.4f mm (zero-noise bound %.4f mm)", res.error->global.mean,
                          res.error->global.std, res.error->global.max, bound));
  } else {
    r.json["mapping_error_mm"] = nullptr;
    r.lines.push_back("global     no vessel tracked");
  }
  r.json["tracks"] = tracks;
  r.json["warnings"] = res.warnings;
  for (const auto& w : res.warnings) r.lines.push_back("warning: " + w);

  if (c.fusion.write_volume) {
    write_volume(dir, "cbct", fused.base, c.scene.intensities);
    write_channel(dir / "vessel.raw", fused.vessel);
    write_channel(dir / "doppler.raw", fused.doppler);
    write_channel(dir / "provenance.raw", fused.provenance);
    write_json(dir / "fused.json", {{"format", "cbctus-fused-1"},
                                    {"geometry", geometry_to_json(fused.geometry())},
                                    {"channels",
                                     {{{"file", "vessel.raw"}, {"type", "uint8"}},
                                      {{"file", "doppler.raw"}, {"type", "uint8"}},
                                      {{"file", "provenance.raw"}, {"type", "uint32"}}}},
                                    {"base", "cbct.json"}});
  }
  bool has_lesion = false;
  for (std::uint8_t l : fused.base.labels) has_lesion = has_lesion || l == static_cast<std::uint8_t>(Material::kLesion);
  if (has_lesion) {
    const AxialSlice slice = select_axial_slice(fused.base);
    write_pgm(dir / "fused_slice.pgm", to_gray8(fused_slice(fused, slice.frame), 0.0, 1100.0));
  }
  return r;
}

// --- plan -------------------------------------------------------------------------

inline Report cmd_plan(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  const FusionRun run = run_fusion(c);
  const FusedVolume& fused = *run.result.fused;
  const AxialSlice slice = select_axial_slice(fused.base);
  const InPlaneScene scene =
      build_in_plane_scene(fused, slice.frame, slice.lesion_center, c.planner.window, c.planner.min_vessel_area_mm2);
  TrajectorySolverOptions so;
  so.grid_samples = c.planner.grid_samples;
  const TrajectoryPlan plan = solve_trajectory(scene, so);
  const ProbePlacement placement =
      compute_probe_pose(plan, scene, slice.frame, c.probe, c.planner.window.max_rotation_deg);
  const Point2 seen = extract_needle_line(placement.pose, c.probe, slice.frame);

  // Safety is judged against the phantom: each detected vessel takes the
  // outer radius of the tube whose axis is nearest to it.
  std::vector<double> radii;
  std::vector<std::size_t> matched;
  for (const Point2& v : scene.vessels) {
    const Vec3 p = slice.frame.point(v.x(), v.y());
    std::size_t best = 0;
    for (std::size_t t = 1; t < c.scene.tubes.size(); ++t)
      if (tube_radial_distance(c.scene.tubes[t], p) < tube_radial_distance(c.scene.tubes[best], p)) best = t;
    matched.push_back(best);
    radii.push_back(c.scene.tubes.empty() ? 0.0 : c.scene.tubes[best].outer_radius());
  }
  const SafetyReport safety = evaluate_plan(plan, scene, radii, {slice.frame, c.scene.ribs, c.scene.scanning_surface_z()});

  Report r;
  r.json["command"] = "plan";
  r.json["seed"] = c.seed;
  r.json["slice"] = {{"index", slice.frame.index},
                     {"occluded", slice.occluded},
                     {"origin", vec3_to_json(slice.frame.origin)},
                     {"x_axis", vec3_to_json(slice.frame.x_axis)},
                     {"y_axis", vec3_to_json(slice.frame.y_axis)},
                     {"spacing_mm", num(slice.frame.spacing_mm)},
                     {"width", slice.frame.width},
                     {"height", slice.frame.height}};
  r.json["lesion"] = {{"center", vec3_to_json(slice.lesion_center)},
                      {"in_plane", {num(scene.lesion.x()), num(scene.lesion.y())}}};
  Json vessels = Json::array();
  for (std::size_t i = 0; i < scene.vessels.size(); ++i)
    vessels.push_back({{"in_plane", {num(scene.vessels[i].x()), num(scene.vessels[i].y())}},
                       {"estimated_radius_mm", num(scene.vessel_radii[i])},
                       {"matched_tube", matched[i]},
                       {"outer_radius_mm", num(radii[i])}});
  r.json["vessels"] = vessels;
  std::vector<double> clear;
  for (double x : plan.clearances_mm) clear.push_back(num(x));
  r.json["plan"] = {{"k", num(plan.k)},
                    {"b", num(plan.b)},
                    {"angle_from_vertical_deg", num(plan.angle_from_vertical_deg())},
                    {"objective", num(plan.objective)},
                    {"unconstrained", plan.unconstrained},
                    {"k_bounds", {num(scene.k_min), num(scene.k_max)}},
                    {"k_nominal", num(scene.k_nominal)},
                    {"clearances_mm", clear}};
  r.json["probe"] = {{"pose_u_in_c", transform_to_json(placement.pose)},
                     {"in_plane_rotation_deg", num(placement.in_plane_rotation_deg)},
                     {"needle_anchor_u", vec3_to_json(c.probe.needle_anchor())},
                     {"needle_direction_u", vec3_to_json(c.probe.needle_direction())},
                     {"needle_line_in_slice", {num(seen.x()), num(seen.y())}}};
  std::vector<double> cmr;
  for (double x : safety.clearance_minus_radius_mm) cmr.push_back(num(x));
  r.json["safety"] = {{"lesion_deviation_mm", num(safety.lesion_deviation_mm)},
                      {"clearance_minus_radius_mm", cmr},
                      {"vessel_contact", safety.vessel_contact},
                      {"rib_contact", safety.rib_contact},
                      {"entry_point", vec3_to_json(safety.entry_point)},
                      {"target_point", vec3_to_json(safety.target_point)}};
  r.json["warnings"] = run.result.warnings;

  r.lines.push_back("plan");
  r.lines.push_back(fmt("slice      j = %d, %s", slice.frame.index, slice.occluded ? "lesion occluded by a rib" : "lesion not occluded"));
  r.lines.push_back(fmt("lesion     (%.3f, %.3f, %.3f) mm", slice.lesion_center.x(), slice.lesion_center.y(), slice.lesion_center.z()));
  r.lines.push_back(fmt("vessels    %zu", scene.vessels.size()));
  for (std::size_t i = 0; i < scene.vessels.size(); ++i)
    r.lines.push_back(fmt("  vessel %zu  (%.3f, %.3f)  r_est %.3f  tube %zu  r_out %.3f  clearance %.3f  beyond wall %.3f", i,
                          scene.vessels[i].x(), scene.vessels[i].y(), scene.vessel_radii[i], matched[i], radii[i],
                          plan.clearances_mm[i], safety.clearance_minus_radius_mm[i]));
  if (plan.unconstrained) r.lines.push_back("trajectory unconstrained: no vessels in the slice, nominal angle used");
  r.lines.push_back(fmt("trajectory k %.6f, b %.6f, %.3f deg from vertical, objective %.6f", plan.k, plan.b,
                        plan.angle_from_vertical_deg(), plan.objective));
  r.lines.push_back(fmt("probe      in-plane rotation %.3f deg", placement.in_plane_rotation_deg));
  r.lines.push_back(fmt("safety     lesion deviation %.3e mm, vessel contact %s, rib contact %s", safety.lesion_deviation_mm,
                        safety.vessel_contact ? "yes" : "no", safety.rib_contact ? "yes" : "no"));
  r.lines.push_back(fmt("entry      (%.3f, %.3f, %.3f) mm", safety.entry_point.x(), safety.entry_point.y(), safety.entry_point.z()));
  for (const auto& w : run.result.warnings) r.lines.push_back("warning: " + w);

  Image<std::uint8_t> img = to_gray8(fused_slice(fused, slice.frame), 0.0, 1100.0);
  const double norm = std::sqrt(1.0 + plan.k * plan.k);
  for (int j = 0; j < img.height; ++j)
    for (int i = 0; i < img.width; ++i) {
      const double x = i * slice.frame.spacing_mm;
      const double y = j * slice.frame.spacing_mm;
      if (std::abs(plan.k * x - y + plan.b) / norm <= 0.5 * slice.frame.spacing_mm) img.at(i, j) = 255;
    }
  write_pgm(dir / "plan_slice.pgm", img);
  write_json(dir / "plan.json", r.json);
  return r;
}

// --- reposition-eval --------------------------------------------------------------

inline Report cmd_reposition_eval(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  const RepositionConfig& rc = c.reposition;
  Rng rng(derive_seed(c.seed, 6));
  RegistrationChain chain{random_transform(rng, 500.0), c.calibration.rig.t_b_o, c.calibration.t_o_c};
  const RigidTransform t_u_c = chain_us_to_cbct(chain);
  const Vec3 target = c.scene.lesion.center;

  struct Errors {
    std::vector<double> trans, rot, target;
  };
  const auto measure = [&](const RigidTransform& est, const RigidTransform& truth, Errors& e) {
    const auto err = registration_error(est, truth);
    e.trans.push_back(err.translation_mm);
    e.rot.push_back(err.rotation_deg);
    e.target.push_back((est * target - truth * target).norm());
  };

  std::uniform_real_distribution<double> ux(-rc.range_primary_mm, rc.range_primary_mm);
  std::uniform_real_distribution<double> uy(-rc.range_secondary_mm, rc.range_secondary_mm);
  Errors exact;
  std::vector<Errors> noisy(rc.tracking_noise.size());
  Json rows = Json::array();
  Report r;
  r.lines.push_back("reposition-eval");
  r.lines.push_back(fmt("positions  %d, motion U(+-%.1f) mm along x and U(+-%.1f) mm along y of the CBCT frame", rc.positions,
                        rc.range_primary_mm, rc.range_secondary_mm));
  std::string head = "  pos        dx        dy   exact_mm  exact_deg";
  for (const auto& lvl : rc.tracking_noise) head += fmt("  [%.2fdeg/%.2fmm] mm  deg  target_mm", lvl.sigma_rot_deg, lvl.sigma_trans_mm);
  r.lines.push_back(head);

  for (int p = 0; p < rc.positions; ++p) {
    const Vec3 shift(ux(rng), uy(rng), 0.0);
    const RigidTransform motion = RigidTransform::from_translation(shift);  // T^{c_old}_{c_new}
    RegistrationChain moved = chain;
    moved.t_o_c = chain.t_o_c * motion;
    const RigidTransform truth = chain_us_to_cbct(moved);
    Errors e0;
    measure(update_after_reposition(t_u_c, motion), truth, e0);
    measure(update_after_reposition(t_u_c, motion), truth, exact);
    Json row = {{"position", p},
                {"motion_mm", vec3_to_json(shift)},
                {"exact", {{"translation_mm", num(e0.trans[0])}, {"rotation_deg", num(e0.rot[0])}, {"target_mm", num(e0.target[0])}}}};
    std::string line = fmt("  %3d  %8.3f  %8.3f  %9.2e  %9.2e", p, shift.x(), shift.y(), e0.trans[0], e0.rot[0]);
    Json levels = Json::array();
    for (std::size_t l = 0; l < rc.tracking_noise.size(); ++l) {
      const NoiseLevel& lvl = rc.tracking_noise[l];
      Rng nrng(derive_seed(derive_seed(c.seed, 7 + l), static_cast<std::uint64_t>(p)));
      Errors e;
      for (int s = 0; s < rc.noise_seeds; ++s) {
        const RigidTransform measured = perturb(motion, nrng, lvl.sigma_rot_deg, lvl.sigma_trans_mm);
        measure(update_after_reposition(t_u_c, measured), truth, e);
      }
      const auto st = summarize(e.trans), sr = summarize(e.rot), sg = summarize(e.target);
      levels.push_back({{"sigma_rot_deg", num(lvl.sigma_rot_deg)},
                        {"sigma_trans_mm", num(lvl.sigma_trans_mm)},
                        {"translation_mm", stats_json(st)},
                        {"rotation_deg", stats_json(sr)},
                        {"target_mm", stats_json(sg)}});
      line += fmt("  %8.4f %8.4f %8.4f", st.mean, sr.mean, sg.mean);
      for (std::size_t i = 0; i < e.trans.size(); ++i) {
        noisy[l].trans.push_back(e.trans[i]);
        noisy[l].rot.push_back(e.rot[i]);
        noisy[l].target.push_back(e.target[i]);
      }
    }
    row["tracking_noise"] = levels;
    rows.push_back(row);
    r.lines.push_back(line);
  }

  const auto se_t = summarize(exact.trans), se_r = summarize(exact.rot);
  Json summary = {{"exact", {{"translation_mm", stats_json(se_t)}, {"rotation_deg", stats_json(se_r)}, {"target_mm", stats_json(summarize(exact.target))}}}};
  Json levels = Json::array();
  r.lines.push_back(fmt("summary exact: translation %.3e +- %.3e mm, rotation %.3e +- %.3e deg", se_t.mean, se_t.std, se_r.mean,
                        se_r.std));
  for (std::size_t l = 0; l < rc.tracking_noise.size(); ++l) {
    const auto st = summarize(noisy[l].trans), sr = summarize(noisy[l].rot), sg = summarize(noisy[l].target);
    levels.push_back({{"sigma_rot_deg", num(rc.tracking_noise[l].sigma_rot_deg)},
                      {"sigma_trans_mm", num(rc.tracking_noise[l].sigma_trans_mm)},
                      {"translation_mm", stats_json(st)},
                      {"rotation_deg", stats_json(sr)},
                      {"target_mm", stats_json(sg)}});
    r.lines.push_back(fmt("summary %.2f deg / %.2f mm: translation %.4f +- %.4f mm, rotation %.4f +- %.4f deg, target %.4f +- %.4f mm",
                          rc.tracking_noise[l].sigma_rot_deg, rc.tracking_noise[l].sigma_trans_mm, st.mean, st.std, sr.mean,
                          sr.std, sg.mean, sg.std));
  }
  summary["tracking_noise"] = levels;
  r.json["command"] = "reposition-eval";
  r.json["seed"] = c.seed;
  r.json["noise_draws_per_position"] = rc.noise_seeds;
  r.json["positions"] = rows;
  r.json["summary"] = summary;
  return r;
}

}  // namespace cbctus::cli
