#pragma once

// Two-stage needle planning: pick the slice through the lesion (out of plane),
// then choose the in-plane needle line through the lesion that maximizes the
// summed distance to the vessel centers within the probe's rotation window,
// and place the probe so its fixed needle-holder line follows that line.
//
// Slice convention: the planning slice is the x-z plane of {c} through the
// lesion. Its in-plane x axis points down (depth, -z of {c}) and its y axis
// is lateral (+x of {c}). A needle line y = k x + b therefore has slope
// k = tan(angle from the vertical). The holder's 39 degree insertion angle
// against the surface puts the nominal line at 51 degrees from the vertical.

#include <cbctus/errors.hpp>
#include <cbctus/fusion.hpp>
#include <cbctus/geometry.hpp>
#include <cbctus/grid.hpp>
#include <cbctus/phantom.hpp>
#include <cbctus/slice.hpp>
#include <cbctus/ussim.hpp>
#include <cbctus/vessel_segmentation.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace cbctus {

using Point2 = Eigen::Vector2d;

struct AxialSlice {
  SliceFrame frame;
  Vec3 lesion_center;     // label centroid in {c}
  bool occluded = false;  // vertical ray from the top to the lesion crosses a rib
};

/// Slice through the lesion-label centroid, normal to y (the tube axis).
inline AxialSlice select_axial_slice(const CbctVolume& volume) {
  const VolumeGeometry& g = volume.geometry;
  if (volume.labels.size() != g.voxel_count())
    throw InvalidInput("planner", "select_axial_slice", "volume has no label grid");
  Vec3 sum = Vec3::Zero();
  std::size_t count = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i)
        if (volume.label(i, j, k) == Material::kLesion) {
          sum += Vec3(i, j, k);
          ++count;
        }
  if (count == 0) throw InvalidInput("planner", "select_axial_slice", "no lesion voxels in the label grid");
  const Vec3 idx = sum / static_cast<double>(count);

  AxialSlice out;
  out.lesion_center = g.origin + idx.cwiseProduct(g.spacing);
  const int j = static_cast<int>(std::lround(idx.y()));
  const int top = g.dims[2] - 1;

  SliceFrame& f = out.frame;
  f.index = j;
  f.origin = g.center(0, j, top);
  f.x_axis = -Vec3::UnitZ();
  f.y_axis = Vec3::UnitX();
  f.spacing_mm = std::min(g.spacing.x(), g.spacing.z());
  f.width = static_cast<int>(std::floor((g.dims[2] - 1) * g.spacing.z() / f.spacing_mm + 1e-9)) + 1;
  f.height = static_cast<int>(std::floor((g.dims[0] - 1) * g.spacing.x() / f.spacing_mm + 1e-9)) + 1;

  const int li = static_cast<int>(std::lround(idx.x()));
  const int lk = static_cast<int>(std::lround(idx.z()));
  for (int k = top; k >= lk; --k)
    if (volume.label(li, j, k) == Material::kRib) {
      out.occluded = true;
      break;
    }
  return out;
}

struct NeedleWindow {
  double needle_angle_deg = 39.0;    // holder angle against the surface
  double max_rotation_deg = 15.0;    // in-plane probe rotation limit

  double nominal_angle_from_vertical_deg() const { return 90.0 - needle_angle_deg; }
  double k_nominal() const { return std::tan(nominal_angle_from_vertical_deg() * kDegToRad); }
  double k_min() const { return std::tan((nominal_angle_from_vertical_deg() - max_rotation_deg) * kDegToRad); }
  double k_max() const { return std::tan((nominal_angle_from_vertical_deg() + max_rotation_deg) * kDegToRad); }
};

struct InPlaneScene {
  std::vector<Point2> vessels;       // vessel centers (x, y) in mm
  std::vector<double> vessel_radii;  // equivalent-disk radii of the vessel components
  Point2 lesion = Point2::Zero();
  double k_min = -1.0;
  double k_max = 1.0;
  double k_nominal = 0.0;

  void validate(const char* op) const {
    if (!(k_min <= k_max)) throw InvalidInput("planner", op, "k_min must be <= k_max");
    if (!std::isfinite(k_min) || !std::isfinite(k_max)) throw InvalidInput("planner", op, "slope bounds must be finite");
  }
};

/// Vessel-channel components cut by the slice become the vessel centers.
inline InPlaneScene build_in_plane_scene(const FusedVolume& fused, const SliceFrame& slice, const Vec3& lesion_center,
                                         const NeedleWindow& window = {}, double min_vessel_area_mm2 = 1.0) {
  slice.validate("planner", "build_in_plane_scene");
  const Point2 lesion = slice.to_plane(lesion_center);
  const double off_plane = std::abs(slice.normal().dot(lesion_center - slice.origin));
  const double tol = 1e-9;
  if (off_plane > 0.5 * fused.geometry().spacing.maxCoeff() || lesion.x() < -tol || lesion.y() < -tol ||
      lesion.x() > (slice.width - 1) * slice.spacing_mm + tol || lesion.y() > (slice.height - 1) * slice.spacing_mm + tol)
    throw InvalidInput("planner", "build_in_plane_scene", "lesion center is not inside the slice");

  Image<std::uint8_t> channel(slice.width, slice.height);
  for (int j = 0; j < slice.height; ++j)
    for (int i = 0; i < slice.width; ++i)
      channel.at(i, j) = sample_nearest<std::uint8_t>(fused.geometry(), fused.vessel, slice.cell(i, j), 0);

  InPlaneScene scene;
  scene.lesion = lesion;
  scene.k_min = window.k_min();
  scene.k_max = window.k_max();
  scene.k_nominal = window.k_nominal();
  for (const auto& comp : extract_components(channel, slice.spacing_mm, min_vessel_area_mm2)) {
    scene.vessels.emplace_back(comp.centroid.x() * slice.spacing_mm, comp.centroid.y() * slice.spacing_mm);
    scene.vessel_radii.push_back(std::sqrt(comp.area_mm2 / std::numbers::pi));
  }
  return scene;
}

// --- in-plane optimization ---------------------------------------------------

/// Summed point-to-line distance of the vessel centers for the line of slope
/// k through the lesion.
inline double trajectory_objective(const InPlaneScene& scene, double k) {
  const double norm = std::sqrt(1.0 + k * k);
  double f = 0.0;
  for (const Point2& v : scene.vessels)
    f += std::abs(k * (v.x() - scene.lesion.x()) - (v.y() - scene.lesion.y())) / norm;
  return f;
}

inline double line_point_distance(double k, double b, const Point2& p) {
  return std::abs(k * p.x() - p.y() + b) / std::sqrt(1.0 + k * k);
}

struct TrajectoryPlan {
  double k = 0.0;
  double b = 0.0;
  double objective = 0.0;
  std::vector<double> clearances_mm;  // center-to-line distance per vessel
  bool unconstrained = false;         // no vessels; nominal line returned
  double angle_from_vertical_deg() const { return std::atan(k) * kRadToDeg; }
};

struct TrajectorySolverOptions {
  int grid_samples = 1000;
  double k_tolerance = 1e-9;
};

namespace detail {

// Golden-section maximization on [lo, hi] down to width `tol`.
template <class F>
double golden_section_max(F&& f, double lo, double hi, double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Bounded one-variable maximization of the summed vessel distance with the
/// line pinned to the lesion (b = y_l - k x_l): dense grid, then golden-section
/// refinement around every grid-local maximum. Ties go to the slope nearest
/// the nominal one, then to the smaller slope.
inline TrajectoryPlan solve_trajectory(const InPlaneScene& scene, const TrajectorySolverOptions& options = {}) {
  scene.validate("solve_trajectory");
  TrajectoryPlan plan;
  const auto finish = [&](double k) {
    plan.k = k;
    plan.b = scene.lesion.y() - k * scene.lesion.x();
    plan.objective = trajectory_objective(scene, k);
    plan.clearances_mm.clear();
    for (const Point2& v : scene.vessels) plan.clearances_mm.push_back(line_point_distance(plan.k, plan.b, v));
    return plan;
  };
  if (scene.vessels.empty()) {
    plan.unconstrained = true;
    return finish(std::clamp(scene.k_nominal, scene.k_min, scene.k_max));
  }

  const auto f = [&](double k) { return trajectory_objective(scene, k); };
  const int n = std::max(options.grid_samples, 2);
  const double lo = scene.k_min;
  const double hi = scene.k_max;
  std::vector<double> ks(static_cast<std::size_t>(n));
  std::vector<double> fs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ks[static_cast<std::size_t>(i)] = i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1);
    fs[static_cast<std::size_t>(i)] = f(ks[static_cast<std::size_t>(i)]);
  }

  std::vector<double> candidates{lo, hi};
  for (int i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    const bool left_ok = i == 0 || fs[s] >= fs[s - 1];
    const bool right_ok = i == n - 1 || fs[s] >= fs[s + 1];
    if (!left_ok || !right_ok) continue;
    candidates.push_back(ks[s]);
    const double a = ks[static_cast<std::size_t>(std::max(i - 1, 0))];
    const double b = ks[static_cast<std::size_t>(std::min(i + 1, n - 1))];
    if (b > a) candidates.push_back(detail::golden_section_max(f, a, b, options.k_tolerance));
  }

  double best_f = -std::numeric_limits<double>::infinity();
  for (double k : candidates) best_f = std::max(best_f, f(k));
  const double tie = 1e-12 * std::max(1.0, std::abs(best_f));
  std::optional<double> best_k;
  for (double k : candidates) {
    if (f(k) < best_f - tie) continue;
    if (!best_k) {
      best_k = k;
      continue;
    }
    const double dk = std::abs(k - scene.k_nominal);
    const double db = std::abs(*best_k - scene.k_nominal);
    if (dk < db || (dk == db && k < *best_k)) best_k = k;
  }
  return finish(*best_k);
}

// --- probe placement -------------------------------------------------------------

struct ProbePlacement {
  RigidTransform pose;  // pose of {u} in {c}
  double in_plane_rotation_deg = 0.0;
};

/// Probe pose whose image plane is the slice, which puts the lesion on the
/// image's center column, and whose needle-holder line lies on the plan.
inline ProbePlacement compute_probe_pose(const TrajectoryPlan& plan, const InPlaneScene& scene, const SliceFrame& slice,
                                         const ProbeModel& probe, double max_rotation_deg = 15.0) {
  slice.validate("planner", "compute_probe_pose");
  const double nominal = probe.needle_angle_from_normal_deg();
  const double planned = std::atan(plan.k) * kRadToDeg;
  const double rotation = planned - nominal;
  if (std::abs(rotation) > max_rotation_deg + 1e-9)
    throw Infeasible("planner", "compute_probe_pose",
                     "required in-plane rotation " + std::to_string(rotation) + " deg exceeds +-" +
                         std::to_string(max_rotation_deg) + " deg");

  Mat3 r0;
  r0.col(0) = slice.y_axis;
  r0.col(1) = slice.x_axis;
  r0.col(2) = slice.y_axis.cross(slice.x_axis);
  const Rotation r = Rotation::from_matrix(r0) * Rotation::about_z(nominal - planned);
  const Vec3 lesion_c = slice.point(scene.lesion.x(), scene.lesion.y());
  return {RigidTransform(r, lesion_c - (r * probe.needle_anchor())), rotation};
}

/// (k, b) of the probe's needle line as seen in the slice.
inline Point2 extract_needle_line(const RigidTransform& probe_pose, const ProbeModel& probe, const SliceFrame& slice) {
  const Point2 p0 = slice.to_plane(probe_pose * probe.needle_anchor());
  const Point2 p1 = slice.to_plane(probe_pose * (probe.needle_anchor() + 50.0 * probe.needle_direction()));
  const double k = (p1.y() - p0.y()) / (p1.x() - p0.x());
  return {k, p0.y() - k * p0.x()};
}

// --- safety ------------------------------------------------------------------------

/// Slab test of the segment p0-p1 against an axis-aligned box.
inline bool segment_intersects_box(const Vec3& p0, const Vec3& p1, const Box& box) {
  double t0 = 0.0;
  double t1 = 1.0;
  const Vec3 d = p1 - p0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (p0[a] < box.min[a] || p0[a] > box.max[a]) return false;
      continue;
    }
    double ta = (box.min[a] - p0[a]) / d[a];
    double tb = (box.max[a] - p0[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

struct SafetyContext {
  SliceFrame slice;
  std::vector<RibStrip> ribs;
  double surface_z = 0.0;  // scanning surface height in {c}
};

struct SafetyReport {
  double lesion_deviation_mm = 0.0;
  std::vector<double> clearance_minus_radius_mm;  // negative means vessel contact
  double min_clearance_minus_radius_mm = std::numeric_limits<double>::infinity();
  bool vessel_contact = false;
  bool rib_contact = false;
  Vec3 entry_point = Vec3::Zero();  // needle crossing of the scanning surface
  Vec3 target_point = Vec3::Zero();
};

/// Lesion deviation, per-vessel clearance beyond the vessel radius, and rib
/// contact of the 3D needle segment from the surface down to the lesion.
inline SafetyReport evaluate_plan(const TrajectoryPlan& plan, const InPlaneScene& scene,
                                  std::span<const double> vessel_radii, const SafetyContext& ctx) {
  if (vessel_radii.size() != scene.vessels.size())
    throw InvalidInput("planner", "evaluate_plan", "need one radius per vessel");
  SafetyReport rep;
  rep.lesion_deviation_mm = line_point_distance(plan.k, plan.b, scene.lesion);
  for (std::size_t i = 0; i < scene.vessels.size(); ++i) {
    const double c = line_point_distance(plan.k, plan.b, scene.vessels[i]) - vessel_radii[i];
    rep.clearance_minus_radius_mm.push_back(c);
    rep.min_clearance_minus_radius_mm = std::min(rep.min_clearance_minus_radius_mm, c);
    if (c < 0.0) rep.vessel_contact = true;
  }

  // Closest point of the line to the lesion, then back up to the surface.
  const double x0 = (scene.lesion.x() + plan.k * (scene.lesion.y() - plan.b)) / (1.0 + plan.k * plan.k);
  const Vec3 target = ctx.slice.point(x0, plan.k * x0 + plan.b);
  Vec3 up = -(ctx.slice.x_axis + plan.k * ctx.slice.y_axis).normalized();
  if (up.z() < 0.0) up = -up;
  if (up.z() < 1e-12) throw InvalidInput("planner", "evaluate_plan", "needle line never reaches the scanning surface");
  rep.target_point = target;
  rep.entry_point = target + up * ((ctx.surface_z - target.z()) / up.z());
  for (const auto& rib : ctx.ribs)
    if (segment_intersects_box(rep.entry_point, rep.target_point, rib)) rep.rib_contact = true;
  return rep;
}

}  // namespace cbctus
