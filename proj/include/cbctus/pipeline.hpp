#pragma once

// Sweep -> render -> segment -> fuse -> track -> mapping error, shared by the
// CLI and the acceptance suite.

#include <cbctus/fusion.hpp>
#include <cbctus/phantom.hpp>
#include <cbctus/random.hpp>
#include <cbctus/ussim.hpp>
#include <cbctus/vessel_segmentation.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cbctus {

struct SweepFusionOptions {
  RenderOptions render;
  SegmentFrameOptions segmentation;
  RegionGrowParams region_grow;
  double track_gate_mm = 5.0;
  double centerline_step_mm = 1.0;
};

struct SweepFusionResult {
  std::optional<FusedVolume> fused;
  TrackingResult tracking;
  std::optional<MappingErrorReport> error;  // absent when no vessel was tracked
  std::vector<std::size_t> masks_per_frame;
  std::vector<std::string> warnings;
};

/// Frames are rendered at `true_poses` and mapped with `mapping_poses` (both
/// poses of {u} in {c}). Pass no base volume to skip the voxel fusion.
inline SweepFusionResult run_sweep_fusion(const PhantomScene& scene, const CbctVolume* base, const ProbeModel& probe,
                                          std::span<const RigidTransform> true_poses,
                                          std::span<const RigidTransform> mapping_poses,
                                          const SweepFusionOptions& options = {}) {
  if (true_poses.size() != mapping_poses.size())
    throw InvalidInput("pipeline", "run_sweep_fusion", "need one mapping pose per rendered pose");
  if (true_poses.empty()) throw InvalidInput("pipeline", "run_sweep_fusion", "empty sweep");

  SweepFusionResult out;
  if (base) out.fused.emplace(*base);
  const RegionGrowSegmenter segmenter(options.region_grow);
  std::vector<FrameCentroids> centroids;
  for (std::size_t i = 0; i < true_poses.size(); ++i) {
    RenderOptions ro = options.render;
    ro.index = static_cast<int>(i);
    const UsFrame frame = render_frame(scene, true_poses[i], probe, ro);
    FrameSegmentation seg = segment_frame(frame, probe, segmenter, options.segmentation);
    out.warnings.insert(out.warnings.end(), seg.warnings.begin(), seg.warnings.end());
    out.masks_per_frame.push_back(seg.masks.size());
    if (out.fused) {
      for (const auto& m : seg.masks) map_mask_to_volume(m, mapping_poses[i], probe, *out.fused);
      map_doppler_to_volume(frame.doppler, mapping_poses[i], probe, *out.fused);
    }
    FrameCentroids fc{frame.index, {}, mapping_poses[i]};
    for (const auto& m : seg.masks) fc.centroids.push_back(m.centroid);
    centroids.push_back(std::move(fc));
  }
  out.tracking = extract_us_centerline_tracks(centroids, probe, options.track_gate_mm);
  out.warnings.insert(out.warnings.end(), out.tracking.warnings.begin(), out.tracking.warnings.end());
  if (!out.tracking.tracks.empty() && !scene.tubes.empty()) {
    const auto gt = ground_truth_centerlines(scene, options.centerline_step_mm);
    out.error = mapping_error(out.tracking.tracks, gt);
  }
  return out;
}

/// Offset of length `magnitude_mm` in a seeded direction perpendicular to
/// `axis` (the tube direction), so the whole offset shows up as distance to
/// the centerlines.
inline Vec3 perpendicular_offset(double magnitude_mm, const Vec3& axis, Rng& rng) {
  const Vec3 a = axis.normalized();
  const Vec3 e1 = a.unitOrthogonal();
  const Vec3 e2 = a.cross(e1);
  std::uniform_real_distribution<double> phi(0.0, 2.0 * std::numbers::pi);
  const double p = phi(rng);
  return magnitude_mm * (std::cos(p) * e1 + std::sin(p) * e2);
}

/// Shifts the mapped points by `offset` in {c}.
inline std::vector<RigidTransform> inject_translation(std::span<const RigidTransform> us_to_cbct, const Vec3& offset) {
  std::vector<RigidTransform> out;
  out.reserve(us_to_cbct.size());
  for (const auto& t : us_to_cbct) out.push_back(RigidTransform::from_translation(offset) * t);
  return out;
}

}  // namespace cbctus
