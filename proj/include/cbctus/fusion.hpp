#pragma once

// US -> CBCT fusion: nearest-voxel splatting of segmented vessel pixels and
// Doppler pixels, centerline tracks from per-frame mask centroids, and the
// track-to-centerline mapping error.
//
// Every function here takes `us_to_cbct`, the pose of {u} in {c}: it maps
// image-plane points into the CBCT frame. In the T^x_y naming of
// calibration.hpp this is (T^u_c)^-1.

#include <cbctus/errors.hpp>
#include <cbctus/geometry.hpp>
#include <cbctus/grid.hpp>
#include <cbctus/phantom.hpp>
#include <cbctus/slice.hpp>
#include <cbctus/stats.hpp>
#include <cbctus/ussim.hpp>
#include <cbctus/vessel_segmentation.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace cbctus {

struct FusedVolume {
  CbctVolume base;
  std::vector<std::uint8_t> vessel;       // 1 where a vessel pixel landed
  std::vector<std::uint8_t> doppler;      // 1 where a Doppler pixel landed
  std::vector<std::uint32_t> provenance;  // vessel pixels mapped into the voxel
  std::size_t outside_count = 0;          // pixels that fell off the grid

  explicit FusedVolume(CbctVolume b) : base(std::move(b)) {
    const std::size_t n = base.geometry.voxel_count();
    vessel.assign(n, 0);
    doppler.assign(n, 0);
    provenance.assign(n, 0);
  }

  const VolumeGeometry& geometry() const { return base.geometry; }
  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count(vessel.begin(), vessel.end(), std::uint8_t{1}));
  }
};

struct MappingStats {
  std::size_t mapped = 0;
  std::size_t outside = 0;
};

namespace detail {

template <class Visit>
MappingStats splat_pixels(std::span<const Pixel> pixels, const RigidTransform& us_to_cbct, const ProbeModel& probe,
                          const VolumeGeometry& g, Visit&& visit) {
  MappingStats s;
  for (const Pixel& px : pixels) {
    const Vec3 p = apply_point(us_to_cbct, pixel_to_us_point(probe, px.u, px.v));
    const auto n = g.nearest(p);
    if (!g.contains(n[0], n[1], n[2])) {
      ++s.outside;
      continue;
    }
    visit(g.index(n[0], n[1], n[2]));
    ++s.mapped;
  }
  return s;
}

}  // namespace detail

/// Each mask pixel goes to its nearest voxel; off-grid pixels are counted.
inline MappingStats map_mask_to_volume(const VesselMask& mask, const RigidTransform& us_to_cbct,
                                       const ProbeModel& probe, FusedVolume& fused) {
  if (mask.width != probe.width || mask.height != probe.height)
    throw InvalidInput("fusion", "map_mask_to_volume", "mask size does not match the probe model");
  const MappingStats s = detail::splat_pixels(mask.pixels, us_to_cbct, probe, fused.geometry(), [&](std::size_t i) {
    fused.vessel[i] = 1;
    ++fused.provenance[i];
  });
  fused.outside_count += s.outside;
  return s;
}

inline MappingStats map_doppler_to_volume(const Image<std::uint8_t>& doppler, const RigidTransform& us_to_cbct,
                                          const ProbeModel& probe, FusedVolume& fused) {
  std::vector<Pixel> pixels;
  for (int v = 0; v < doppler.height; ++v)
    for (int u = 0; u < doppler.width; ++u)
      if (doppler.at(u, v)) pixels.push_back({u, v});
  return detail::splat_pixels(pixels, us_to_cbct, probe, fused.geometry(),
                              [&](std::size_t i) { fused.doppler[i] = 1; });
}

struct SegmentedFrame {
  UsFrame frame;
  std::vector<VesselMask> masks;
  RigidTransform us_to_cbct;
};

/// Folds every frame's masks and raw Doppler into a copy of `base`. The
/// result does not depend on frame order.
inline FusedVolume fuse_sweep(std::span<const SegmentedFrame> frames, const CbctVolume& base, const ProbeModel& probe) {
  if (frames.empty()) throw InvalidInput("fusion", "fuse_sweep", "need at least one frame");
  FusedVolume fused(base);
  for (const auto& f : frames) {
    for (const auto& m : f.masks) map_mask_to_volume(m, f.us_to_cbct, probe, fused);
    map_doppler_to_volume(f.frame.doppler, f.us_to_cbct, probe, fused);
  }
  return fused;
}

// --- centerline tracks ------------------------------------------------------

struct FrameCentroids {
  int frame_index = 0;
  std::vector<Centroid> centroids;  // mask centroids in pixels
  RigidTransform us_to_cbct;
};

struct UsCenterlineTrack {
  int id = 0;
  std::vector<int> frames;
  std::vector<Vec3> points;  // in {c}, ordered by frame
};

struct TrackingResult {
  std::vector<UsCenterlineTrack> tracks;
  std::vector<std::string> warnings;
};

inline FrameCentroids frame_centroids(const SegmentedFrame& f) {
  FrameCentroids c{f.frame.index, {}, f.us_to_cbct};
  for (const auto& m : f.masks) c.centroids.push_back(m.centroid);
  return c;
}

/// Greedy nearest-neighbour association of mask centroids across frames.
/// A centroid joins the track whose latest point is closest, within
/// `gate_mm`; conflicts are resolved by smaller distance, then track id.
/// Unmatched centroids open new tracks.
inline TrackingResult extract_us_centerline_tracks(std::span<const FrameCentroids> frames, const ProbeModel& probe,
                                                   double gate_mm = 5.0) {
  TrackingResult out;
  for (const auto& f : frames) {
    std::vector<Vec3> pts;
    for (const auto& c : f.centroids) pts.push_back(apply_point(f.us_to_cbct, pixel_to_us_point(probe, c.x(), c.y())));

    std::vector<std::tuple<double, int, std::size_t>> cand;  // distance, track, point
    std::vector<int> per_point(pts.size(), 0);
    std::vector<int> per_track(out.tracks.size(), 0);
    for (std::size_t t = 0; t < out.tracks.size(); ++t)
      for (std::size_t p = 0; p < pts.size(); ++p) {
        const double d = (out.tracks[t].points.back() - pts[p]).norm();
        if (d <= gate_mm) {
          cand.emplace_back(d, out.tracks[t].id, p);
          ++per_point[p];
          ++per_track[t];
        }
      }
    for (std::size_t p = 0; p < pts.size(); ++p)
      if (per_point[p] > 1)
        out.warnings.push_back("frame " + std::to_string(f.frame_index) + ": centroid " + std::to_string(p) +
                               " is within the gate of " + std::to_string(per_point[p]) + " tracks");
    for (std::size_t t = 0; t < per_track.size(); ++t)
      if (per_track[t] > 1)
        out.warnings.push_back("frame " + std::to_string(f.frame_index) + ": track " +
                               std::to_string(out.tracks[t].id) + " has " + std::to_string(per_track[t]) +
                               " candidates within the gate");
    std::sort(cand.begin(), cand.end());

    std::vector<bool> track_used(out.tracks.size(), false);
    std::vector<bool> point_used(pts.size(), false);
    for (const auto& [d, id, p] : cand) {
      const auto t = static_cast<std::size_t>(id);  // ids equal positions
      if (track_used[t] || point_used[p]) continue;
      track_used[t] = point_used[p] = true;
      out.tracks[t].frames.push_back(f.frame_index);
      out.tracks[t].points.push_back(pts[p]);
    }
    for (std::size_t p = 0; p < pts.size(); ++p) {
      if (point_used[p]) continue;
      UsCenterlineTrack tr;
      tr.id = static_cast<int>(out.tracks.size());
      tr.frames.push_back(f.frame_index);
      tr.points.push_back(pts[p]);
      out.tracks.push_back(std::move(tr));
    }
  }
  return out;
}

// --- mapping error -------------------------------------------------------------

struct TrackError {
  int track_id = 0;
  std::size_t centerline = 0;  // index of the matched ground-truth centerline
  std::vector<double> distances_mm;
  ResidualStats stats;
};

struct MappingErrorReport {
  std::vector<TrackError> tracks;
  ResidualStats global;
};

/// Point-to-polyline distance of every track point to the ground-truth
/// centerline that is closest to the track on average.
inline MappingErrorReport mapping_error(std::span<const UsCenterlineTrack> tracks,
                                        std::span<const Polyline> centerlines) {
  if (tracks.empty()) throw InvalidInput("fusion", "mapping_error", "no tracks");
  if (centerlines.empty()) throw InvalidInput("fusion", "mapping_error", "no ground-truth centerlines");
  MappingErrorReport rep;
  std::vector<double> all;
  for (const auto& tr : tracks) {
    if (tr.points.empty())
      throw InvalidInput("fusion", "mapping_error", "track " + std::to_string(tr.id) + " is empty");
    TrackError te;
    te.track_id = tr.id;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centerlines.size(); ++c) {
      std::vector<double> d;
      d.reserve(tr.points.size());
      for (const Vec3& p : tr.points) d.push_back(point_polyline_distance(p, centerlines[c]));
      const double mean = summarize(d).mean;
      if (mean < best) {
        best = mean;
        te.centerline = c;
        te.distances_mm = std::move(d);
      }
    }
    te.stats = summarize(te.distances_mm);
    all.insert(all.end(), te.distances_mm.begin(), te.distances_mm.end());
    rep.tracks.push_back(std::move(te));
  }
  rep.global = summarize(all);
  return rep;
}

// --- slices ------------------------------------------------------------------

inline constexpr float kVesselOverlayValue = 1000.0f;
inline constexpr float kDopplerOverlayValue = 900.0f;

/// Trilinear resample of the CBCT intensity on the slice raster. With
/// `overlay`, voxels carrying a vessel (or else Doppler) label replace the
/// intensity with a distinct marker value.
inline Image<float> fused_slice(const FusedVolume& fused, const SliceFrame& plane, bool overlay = true) {
  plane.validate("fusion", "fused_slice");
  const VolumeGeometry& g = fused.geometry();
  const Vec3 lo = g.lower_bound();
  const Vec3 hi = g.upper_bound();
  Image<float> img(plane.width, plane.height);
  bool any_inside = false;
  for (int j = 0; j < plane.height; ++j)
    for (int i = 0; i < plane.width; ++i) {
      const Vec3 p = plane.cell(i, j);
      if ((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all()) any_inside = true;
      float v = static_cast<float>(sample_trilinear(g, fused.base.voxels, p));
      if (overlay) {
        if (sample_nearest<std::uint8_t>(g, fused.vessel, p, 0))
          v = kVesselOverlayValue;
        else if (sample_nearest<std::uint8_t>(g, fused.doppler, p, 0))
          v = kDopplerOverlayValue;
      }
      img.at(i, j) = v;
    }
  if (!any_inside) throw InvalidInput("fusion", "fused_slice", "slice plane does not intersect the volume");
  return img;
}

}  // namespace cbctus
