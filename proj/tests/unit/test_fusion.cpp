#include <cbctus/pipeline.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace cbctus;

namespace {

struct SweepData {
  PhantomScene scene = build_default_phantom();
  ProbeModel probe;
  std::vector<RigidTransform> poses;
  std::vector<SegmentedFrame> frames;
};

const SweepData& sweep() {
  static const SweepData data = [] {
    SweepData d;
    d.poses = generate_fan_sweep(default_fan_sweep(d.scene));
    for (std::size_t i = 0; i < d.poses.size(); ++i) {
      RenderOptions o;
      o.index = static_cast<int>(i);
      UsFrame f = render_frame(d.scene, d.poses[i], d.probe, o);
      auto seg = segment_frame(f, d.probe);
      d.frames.push_back({std::move(f), std::move(seg.masks), d.poses[i]});
    }
    return d;
  }();
  return data;
}

// Empty base volume on the default lattice; fusion never reads intensities.
CbctVolume blank_volume(const VolumeGeometry& g = {}) {
  CbctVolume v;
  v.geometry = g;
  v.voxels.assign(g.voxel_count(), 0.0f);
  return v;
}

// Distance from a point to the union of lumen cylinders (0 inside).
double distance_to_lumen(const PhantomScene& s, const Vec3& p) {
  double best = 1e300;
  for (const auto& t : s.tubes) {
    const Vec3 d = t.end - t.start;
    const double len = d.norm();
    const Vec3 a = d / len;
    const double along = (p - t.start).dot(a);
    const double radial = (p - t.start - along * a).norm();
    const double out_r = std::max(0.0, radial - t.inner_radius);
    const double out_a = std::max({0.0, -along, along - len});
    best = std::min(best, std::hypot(out_r, out_a));
  }
  return best;
}

std::set<std::size_t> labeled(const FusedVolume& f) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < f.vessel.size(); ++i)
    if (f.vessel[i]) out.insert(i);
  return out;
}

std::size_t symmetric_difference(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  std::vector<std::size_t> d;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(d));
  return d.size();
}

std::vector<RigidTransform> shifted(const std::vector<RigidTransform>& poses, const Vec3& t) {
  return inject_translation(poses, t);
}

}  // namespace

TEST(MapMask, IdentityPoseOriginPixel) {
  const ProbeModel probe;
  FusedVolume fused(blank_volume());
  VesselMask m;
  m.width = probe.width;
  m.height = probe.height;
  m.pixels = {{probe.width / 2, 0}};
  const MappingStats s = map_mask_to_volume(m, RigidTransform::identity(), probe, fused);
  EXPECT_EQ(s.mapped, 1u);
  const auto n = fused.geometry().nearest(Vec3::Zero());
  EXPECT_EQ(fused.vessel[fused.geometry().index(n[0], n[1], n[2])], 1);
  EXPECT_EQ(fused.provenance[fused.geometry().index(n[0], n[1], n[2])], 1u);
}

TEST(MapMask, OffGridPixelsAreCounted) {
  const ProbeModel probe;
  FusedVolume fused(blank_volume());
  VesselMask m;
  m.width = probe.width;
  m.height = probe.height;
  m.pixels = {{0, 0}, {probe.width / 2, 10}};
  const MappingStats s = map_mask_to_volume(m, RigidTransform::from_translation(Vec3(0, 0, 60)), probe, fused);
  EXPECT_EQ(s.mapped + s.outside, 2u);
  EXPECT_EQ(fused.outside_count, s.outside);
  EXPECT_EQ(s.outside, 1u);
  m.width = 10;
  EXPECT_THROW(map_mask_to_volume(m, RigidTransform::identity(), probe, fused), InvalidInput);
}

TEST(FuseSweep, EmptyMasksLeaveBaseUntouched) {
  const SweepData& d = sweep();
  std::vector<SegmentedFrame> frames;
  for (const auto& f : d.frames) {
    SegmentedFrame g = f;
    g.masks.clear();
    g.frame.doppler = Image<std::uint8_t>(d.probe.width, d.probe.height);
    frames.push_back(std::move(g));
  }
  const CbctVolume base = voxelize(d.scene, VolumeGeometry{});
  const FusedVolume fused = fuse_sweep(frames, base, d.probe);
  EXPECT_EQ(fused.labeled_count(), 0u);
  EXPECT_EQ(fused.base.voxels, base.voxels);
  EXPECT_EQ(std::count(fused.doppler.begin(), fused.doppler.end(), 1), 0);
  EXPECT_THROW(fuse_sweep(std::span<const SegmentedFrame>{}, base, d.probe), InvalidInput);
}

TEST(FuseSweep, EveryTubeReceivesLabels) {
  const SweepData& d = sweep();
  const FusedVolume fused = fuse_sweep(d.frames, blank_volume(), d.probe);
  std::set<int> tubes;
  const VolumeGeometry& g = fused.geometry();
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i)
        if (fused.vessel[g.index(i, j, k)]) {
          const Vec3 c = g.center(i, j, k);
          for (std::size_t t = 0; t < d.scene.tubes.size(); ++t)
            if (tube_radial_distance(d.scene.tubes[t], c) >= 0.0 &&
                tube_radial_distance(d.scene.tubes[t], c) <= d.scene.tubes[t].outer_radius())
              tubes.insert(static_cast<int>(t));
        }
  EXPECT_EQ(tubes, (std::set<int>{0, 1, 2}));
}

TEST(FuseSweep, LabeledVoxelsHugTheLumen) {
  const SweepData& d = sweep();
  const FusedVolume fused = fuse_sweep(d.frames, blank_volume(), d.probe);
  const VolumeGeometry& g = fused.geometry();
  const double bound = 0.5 * g.voxel_diagonal() + d.probe.spacing_mm;
  double worst = 0.0;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const std::size_t idx = g.index(i, j, k);
        if (!fused.vessel[idx]) continue;
        ASSERT_GE(fused.provenance[idx], 1u);
        worst = std::max(worst, distance_to_lumen(d.scene, g.center(i, j, k)));
      }
  EXPECT_LE(worst, bound);
}

TEST(FuseSweep, ProvenanceCountsMappedPixels) {
  const SweepData& d = sweep();
  const FusedVolume fused = fuse_sweep(d.frames, blank_volume(), d.probe);
  std::size_t pixels = 0;
  for (const auto& f : d.frames)
    for (const auto& m : f.masks) pixels += m.pixels.size();
  std::uint64_t total = 0;
  for (auto p : fused.provenance) total += p;
  EXPECT_EQ(total + fused.outside_count, pixels);

  // Spot check one voxel against a per-frame recount.
  const VolumeGeometry& g = fused.geometry();
  const auto it = std::max_element(fused.provenance.begin(), fused.provenance.end());
  const auto target = static_cast<std::size_t>(it - fused.provenance.begin());
  std::uint32_t recount = 0;
  for (const auto& f : d.frames)
    for (const auto& m : f.masks)
      for (const Pixel& p : m.pixels) {
        const auto n = g.nearest(f.us_to_cbct * pixel_to_us_point(d.probe, p.u, p.v));
        if (g.contains(n[0], n[1], n[2]) && g.index(n[0], n[1], n[2]) == target) ++recount;
      }
  EXPECT_EQ(recount, *it);
}

TEST(FuseSweep, IndependentOfFrameOrder) {
  const SweepData& d = sweep();
  std::vector<SegmentedFrame> reversed(d.frames.rbegin(), d.frames.rend());
  const FusedVolume a = fuse_sweep(d.frames, blank_volume(), d.probe);
  const FusedVolume b = fuse_sweep(reversed, blank_volume(), d.probe);
  EXPECT_EQ(a.vessel, b.vessel);
  EXPECT_EQ(a.doppler, b.doppler);
  EXPECT_EQ(a.provenance, b.provenance);
}

TEST(FuseSweep, ShiftedCalibrationShiftsLabels) {
  const SweepData& d = sweep();
  const FusedVolume exact = fuse_sweep(d.frames, blank_volume(), d.probe);
  std::vector<SegmentedFrame> moved = d.frames;
  for (auto& f : moved) f.us_to_cbct = RigidTransform::from_translation(Vec3(2, 0, 0)) * f.us_to_cbct;
  const FusedVolume shifted_fused = fuse_sweep(moved, blank_volume(), d.probe);
  const VolumeGeometry& g = exact.geometry();
  std::set<std::size_t> expected;
  for (std::size_t idx : labeled(exact)) {
    const int i = static_cast<int>(idx % g.dims[0]);
    const int j = static_cast<int>((idx / g.dims[0]) % g.dims[1]);
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(g.dims[0]) * g.dims[1]));
    expected.insert(g.index(i + 4, j, k));  // 2 mm = 4 voxels
  }
  const auto got = labeled(shifted_fused);
  EXPECT_LE(symmetric_difference(expected, got), expected.size() / 100);
}

TEST(FuseSweep, RigidTranslationOfEverythingKeepsVoxelSet) {
  const SweepData& d = sweep();
  const Vec3 g_shift(3.5, -1.0, 2.5);  // whole voxels
  VolumeGeometry moved_geom;
  moved_geom.origin += g_shift;
  std::vector<SegmentedFrame> moved = d.frames;
  for (auto& f : moved) f.us_to_cbct = RigidTransform::from_translation(g_shift) * f.us_to_cbct;
  const auto a = labeled(fuse_sweep(d.frames, blank_volume(), d.probe));
  const auto b = labeled(fuse_sweep(moved, blank_volume(moved_geom), d.probe));
  EXPECT_LE(symmetric_difference(a, b), a.size() / 100);
}

TEST(Tracks, SingleTubeOneTrack) {
  PhantomScene s;
  s.tank = Box{Vec3(-62, -62, -62), Vec3(62, 62, 40)};
  s.lesion = {Vec3(0, 0, -50), 5.0};
  s.tubes = {Tube{Vec3(10, -60, -10), Vec3(10, 60, -10), 4.0, 1.0, true}};
  const ProbeModel probe;
  const auto poses = generate_fan_sweep(default_fan_sweep(s));
  const auto res = run_sweep_fusion(s, nullptr, probe, poses, poses);
  ASSERT_EQ(res.tracking.tracks.size(), 1u);
  EXPECT_EQ(res.tracking.tracks[0].points.size(), poses.size());
  EXPECT_TRUE(std::is_sorted(res.tracking.tracks[0].frames.begin(), res.tracking.tracks[0].frames.end()));
}

TEST(Tracks, ThreeTracksNearTheAxes) {
  const SweepData& d = sweep();
  std::vector<FrameCentroids> c;
  for (const auto& f : d.frames) c.push_back(frame_centroids(f));
  const TrackingResult tr = extract_us_centerline_tracks(c, d.probe);
  ASSERT_EQ(tr.tracks.size(), 3u);
  EXPECT_TRUE(tr.warnings.empty());
  for (const auto& track : tr.tracks) {
    EXPECT_EQ(track.points.size(), d.frames.size());
    for (const Vec3& p : track.points) {
      double best = 1e9;
      for (const auto& t : d.scene.tubes) best = std::min(best, point_segment_distance(p, t.start, t.end));
      EXPECT_LE(best, d.probe.spacing_mm);
    }
  }
}

TEST(Tracks, AmbiguityIsLoggedAndResolvedByDistance) {
  const ProbeModel probe;
  const RigidTransform id;
  const double s = probe.spacing_mm;
  const double c = probe.width / 2.0;
  std::vector<FrameCentroids> frames{
      {0, {Centroid(c, 100), Centroid(c + 10.0 / s, 100)}, id},
      {1, {Centroid(c + 3.0 / s, 100)}, id},
  };
  const TrackingResult tr = extract_us_centerline_tracks(frames, probe, 8.0);
  ASSERT_EQ(tr.tracks.size(), 2u);
  EXPECT_EQ(tr.tracks[0].points.size(), 2u);  // 3 mm beats 7 mm
  EXPECT_EQ(tr.tracks[1].points.size(), 1u);
  EXPECT_FALSE(tr.warnings.empty());
}

TEST(MappingError, ZeroOnTheCenterline) {
  const Polyline gt{Vec3(0, 0, 0), Vec3(0, 100, 0)};
  UsCenterlineTrack t;
  for (int i = 0; i <= 10; ++i) t.points.emplace_back(0, 10.0 * i, 0);
  const auto rep = mapping_error(std::vector{t}, std::vector<Polyline>{gt});
  EXPECT_EQ(rep.global.mean, 0.0);
  EXPECT_EQ(rep.global.max, 0.0);
}

TEST(MappingError, PerpendicularShift) {
  const Polyline gt{Vec3(0, 0, 0), Vec3(0, 100, 0)};
  UsCenterlineTrack t;
  for (int i = 0; i <= 10; ++i) t.points.emplace_back(2.0 / std::sqrt(2.0), 10.0 * i, 2.0 / std::sqrt(2.0));
  const auto rep = mapping_error(std::vector{t}, std::vector<Polyline>{gt});
  EXPECT_NEAR(rep.global.mean, 2.0, 1e-12);
  EXPECT_NEAR(rep.global.std, 0.0, 1e-12);
  EXPECT_NEAR(rep.tracks[0].stats.mean, 2.0, 1e-12);
}

TEST(MappingError, AssignsNearestCenterline) {
  const std::vector<Polyline> gt{{Vec3(0, 0, 0), Vec3(0, 100, 0)}, {Vec3(20, 0, 0), Vec3(20, 100, 0)}};
  UsCenterlineTrack t;
  t.points = {Vec3(19, 5, 0), Vec3(21, 50, 0)};
  const auto rep = mapping_error(std::vector{t}, gt);
  EXPECT_EQ(rep.tracks[0].centerline, 1u);
  EXPECT_NEAR(rep.global.mean, 1.0, 1e-12);
}

TEST(MappingError, RejectsEmptyInput) {
  const std::vector<Polyline> gt{{Vec3(0, 0, 0), Vec3(0, 1, 0)}};
  EXPECT_THROW(mapping_error(std::vector<UsCenterlineTrack>{}, gt), InvalidInput);
  EXPECT_THROW(mapping_error(std::vector<UsCenterlineTrack>(1), gt), InvalidInput);
}

TEST(Pipeline, ExactCalibrationWithinBound) {
  const SweepData& d = sweep();
  const auto res = run_sweep_fusion(d.scene, nullptr, d.probe, d.poses, d.poses);
  ASSERT_TRUE(res.error);
  EXPECT_EQ(res.error->tracks.size(), 3u);
  EXPECT_LE(res.error->global.mean, d.probe.spacing_mm + 0.5 * VolumeGeometry{}.voxel_diagonal());
}

TEST(Pipeline, InjectedOffsetShowsUpAsError) {
  const SweepData& d = sweep();
  const double tol = d.probe.spacing_mm + 0.5 * VolumeGeometry{}.voxel_diagonal();
  Rng rng(3);
  const Vec3 off = perpendicular_offset(1.7, Vec3::UnitY(), rng);
  EXPECT_NEAR(off.norm(), 1.7, 1e-12);
  EXPECT_NEAR(off.y(), 0.0, 1e-12);
  const auto res = run_sweep_fusion(d.scene, nullptr, d.probe, d.poses, shifted(d.poses, off));
  ASSERT_TRUE(res.error);
  EXPECT_GE(res.error->global.mean, 1.2);
  EXPECT_LE(res.error->global.mean, 2.2);
  EXPECT_NEAR(res.error->global.mean, 1.7, tol);
}

TEST(FusedSlice, LesionDiskOnAxialPlane) {
  const SweepData& d = sweep();
  const CbctVolume base = voxelize(d.scene, VolumeGeometry{});
  const FusedVolume fused(base);
  SliceFrame plane;
  plane.origin = Vec3(-20, 0, -50);
  plane.x_axis = Vec3::UnitX();
  plane.y_axis = Vec3::UnitZ();
  plane.width = 81;
  plane.height = 81;
  const Image<float> img = fused_slice(fused, plane);
  for (int j = 0; j < plane.height; ++j)
    for (int i = 0; i < plane.width; ++i) {
      const Vec3 p = plane.cell(i, j);
      const double r = (p - d.scene.lesion.center).norm();
      if (r < d.scene.lesion.radius - 0.5) {
        ASSERT_EQ(img.at(i, j), 300.0f) << i << ',' << j;
      }
      if (r > d.scene.lesion.radius + 0.5 && distance_to_lumen(d.scene, p) > 3.0) {
        ASSERT_NE(img.at(i, j), 300.0f) << i << ',' << j;
      }
    }
}

TEST(FusedSlice, OverlayOffIsPlainResample) {
  const SweepData& d = sweep();
  const CbctVolume base = voxelize(d.scene, VolumeGeometry{});
  const FusedVolume fused = fuse_sweep(d.frames, base, d.probe);
  SliceFrame plane;
  plane.origin = Vec3(-60, 0.25, -60);
  plane.x_axis = Vec3::UnitX();
  plane.y_axis = Vec3::UnitZ();
  plane.spacing_mm = 0.3;
  plane.width = 400;
  plane.height = 330;
  const Image<float> plain = fused_slice(fused, plane, false);
  for (int j = 0; j < plane.height; ++j)
    for (int i = 0; i < plane.width; ++i)
      ASSERT_EQ(plain.at(i, j), static_cast<float>(sample_trilinear(base.geometry, base.voxels, plane.cell(i, j))));
  const Image<float> over = fused_slice(fused, plane, true);
  EXPECT_GT(std::count(over.data.begin(), over.data.end(), kVesselOverlayValue), 0);
}

TEST(FusedSlice, PlaneOutsideVolume) {
  const FusedVolume fused(blank_volume());
  SliceFrame plane;
  plane.origin = Vec3(0, 0, 500);
  plane.width = 10;
  plane.height = 10;
  EXPECT_THROW(fused_slice(fused, plane), InvalidInput);
}
