#pragma once

// Analytic validation phantom: three flow tubes above a spherical lesion, two
// rib strips under the water surface, all inside a water tank. Frame {c}:
// x lateral, y along the tubes, z up (the water surface is the tank top).

#include <cbctus/errors.hpp>
#include <cbctus/geometry.hpp>
#include <cbctus/grid.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace cbctus {

enum class Material : std::uint8_t {
  kBackground = 0,
  kWater = 1,
  kLumen = 2,
  kWall = 3,
  kLesion = 4,
  kRib = 5,
  kMappedVessel = 6,
};

inline const char* material_name(Material m) {
  switch (m) {
    case Material::kBackground: return "background";
    case Material::kWater: return "water";
    case Material::kLumen: return "lumen";
    case Material::kWall: return "wall";
    case Material::kLesion: return "lesion";
    case Material::kRib: return "rib";
    case Material::kMappedVessel: return "mapped_vessel";
  }
  return "unknown";
}

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool contains(const Box& b) const { return contains(b.min) && contains(b.max); }
  bool valid() const { return (min.array() < max.array()).all(); }
};

struct Tube {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::UnitY();
  double inner_radius = 1.0;
  double wall_thickness = 1.0;
  bool has_flow = true;

  double outer_radius() const { return inner_radius + wall_thickness; }
  double length() const { return (end - start).norm(); }
  Vec3 direction() const { return (end - start).normalized(); }
};

struct LesionSphere {
  Vec3 center = Vec3::Zero();
  double radius = 5.0;
};

using RibStrip = Box;

struct IntensityTable {
  double background = 0.0;
  double water = 0.0;
  double lumen = 10.0;
  double wall = 120.0;
  double lesion = 300.0;
  double rib = 700.0;

  double of(Material m) const {
    switch (m) {
      case Material::kWater: return water;
      case Material::kLumen: return lumen;
      case Material::kWall: return wall;
      case Material::kLesion: return lesion;
      case Material::kRib: return rib;
      default: return background;
    }
  }
};

struct PhantomScene {
  std::vector<Tube> tubes;
  LesionSphere lesion;
  std::vector<RibStrip> ribs;
  Box tank;
  IntensityTable intensities;

  double scanning_surface_z() const { return tank.max.z(); }

  void validate() const {
    const auto fail = [](const std::string& why) { throw InvalidInput("phantom", "validate", why); };
    if (!tank.valid()) fail("tank bounds must satisfy min < max");
    for (std::size_t i = 0; i < tubes.size(); ++i) {
      const Tube& t = tubes[i];
      const std::string name = "tubes[" + std::to_string(i) + "]";
      if (!(t.inner_radius > 0.0)) fail(name + ".inner_radius must be > 0");
      if (!(t.wall_thickness > 0.0)) fail(name + ".wall_thickness must be > 0");
      if (t.length() == 0.0) fail(name + ": start and end coincide");
      if (!tank.contains(t.start) || !tank.contains(t.end)) fail(name + " leaves the tank");
    }
    if (!(lesion.radius > 0.0)) fail("lesion.radius must be > 0");
    const Vec3 r = Vec3::Constant(lesion.radius);
    if (!tank.contains(Box{lesion.center - r, lesion.center + r})) fail("lesion leaves the tank");
    for (std::size_t i = 0; i < ribs.size(); ++i) {
      if (!ribs[i].valid()) fail("ribs[" + std::to_string(i) + "] must satisfy min < max");
      if (!tank.contains(ribs[i])) fail("ribs[" + std::to_string(i) + "] leaves the tank");
    }
  }
};

/// Point classification result; `tube` is the tube index for lumen/wall.
struct Classification {
  Material material = Material::kBackground;
  int tube = -1;
};

inline int material_priority(Material m) {
  switch (m) {
    case Material::kRib: return 5;
    case Material::kLesion: return 4;
    case Material::kWall: return 3;
    case Material::kLumen: return 2;
    case Material::kWater: return 1;
    default: return 0;
  }
}

/// Radial distance from the tube axis, or -1 beyond the end caps.
inline double tube_radial_distance(const Tube& t, const Vec3& p) {
  const Vec3 d = t.end - t.start;
  const double s = (p - t.start).dot(d) / d.squaredNorm();
  if (s < 0.0 || s > 1.0) return -1.0;
  return (p - (t.start + s * d)).norm();
}

/// Highest-priority material whose region contains `p`
/// (rib > lesion > wall > lumen > water; outside the tank is background).
inline Classification is_inside(const PhantomScene& scene, const Vec3& p) {
  if (!scene.tank.contains(p)) return {};
  for (const auto& rib : scene.ribs)
    if (rib.contains(p)) return {Material::kRib, -1};
  if ((p - scene.lesion.center).squaredNorm() <= scene.lesion.radius * scene.lesion.radius)
    return {Material::kLesion, -1};
  Classification best{Material::kWater, -1};
  for (std::size_t i = 0; i < scene.tubes.size(); ++i) {
    const Tube& t = scene.tubes[i];
    const double r = tube_radial_distance(t, p);
    if (r < 0.0) continue;
    if (r <= t.inner_radius) {
      if (material_priority(Material::kLumen) > material_priority(best.material))
        best = {Material::kLumen, static_cast<int>(i)};
    } else if (r <= t.outer_radius()) {
      return {Material::kWall, static_cast<int>(i)};
    }
  }
  return best;
}

/// Default layout. Tube inner diameters 7, 8 and 16 mm with 1 mm walls run
/// along y; the 10 mm lesion sits below them; one rib strip lies directly
/// above the lesion, the second one over the opposite flank.
inline PhantomScene build_default_phantom() {
  PhantomScene s;
  s.tank = Box{Vec3(-62.0, -62.0, -62.0), Vec3(62.0, 62.0, 40.0)};
  const auto tube = [](double x, double z, double inner_diameter) {
    return Tube{Vec3(x, -60.0, z), Vec3(x, 60.0, z), inner_diameter / 2.0, 1.0, true};
  };
  s.tubes = {tube(12.0, -12.0, 7.0), tube(-20.0, -18.0, 8.0), tube(42.0, -8.0, 16.0)};
  s.lesion = LesionSphere{Vec3(0.0, 0.0, -30.0), 5.0};
  s.ribs = {Box{Vec3(-8.0, -60.0, 28.0), Vec3(4.0, 60.0, 34.0)},
            Box{Vec3(20.0, -60.0, 28.0), Vec3(30.0, 60.0, 34.0)}};
  return s;
}

struct CbctVolume {
  VolumeGeometry geometry;
  std::vector<float> voxels;
  std::vector<std::uint8_t> labels;  // Material per voxel; empty when absent

  float value(int i, int j, int k) const { return voxels[geometry.index(i, j, k)]; }
  Material label(int i, int j, int k) const { return static_cast<Material>(labels[geometry.index(i, j, k)]); }
};

/// Center-point classification of every voxel. The grid must cover the tank.
inline CbctVolume voxelize(const PhantomScene& scene, const VolumeGeometry& geometry) {
  geometry.validate("phantom", "voxelize");
  scene.validate();
  const Vec3 lo = geometry.lower_bound();
  const Vec3 hi = geometry.upper_bound();
  if ((scene.tank.min.array() < lo.array()).any() || (scene.tank.max.array() > hi.array()).any())
    throw InvalidInput("phantom", "voxelize", "grid does not cover the tank bounds");

  CbctVolume vol;
  vol.geometry = geometry;
  vol.voxels.resize(geometry.voxel_count());
  vol.labels.resize(geometry.voxel_count());
  for (int k = 0; k < geometry.dims[2]; ++k)
    for (int j = 0; j < geometry.dims[1]; ++j)
      for (int i = 0; i < geometry.dims[0]; ++i) {
        const Material m = is_inside(scene, geometry.center(i, j, k)).material;
        const std::size_t idx = geometry.index(i, j, k);
        vol.labels[idx] = static_cast<std::uint8_t>(m);
        vol.voxels[idx] = static_cast<float>(scene.intensities.of(m));
      }
  return vol;
}

using Polyline = std::vector<Vec3>;

/// Uniform samples along each tube axis, endpoints included.
inline std::vector<Polyline> ground_truth_centerlines(const PhantomScene& scene, double step) {
  if (!(step > 0.0)) throw InvalidInput("phantom", "ground_truth_centerlines", "step must be > 0");
  std::vector<Polyline> out;
  for (const auto& t : scene.tubes) {
    const double len = t.length();
    const Vec3 dir = t.direction();
    Polyline line;
    const auto n = static_cast<std::size_t>(std::floor(len / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) line.push_back(t.start + dir * (static_cast<double>(i) * step));
    if (len - static_cast<double>(n) * step > 1e-9 * len) line.push_back(t.end);
    out.push_back(std::move(line));
  }
  return out;
}

inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double len2 = d.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + s * d)).norm();
}

inline double point_polyline_distance(const Vec3& p, const Polyline& line) {
  if (line.size() == 1) return (p - line.front()).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < line.size(); ++i)
    best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
  return best;
}

}  // namespace cbctus
