#pragma once

// Geometric ultrasound simulator. A frame is rendered by classifying the 3D
// point behind every pixel against the analytic phantom; there is no wave
// physics beyond a binary acoustic shadow below rib material.
//
// US image frame {u}: origin at the top-center of the image, x lateral
// (increasing pixel column u), y depth (increasing pixel row v), z = x cross y
// (elevation). The image plane is z = 0.

#include <cbctus/errors.hpp>
#include <cbctus/geometry.hpp>
#include <cbctus/grid.hpp>
#include <cbctus/phantom.hpp>
#include <cbctus/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace cbctus {

struct ProbeModel {
  int width = 880;
  int height = 660;
  double spacing_mm = 0.15;
  /// Needle-holder insertion angle against the probe face.
  double needle_angle_deg = 39.0;
  /// Depth at which the needle line crosses the image's center column.
  double needle_crossing_depth_mm = 70.0;

  void validate() const {
    if (width < 1 || height < 1) throw InvalidInput("ussim", "ProbeModel", "image size must be >= 1");
    if (!(spacing_mm > 0.0)) throw InvalidInput("ussim", "ProbeModel", "spacing must be > 0");
    if (!(needle_angle_deg > 0.0 && needle_angle_deg < 90.0))
      throw InvalidInput("ussim", "ProbeModel", "needle angle must be in (0, 90) degrees");
  }

  /// Needle angle measured from the depth axis (the probe-face normal).
  double needle_angle_from_normal_deg() const { return 90.0 - needle_angle_deg; }

  /// Point on the needle line where it crosses the center column, in {u}.
  Vec3 needle_anchor() const { return {0.0, needle_crossing_depth_mm, 0.0}; }

  /// Unit needle direction in {u}, pointing into the body.
  Vec3 needle_direction() const {
    const double a = needle_angle_from_normal_deg() * kDegToRad;
    return {std::sin(a), std::cos(a), 0.0};
  }
};

/// Pixel (u, v) to the image plane of {u}. Fractional pixels are accepted.
inline Vec3 pixel_to_us_point(const ProbeModel& probe, double u, double v) {
  if (!(u >= 0.0 && v >= 0.0 && u < probe.width && v < probe.height))
    throw InvalidInput("ussim", "pixel_to_us_point",
                       "pixel (" + std::to_string(u) + ", " + std::to_string(v) + ") outside the image");
  return {(u - 0.5 * probe.width) * probe.spacing_mm, v * probe.spacing_mm, 0.0};
}

/// Inverse of pixel_to_us_point for in-plane points (z is ignored).
inline Eigen::Vector2d us_point_to_pixel(const ProbeModel& probe, const Vec3& p) {
  return {p.x() / probe.spacing_mm + 0.5 * probe.width, p.y() / probe.spacing_mm};
}

/// B-mode gray levels per material.
struct UsIntensityTable {
  float background = 0.0f;  // outside the tank
  float water = 40.0f;
  float lumen = 20.0f;
  float wall = 220.0f;
  float lesion = 140.0f;
  float rib = 250.0f;
  float shadow = 0.0f;

  float of(Material m) const {
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

struct RenderOptions {
  UsIntensityTable intensities;
  double speckle_sigma = 0.0;  // additive Gaussian noise on B-mode, 0 disables
  double doppler_salt_fraction = 0.0;  // isolated false-positive Doppler pixels
  std::uint64_t seed = 0;
  int index = 0;
};

struct UsFrame {
  Image<float> bmode;
  Image<std::uint8_t> doppler;  // 1 where the imaged point is inside a flowing lumen
  RigidTransform capture_pose;   // pose of {u} in the rendering frame
  int index = 0;
};

/// Renders one frame from the pose of {u} in the phantom frame {c}.
inline UsFrame render_frame(const PhantomScene& scene, const RigidTransform& probe_pose_u_in_c,
                            const ProbeModel& probe, const RenderOptions& options = {}) {
  probe.validate();
  UsFrame f;
  f.bmode = Image<float>(probe.width, probe.height);
  f.doppler = Image<std::uint8_t>(probe.width, probe.height);
  f.capture_pose = probe_pose_u_in_c;
  f.index = options.index;

  const Vec3 ex = apply_vector(probe_pose_u_in_c, Vec3::UnitX()) * probe.spacing_mm;
  const Vec3 ey = apply_vector(probe_pose_u_in_c, Vec3::UnitY()) * probe.spacing_mm;
  const Vec3 corner = apply_point(probe_pose_u_in_c, pixel_to_us_point(probe, 0.0, 0.0));
  const UsIntensityTable& table = options.intensities;

  for (int u = 0; u < probe.width; ++u) {
    bool shadowed = false;
    for (int v = 0; v < probe.height; ++v) {
      const Vec3 p = corner + static_cast<double>(u) * ex + static_cast<double>(v) * ey;
      const Classification c = is_inside(scene, p);
      float value;
      if (c.material == Material::kRib) {
        value = table.rib;
        shadowed = true;
      } else {
        value = shadowed ? table.shadow : table.of(c.material);
      }
      f.bmode.at(u, v) = value;
      f.doppler.at(u, v) =
          c.material == Material::kLumen && scene.tubes[static_cast<std::size_t>(c.tube)].has_flow ? 1 : 0;
    }
  }

  if (options.speckle_sigma > 0.0) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(options.index)));
    std::normal_distribution<float> noise(0.0f, static_cast<float>(options.speckle_sigma));
    for (float& x : f.bmode.data) x = std::clamp(x + noise(rng), 0.0f, 255.0f);
  }
  if (options.doppler_salt_fraction > 0.0) {
    Rng rng(derive_seed(options.seed ^ 0x5A17ull, static_cast<std::uint64_t>(options.index)));
    std::bernoulli_distribution salt(std::min(options.doppler_salt_fraction, 1.0));
    for (auto& d : f.doppler.data)
      if (salt(rng)) d = 1;
  }
  return f;
}

struct FanSweepSpec {
  RigidTransform pivot;           // pose of {u} at the center of the fan
  Vec3 axis = Vec3::UnitX();      // rotation axis in {u}
  double range_deg = 30.0;        // full opening angle
  double step_deg = 1.0;
};

/// pivot * Rot(axis, theta) for theta = -range/2, -range/2 + step, ...
inline std::vector<RigidTransform> generate_fan_sweep(const FanSweepSpec& spec) {
  if (!(spec.step_deg > 0.0)) throw InvalidInput("ussim", "generate_fan_sweep", "step_deg must be > 0");
  if (!(spec.range_deg >= 0.0)) throw InvalidInput("ussim", "generate_fan_sweep", "range_deg must be >= 0");
  if (spec.axis.norm() == 0.0) throw InvalidInput("ussim", "generate_fan_sweep", "axis must be nonzero");
  const auto n = static_cast<int>(std::floor(spec.range_deg / spec.step_deg + 1e-9));
  std::vector<RigidTransform> poses;
  poses.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double theta = -0.5 * spec.range_deg + i * spec.step_deg;
    poses.push_back(spec.pivot * RigidTransform::from_rotation(Rotation::from_axis_angle(spec.axis, theta)));
  }
  return poses;
}

/// Probe on the water surface above (x, y), imaging the x-z plane, depth
/// pointing down.
inline RigidTransform probe_pose_on_surface(const PhantomScene& scene, double x = 0.0, double y = 0.0) {
  Mat3 r;
  r.col(0) = Vec3::UnitX();
  r.col(1) = -Vec3::UnitZ();
  r.col(2) = Vec3::UnitY();
  return {Rotation::from_matrix(r), Vec3(x, y, scene.scanning_surface_z())};
}

/// +-15 degree fan at 1 degree steps about the probe's lateral axis.
inline FanSweepSpec default_fan_sweep(const PhantomScene& scene) {
  return {probe_pose_on_surface(scene), Vec3::UnitX(), 30.0, 1.0};
}

}  // namespace cbctus
