#pragma once

// Seeded sampling helpers. All randomness in the library flows through an
// explicitly seeded std::mt19937_64; there are no wall-clock seeds.

#include <cbctus/geometry.hpp>

#include <cstdint>
#include <random>

namespace cbctus {

using Rng = std::mt19937_64;

/// Uniformly distributed rotation (normalized Gaussian quaternion).
inline Rotation random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return Rotation::from_quaternion(q);
}

inline Vec3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

/// Random rotation plus translation uniform in [-scale, scale]^3.
inline RigidTransform random_transform(Rng& rng, double translation_scale) {
  std::uniform_real_distribution<double> u(-translation_scale, translation_scale);
  const Rotation r = random_rotation(rng);
  return {r, Vec3(u(rng), u(rng), u(rng))};
}

/// Noise model: rotation about a uniformly random axis by a N(0, sigma) angle,
/// isotropic Gaussian translation. Returns the perturbation only.
inline RigidTransform sample_noise(Rng& rng, double sigma_rot_deg, double sigma_trans_mm) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 axis = random_unit_vector(rng);
  const double angle = sigma_rot_deg * n(rng);
  const Vec3 t(sigma_trans_mm * n(rng), sigma_trans_mm * n(rng), sigma_trans_mm * n(rng));
  return {Rotation::from_axis_angle(axis, angle), t};
}

/// Right-perturbs `t` (noise expressed in the child frame).
inline RigidTransform perturb(const RigidTransform& t, Rng& rng, double sigma_rot_deg,
                              double sigma_trans_mm) {
  if (sigma_rot_deg == 0.0 && sigma_trans_mm == 0.0) return t;
  return t * sample_noise(rng, sigma_rot_deg, sigma_trans_mm);
}

/// Independent per-trial seed derived from a base seed (splitmix64 step).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace cbctus
