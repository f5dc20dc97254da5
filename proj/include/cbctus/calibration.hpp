#pragma once

// Robot-base <-> tracking-camera hand-eye calibration (AX = XB, Tsai-Lenz),
// the US -> CBCT registration chain and its update after the CBCT device is
// repositioned.

#include <cbctus/errors.hpp>
#include <cbctus/geometry.hpp>
#include <cbctus/random.hpp>
#include <cbctus/stats.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cbctus {

/// One recorded robot configuration.
///   t_e_b: T^e_b, robot base expressed in the end-effector frame (the inverse
///          of the forward-kinematics flange pose).
///   t_o_m: T^o_m, marker pose reported by the tracking camera.
struct AbsolutePoseSample {
  RigidTransform t_e_b;
  RigidTransform t_o_m;
};

/// Relative motions satisfying a * X = X * b for X = T^b_o.
struct MotionPair {
  RigidTransform a;
  RigidTransform b;
};

enum class PairingMode { kConsecutive, kAllPairs };

struct CalibrationSolution {
  RigidTransform x;  // T^b_o
  ResidualStats rotation_residual_deg;
  ResidualStats translation_residual_mm;
  std::size_t pair_count = 0;
  std::size_t rotation_pairs_used = 0;
};

struct TsaiLenzOptions {
  double min_rotation_deg = 1.0;
  double min_axis_angle_deg = 5.0;
};

/// Inputs of T^u_c = T^u_b * T^b_o * T^o_c.
struct RegistrationChain {
  RigidTransform t_u_b;
  RigidTransform t_b_o;
  RigidTransform t_o_c;
};

inline std::vector<MotionPair> build_motion_pairs(std::span<const AbsolutePoseSample> samples,
                                                  PairingMode mode = PairingMode::kConsecutive) {
  if (samples.size() < 2)
    throw InvalidInput("calibration", "build_motion_pairs",
                       "need at least 2 pose samples, got " + std::to_string(samples.size()));
  const auto make = [&](std::size_t i, std::size_t j) {
    return MotionPair{samples[j].t_e_b.inverse() * samples[i].t_e_b,
                      samples[j].t_o_m * samples[i].t_o_m.inverse()};
  };
  std::vector<MotionPair> pairs;
  if (mode == PairingMode::kConsecutive) {
    pairs.reserve(samples.size() - 1);
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) pairs.push_back(make(i, i + 1));
  } else {
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (std::size_t j = i + 1; j < samples.size(); ++j) pairs.push_back(make(i, j));
  }
  return pairs;
}

namespace detail {

// Tsai's rotation parameter 2 sin(theta/2) * axis, read off the quaternion.
inline Vec3 tsai_rotation_vector(const Rotation& r) { return 2.0 * r.quaternion().vec(); }

inline double axis_separation_deg(const Vec3& u, const Vec3& v) {
  const double c = std::clamp(u.normalized().dot(v.normalized()), -1.0, 1.0);
  return std::acos(c) * kRadToDeg;
}

}  // namespace detail

/// Per-pair |a X - X b| discrepancy.
inline void fill_residuals(std::span<const MotionPair> pairs, CalibrationSolution& sol) {
  std::vector<double> rot;
  std::vector<double> trans;
  rot.reserve(pairs.size());
  trans.reserve(pairs.size());
  for (const auto& p : pairs) {
    const RigidTransform lhs = p.a * sol.x;
    const RigidTransform rhs = sol.x * p.b;
    rot.push_back(rotation_distance(lhs.rotation(), rhs.rotation()));
    trans.push_back((lhs.translation() - rhs.translation()).norm());
  }
  sol.rotation_residual_deg = summarize(rot);
  sol.translation_residual_mm = summarize(trans);
}

/// Tsai-Lenz: rotation from the modified-Rodrigues linear system
///   skew(Pa + Pb) x' = Pb - Pa,
/// then translation from (Ra - I) t = R t_b - t_a, both in least squares
/// over all pairs. Pairs rotating less than `min_rotation_deg` are left out
/// of the rotation step only.
inline CalibrationSolution solve_tsai_lenz(std::span<const MotionPair> pairs,
                                           const TsaiLenzOptions& options = {}) {
  if (pairs.size() < 2)
    throw InvalidInput("calibration", "solve_tsai_lenz",
                       "need at least 2 motion pairs, got " + std::to_string(pairs.size()));

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (rotation_angle(pairs[i].a.rotation()) > options.min_rotation_deg &&
        rotation_angle(pairs[i].b.rotation()) > options.min_rotation_deg)
      usable.push_back(i);
  }
  if (usable.empty())
    throw DegenerateMotion("calibration", "solve_tsai_lenz",
                           "no motion pair rotates more than min_rotation_deg=" +
                               std::to_string(options.min_rotation_deg) + " (pure translation)");

  bool spread = false;
  for (std::size_t i = 0; i < usable.size() && !spread; ++i) {
    const Vec3 ai = axis_angle(pairs[usable[i]].a.rotation()).axis;
    for (std::size_t j = i + 1; j < usable.size(); ++j) {
      const double sep = detail::axis_separation_deg(ai, axis_angle(pairs[usable[j]].a.rotation()).axis);
      if (sep > options.min_axis_angle_deg && sep < 180.0 - options.min_axis_angle_deg) {
        spread = true;
        break;
      }
    }
  }
  if (!spread)
    throw DegenerateMotion("calibration", "solve_tsai_lenz",
                           "rotation axes are parallel within min_axis_angle_deg=" +
                               std::to_string(options.min_axis_angle_deg) +
                               "; at least two non-parallel axes are required");

  const auto n_rot = static_cast<Eigen::Index>(usable.size());
  Eigen::MatrixXd m(3 * n_rot, 3);
  Eigen::VectorXd rhs(3 * n_rot);
  for (Eigen::Index k = 0; k < n_rot; ++k) {
    const MotionPair& p = pairs[usable[static_cast<std::size_t>(k)]];
    const Vec3 pa = detail::tsai_rotation_vector(p.a.rotation());
    const Vec3 pb = detail::tsai_rotation_vector(p.b.rotation());
    m.block<3, 3>(3 * k, 0) = skew(pa + pb);
    rhs.segment<3>(3 * k) = pb - pa;
  }
  const Vec3 xp = m.colPivHouseholderQr().solve(rhs);
  const double sq = xp.squaredNorm();
  const Mat3 rx = ((1.0 - sq) * Mat3::Identity() + 2.0 * xp * xp.transpose() + 2.0 * skew(xp)) / (1.0 + sq);
  const Rotation r_x = Rotation::from_matrix(rx);

  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd mt(3 * n, 3);
  Eigen::VectorXd rt(3 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const MotionPair& p = pairs[static_cast<std::size_t>(k)];
    mt.block<3, 3>(3 * k, 0) = p.a.rotation().matrix() - Mat3::Identity();
    rt.segment<3>(3 * k) = r_x * p.b.translation() - p.a.translation();
  }
  const Vec3 t_x = mt.colPivHouseholderQr().solve(rt);

  CalibrationSolution sol;
  sol.x = RigidTransform(r_x, t_x);
  sol.pair_count = pairs.size();
  sol.rotation_pairs_used = usable.size();
  fill_residuals(pairs, sol);
  return sol;
}

/// Seeded poses inside the region spanned by 4-6 border poses: translations
/// uniform in the axis-aligned box of the border translations, rotations
/// uniform in the per-axis bounds of the border rotation vectors taken
/// relative to the first border pose.
inline std::vector<RigidTransform> sample_poses_in_range(std::span<const RigidTransform> border_poses,
                                                         std::size_t count, std::uint64_t seed) {
  if (border_poses.size() < 4 || border_poses.size() > 6)
    throw InvalidInput("calibration", "sample_poses_in_range",
                       "border pose count must be in [4, 6], got " + std::to_string(border_poses.size()));
  if (count < 2)
    throw InvalidInput("calibration", "sample_poses_in_range", "count must be >= 2");

  const Rotation ref = border_poses.front().rotation();
  Vec3 t_lo = border_poses.front().translation();
  Vec3 t_hi = t_lo;
  Vec3 r_lo = Vec3::Zero();
  Vec3 r_hi = Vec3::Zero();
  for (const auto& p : border_poses) {
    t_lo = t_lo.cwiseMin(p.translation());
    t_hi = t_hi.cwiseMax(p.translation());
    const Vec3 rv = (ref.inverse() * p.rotation()).log();
    r_lo = r_lo.cwiseMin(rv);
    r_hi = r_hi.cwiseMax(rv);
  }

  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto lerp = [&](const Vec3& lo, const Vec3& hi) {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = lo[i] + (hi[i] - lo[i]) * u01(rng);
    return v;
  };
  std::vector<RigidTransform> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Vec3 t = lerp(t_lo, t_hi);
    const Vec3 rv = lerp(r_lo, r_hi);
    out.emplace_back(ref * Rotation::exp(rv), t);
  }
  return out;
}

/// T^u_c = T^u_b * T^b_o * T^o_c.
inline RigidTransform chain_us_to_cbct(const RegistrationChain& chain) {
  return chain.t_u_b * chain.t_b_o * chain.t_o_c;
}

/// T^u_{c_new} = T^u_{c_old} * T^{c_old}_{c_new}.
inline RigidTransform update_after_reposition(const RigidTransform& t_u_c_old,
                                              const RigidTransform& t_cold_cnew) {
  return t_u_c_old * t_cold_cnew;
}

inline TransformError registration_error(const RigidTransform& estimated, const RigidTransform& truth) {
  return transform_error(estimated, truth);
}

// --- synthetic sessions ----------------------------------------------------

/// Ground truth of a simulated hand-eye rig.
struct HandEyeRig {
  RigidTransform t_b_o;  // camera in robot base (the unknown X)
  RigidTransform t_e_m;  // marker on the end-effector
};

struct ObservationNoise {
  double sigma_rot_deg = 0.0;
  double sigma_trans_mm = 0.0;
};

/// Builds samples from flange poses T^b_e. Camera observations satisfy
/// T^o_m = (T^b_o)^-1 * T^b_e * T^e_m, then receive the noise model.
inline std::vector<AbsolutePoseSample> synthesize_session(std::span<const RigidTransform> flange_poses,
                                                          const HandEyeRig& rig,
                                                          const ObservationNoise& noise, Rng& rng) {
  std::vector<AbsolutePoseSample> out;
  out.reserve(flange_poses.size());
  const RigidTransform t_o_b = rig.t_b_o.inverse();
  for (const auto& t_b_e : flange_poses) {
    const RigidTransform t_o_m = t_o_b * t_b_e * rig.t_e_m;
    out.push_back({t_b_e.inverse(), perturb(t_o_m, rng, noise.sigma_rot_deg, noise.sigma_trans_mm)});
  }
  return out;
}

/// Six border poses of a tool-down workspace around `center`.
inline std::vector<RigidTransform> default_border_poses(const Vec3& center = Vec3(450.0, 0.0, 350.0),
                                                        double half_extent_mm = 120.0,
                                                        double tilt_deg = 25.0) {
  const Rotation down = Rotation::about_x(180.0);
  const double h = half_extent_mm;
  return {
      {down * Rotation::about_x(tilt_deg), center + Vec3(-h, -h, -h)},
      {down * Rotation::about_x(-tilt_deg), center + Vec3(h, h, h)},
      {down * Rotation::about_y(tilt_deg), center + Vec3(h, -h, 0.0)},
      {down * Rotation::about_y(-tilt_deg), center + Vec3(-h, h, 0.0)},
      {down * Rotation::about_z(tilt_deg), center + Vec3(0.0, -h, h)},
      {down * Rotation::about_z(-tilt_deg), center + Vec3(0.0, h, -h)},
  };
}

/// Camera roughly 1.5 m from the robot, marker 80 mm off the flange. The
/// camera is yawed 120 degrees rather than facing the robot head-on: the
/// Tsai-Lenz rotation parameter tan(theta/2) is singular at 180 degrees.
inline HandEyeRig default_rig() {
  return {RigidTransform(Rotation::about_z(120.0) * Rotation::about_x(-25.0), Vec3(1300.0, 750.0, 800.0)),
          RigidTransform(Rotation::about_y(15.0), Vec3(40.0, 0.0, 80.0))};
}

// --- Monte-Carlo recovery-error harness ------------------------------------

struct MonteCarloRow {
  std::size_t pair_count = 0;
  std::size_t trials_solved = 0;
  std::size_t trials_degenerate = 0;
  double median_translation_mm = 0.0;
  double median_rotation_deg = 0.0;
};

struct MonteCarloConfig {
  std::vector<std::size_t> pair_counts{5, 10, 20, 29};
  std::size_t trials = 100;
  std::size_t poses_per_session = 30;
  ObservationNoise noise{0.1, 0.5};
  std::uint64_t seed = 1;
};

/// For each trial a fresh session is sampled; each pair count solves on the
/// leading `count + 1` samples of that session.
inline std::vector<MonteCarloRow> monte_carlo_recovery(const MonteCarloConfig& cfg,
                                                       std::span<const RigidTransform> border_poses,
                                                       const HandEyeRig& rig) {
  std::vector<std::vector<double>> trans(cfg.pair_counts.size());
  std::vector<std::vector<double>> rot(cfg.pair_counts.size());
  std::vector<MonteCarloRow> rows(cfg.pair_counts.size());
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(cfg.seed, trial);
    const auto poses = sample_poses_in_range(border_poses, cfg.poses_per_session, trial_seed);
    Rng rng(derive_seed(trial_seed, 0xC0FFEE));
    const auto samples = synthesize_session(poses, rig, cfg.noise, rng);
    for (std::size_t c = 0; c < cfg.pair_counts.size(); ++c) {
      const std::size_t n = std::min(cfg.pair_counts[c] + 1, samples.size());
      const auto pairs = build_motion_pairs(std::span(samples).first(n));
      try {
        const auto sol = solve_tsai_lenz(pairs);
        const auto err = registration_error(sol.x, rig.t_b_o);
        trans[c].push_back(err.translation_mm);
        rot[c].push_back(err.rotation_deg);
      } catch (const DegenerateMotion&) {
        ++rows[c].trials_degenerate;
      }
    }
  }
  for (std::size_t c = 0; c < cfg.pair_counts.size(); ++c) {
    rows[c].pair_count = cfg.pair_counts[c];
    rows[c].trials_solved = trans[c].size();
    rows[c].median_translation_mm = median(trans[c]);
    rows[c].median_rotation_deg = median(rot[c]);
  }
  return rows;
}

}  // namespace cbctus
