#pragma once

// Rigid-body algebra shared by every frame relation in the pipeline.
//
// Frame convention: a transform named T^x_y (field names t_x_y) is the pose
// of frame {y} expressed in frame {x}; applying it to a point given in {y}
// yields the same point in {x}. Products chain by cancelling adjacent
// indices, T^x_z = T^x_y * T^y_z.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cbctus {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Defect threshold above which rotations are projected back onto SO(3).
inline constexpr double kOrthonormalityTolerance = 1e-9;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

/// max |R R^T - I| entry plus |det R - 1|.
inline double orthonormality_defect(const Mat3& m) {
  const double ortho = (m * m.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m.determinant() - 1.0));
}

/// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

struct AxisAngle {
  Vec3 axis{0.0, 0.0, 1.0};
  double angle_deg = 0.0;
};

class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return {}; }

  /// Wraps a matrix that is already a rotation. Matrices with a defect above
  /// tolerance are projected onto SO(3).
  static Rotation from_matrix(const Mat3& m) {
    Rotation r;
    r.m_ = orthonormality_defect(m) > kOrthonormalityTolerance ? nearest_rotation(m) : m;
    return r;
  }

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    return from_matrix(q.normalized().toRotationMatrix());
  }

  /// Rodrigues rotation; a zero axis yields identity.
  static Rotation from_axis_angle(const Vec3& axis, double angle_deg) {
    const double n = axis.norm();
    if (n == 0.0 || angle_deg == 0.0) return identity();
    return from_matrix(Eigen::AngleAxisd(angle_deg * kDegToRad, axis / n).toRotationMatrix());
  }

  /// Rotation vector (axis * angle, radians) to rotation.
  static Rotation exp(const Vec3& rotvec) {
    const double angle = rotvec.norm();
    if (angle == 0.0) return identity();
    return from_matrix(Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix());
  }

  static Rotation about_x(double deg) { return from_axis_angle(Vec3::UnitX(), deg); }
  static Rotation about_y(double deg) { return from_axis_angle(Vec3::UnitY(), deg); }
  static Rotation about_z(double deg) { return from_axis_angle(Vec3::UnitZ(), deg); }

  const Mat3& matrix() const { return m_; }

  Eigen::Quaterniond quaternion() const {
    Eigen::Quaterniond q(m_);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return q;
  }

  /// Rotation vector in radians, angle in [0, pi].
  Vec3 log() const {
    const Eigen::Quaterniond q = quaternion();
    const double s = q.vec().norm();
    if (s == 0.0) return Vec3::Zero();
    const double angle = 2.0 * std::atan2(s, q.w());
    return q.vec() / s * angle;
  }

  Rotation inverse() const {
    Rotation r;
    r.m_ = m_.transpose();
    return r;
  }

  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  Rotation operator*(const Rotation& other) const { return from_matrix(m_ * other.m_); }

 private:
  Mat3 m_;
};

/// Rotation angle in degrees, in [0, 180].
inline double rotation_angle(const Rotation& r) {
  const Eigen::Quaterniond q = r.quaternion();
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w())) * kRadToDeg;
}

/// Geodesic distance in degrees between two rotations.
inline double rotation_distance(const Rotation& a, const Rotation& b) {
  return rotation_angle(a.inverse() * b);
}

/// Zero rotation reports the canonical axis (0, 0, 1).
inline AxisAngle axis_angle(const Rotation& r) {
  const Vec3 v = r.log();
  const double angle = v.norm();
  if (angle == 0.0) return {};
  return {v / angle, angle * kRadToDeg};
}

class RigidTransform {
 public:
  RigidTransform() : t_(Vec3::Zero()) {}
  RigidTransform(Rotation r, Vec3 t) : r_(std::move(r)), t_(std::move(t)) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Rotation::identity(), t}; }
  static RigidTransform from_rotation(const Rotation& r) { return {r, Vec3::Zero()}; }

  static RigidTransform from_matrix(const Mat4& m) {
    return {Rotation::from_matrix(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
  }

  const Rotation& rotation() const { return r_; }
  const Vec3& translation() const { return t_; }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = r_.matrix();
    m.topRightCorner<3, 1>() = t_;
    return m;
  }

  RigidTransform inverse() const {
    const Rotation ri = r_.inverse();
    return {ri, -(ri * t_)};
  }

  /// Applies `other` first, then `*this`.
  RigidTransform operator*(const RigidTransform& other) const {
    return {r_ * other.r_, r_ * other.t_ + t_};
  }

  Vec3 operator*(const Vec3& p) const { return r_ * p + t_; }

 private:
  Rotation r_;
  Vec3 t_;
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }
inline Vec3 apply_point(const RigidTransform& t, const Vec3& p) { return t * p; }
inline Vec3 apply_vector(const RigidTransform& t, const Vec3& v) { return t.rotation() * v; }

/// Translation distance (mm) and rotation distance (deg) between two transforms.
struct TransformError {
  double translation_mm = 0.0;
  double rotation_deg = 0.0;
};

inline TransformError transform_error(const RigidTransform& estimated, const RigidTransform& truth) {
  return {(estimated.translation() - truth.translation()).norm(),
          rotation_distance(estimated.rotation(), truth.rotation())};
}

}  // namespace cbctus
