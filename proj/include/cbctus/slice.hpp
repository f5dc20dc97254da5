#pragma once

#include <cbctus/errors.hpp>
#include <cbctus/geometry.hpp>
#include <cbctus/grid.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace cbctus {

/// A planar raster in the CBCT frame. Raster cell (i, j) sits at
/// origin + i * spacing * x_axis + j * spacing * y_axis; in-plane metric
/// coordinates (x, y) are measured from `origin` along the two axes.
struct SliceFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 x_axis = Vec3::UnitX();
  Vec3 y_axis = Vec3::UnitY();
  int index = 0;  // slice index along the volume axis normal to the plane
  double spacing_mm = 0.5;
  int width = 1;   // samples along x_axis
  int height = 1;  // samples along y_axis

  Vec3 point(double x_mm, double y_mm) const { return origin + x_mm * x_axis + y_mm * y_axis; }
  Vec3 cell(int i, int j) const { return point(i * spacing_mm, j * spacing_mm); }
  Eigen::Vector2d to_plane(const Vec3& p) const { return {(p - origin).dot(x_axis), (p - origin).dot(y_axis)}; }
  Vec3 normal() const { return x_axis.cross(y_axis); }

  void validate(const char* module, const char* op) const {
    if (std::abs(x_axis.norm() - 1.0) > 1e-9 || std::abs(y_axis.norm() - 1.0) > 1e-9 ||
        std::abs(x_axis.dot(y_axis)) > 1e-9)
      throw InvalidInput(module, op, "slice axes must be orthonormal");
    if (!(spacing_mm > 0.0) || width < 1 || height < 1)
      throw InvalidInput(module, op, "slice raster must have positive spacing and size");
  }
};

/// Trilinear interpolation of a scalar voxel array; `outside` beyond the
/// lattice of voxel centers.
template <class T>
double sample_trilinear(const VolumeGeometry& g, const std::vector<T>& data, const Vec3& p, double outside = 0.0) {
  const Vec3 f = g.to_index(p);
  std::array<int, 3> i0{};
  std::array<double, 3> w{};
  for (int a = 0; a < 3; ++a) {
    const double eps = 1e-9;
    if (f[a] < -eps || f[a] > g.dims[a] - 1 + eps) return outside;
    const double c = std::clamp(f[a], 0.0, static_cast<double>(g.dims[a] - 1));
    i0[a] = std::min(static_cast<int>(std::floor(c)), std::max(g.dims[a] - 2, 0));
    w[a] = g.dims[a] > 1 ? c - i0[a] : 0.0;
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double wt = (dx ? w[0] : 1.0 - w[0]) * (dy ? w[1] : 1.0 - w[1]) * (dz ? w[2] : 1.0 - w[2]);
        if (wt == 0.0) continue;
        const int i = std::min(i0[0] + dx, g.dims[0] - 1);
        const int j = std::min(i0[1] + dy, g.dims[1] - 1);
        const int k = std::min(i0[2] + dz, g.dims[2] - 1);
        acc += wt * static_cast<double>(data[g.index(i, j, k)]);
      }
  return acc;
}

/// Value of the nearest voxel, or `outside` when the point is off the grid.
template <class T>
T sample_nearest(const VolumeGeometry& g, const std::vector<T>& data, const Vec3& p, T outside = T{}) {
  const auto n = g.nearest(p);
  if (!g.contains(n[0], n[1], n[2])) return outside;
  return data[g.index(n[0], n[1], n[2])];
}

}  // namespace cbctus
