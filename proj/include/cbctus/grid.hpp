#pragma once

#include <cbctus/errors.hpp>
#include <cbctus/geometry.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace cbctus {

/// Row-major 2D raster; (u, v) = (column, row).
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u);
  }
  T& at(int u, int v) { return data[index(u, v)]; }
  const T& at(int u, int v) const { return data[index(u, v)]; }

  bool operator==(const Image&) const = default;
};

/// Voxel lattice in the CBCT frame: voxel (i, j, k) has its center at
/// origin + (i, j, k) * spacing.
struct VolumeGeometry {
  std::array<int, 3> dims{256, 256, 256};
  Vec3 spacing{0.5, 0.5, 0.5};
  Vec3 origin{-64.0, -64.0, -64.0};

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
  Vec3 center(int i, int j, int k) const {
    return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }
  /// Continuous voxel coordinates of a point.
  Vec3 to_index(const Vec3& p) const { return (p - origin).cwiseQuotient(spacing); }
  /// Nearest voxel (round half away from zero).
  std::array<int, 3> nearest(const Vec3& p) const {
    const Vec3 f = to_index(p);
    return {static_cast<int>(std::lround(f.x())), static_cast<int>(std::lround(f.y())),
            static_cast<int>(std::lround(f.z()))};
  }
  Vec3 lower_bound() const { return origin - 0.5 * spacing; }
  Vec3 upper_bound() const {
    return origin + Vec3((dims[0] - 0.5) * spacing.x(), (dims[1] - 0.5) * spacing.y(), (dims[2] - 0.5) * spacing.z());
  }
  double voxel_volume() const { return spacing.x() * spacing.y() * spacing.z(); }
  double voxel_diagonal() const { return spacing.norm(); }

  void validate(const char* module, const char* op) const {
    for (int d : dims)
      if (d < 1) throw InvalidInput(module, op, "grid dims must be >= 1");
    for (int a = 0; a < 3; ++a)
      if (!(spacing[a] > 0.0)) throw InvalidInput(module, op, "grid spacing must be > 0");
  }

  bool operator==(const VolumeGeometry&) const = default;
};

}  // namespace cbctus
