#pragma once

#include <cbctus/errors.hpp>
#include <cbctus/geometry.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace cbctus {

using Json = nlohmann::json;

/// Rounds to 15 significant digits so the shortest round-trip printing used
/// by the JSON writer emits at most 15 digits.
inline double round_sig15(double v) {
  if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return std::strtod(buf, nullptr);
}

inline Json vec3_to_json(const Vec3& v) {
  return Json::array({round_sig15(v.x()), round_sig15(v.y()), round_sig15(v.z())});
}

inline Vec3 vec3_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3)
    throw InvalidInput("serialization", "vec3_from_json", field + ": expected array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number())
      throw InvalidInput("serialization", "vec3_from_json", field + ": expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

/// {"matrix": 4x4 row-major, 15 significant digits}
inline Json transform_to_json(const RigidTransform& t) {
  const Mat4 m = t.matrix();
  Json rows = Json::array();
  for (int r = 0; r < 4; ++r) {
    Json row = Json::array();
    for (int c = 0; c < 4; ++c) row.push_back(round_sig15(m(r, c)));
    rows.push_back(row);
  }
  return Json{{"matrix", rows}};
}

inline RigidTransform transform_from_json(const Json& j, const std::string& field) {
  const auto fail = [&](const std::string& why) {
    throw InvalidInput("serialization", "transform_from_json", field + ": " + why);
  };
  if (!j.is_object() || !j.contains("matrix")) fail("expected object with 'matrix'");
  const Json& rows = j.at("matrix");
  if (!rows.is_array() || rows.size() != 4) fail("matrix must have 4 rows");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    if (!rows[r].is_array() || rows[r].size() != 4) fail("matrix rows must have 4 entries");
    for (int c = 0; c < 4; ++c) {
      if (!rows[r][c].is_number()) fail("matrix entries must be numbers");
      m(r, c) = rows[r][c].get<double>();
    }
  }
  if ((m.bottomRows<1>() - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12)
    fail("last row must be [0, 0, 0, 1]");
  if (orthonormality_defect(m.topLeftCorner<3, 3>()) > 1e-6) fail("rotation block is not orthonormal");
  return RigidTransform::from_matrix(m);
}

}  // namespace cbctus
