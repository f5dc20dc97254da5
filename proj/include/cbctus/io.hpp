#pragma once

// File formats:
//  * volume: raw little-endian array + JSON sidecar (dims, spacing, origin,
//    scalar type, intensity table, label legend)
//  * scene: JSON description of every phantom primitive
//  * images: binary 8-bit PGM

#include <cbctus/errors.hpp>
#include <cbctus/grid.hpp>
#include <cbctus/phantom.hpp>
#include <cbctus/serialization.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace cbctus {

namespace fs = std::filesystem;

namespace detail {

template <class T>
void write_raw_le(const fs::path& path, std::span<const T> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("io", "write_raw", "cannot open " + path.string());
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  } else {
    std::vector<char> buf(sizeof(T));
    for (const T& v : data) {
      std::memcpy(buf.data(), &v, sizeof(T));
      std::reverse(buf.begin(), buf.end());
      out.write(buf.data(), sizeof(T));
    }
  }
  if (!out) throw InvalidInput("io", "write_raw", "write failed for " + path.string());
}

template <class T>
std::vector<T> read_raw_le(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("io", "read_raw", "cannot open " + path.string());
  std::vector<T> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(T)))
    throw InvalidInput("io", "read_raw", path.string() + " is shorter than its metadata says");
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (T& v : data) {
      char* b = reinterpret_cast<char*>(&v);
      std::reverse(b, b + sizeof(T));
    }
  }
  return data;
}

}  // namespace detail

inline void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("io", "write_json", "cannot open " + path.string());
  out << j.dump(2) << '\n';
}

inline Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("io", "read_json", "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidInput("io", "read_json", path.string() + ": " + e.what());
  }
}

inline Json geometry_to_json(const VolumeGeometry& g) {
  return {{"dims", g.dims}, {"spacing", vec3_to_json(g.spacing)}, {"origin", vec3_to_json(g.origin)}};
}

inline Json intensity_table_to_json(const IntensityTable& t) {
  return {{"background", t.background}, {"water", t.water}, {"lumen", t.lumen},
          {"wall", t.wall},             {"lesion", t.lesion}, {"rib", t.rib}};
}

inline Json label_legend() {
  Json legend = Json::object();
  for (int m = 0; m <= static_cast<int>(Material::kMappedVessel); ++m)
    legend[std::to_string(m)] = material_name(static_cast<Material>(m));
  return legend;
}

/// Writes <stem>.raw (float32 intensities), optionally <stem>_labels.raw
/// (uint8) and the <stem>.json sidecar.
inline void write_volume(const fs::path& dir, const std::string& stem, const CbctVolume& vol,
                         const IntensityTable& table) {
  fs::create_directories(dir);
  detail::write_raw_le<float>(dir / (stem + ".raw"), vol.voxels);
  Json meta{{"format", "cbctus-volume-1"},
            {"geometry", geometry_to_json(vol.geometry)},
            {"scalar_type", "float32"},
            {"byte_order", "little"},
            {"index_order", "x fastest, then y, then z"},
            {"data_file", stem + ".raw"},
            {"intensity_table", intensity_table_to_json(table)}};
  if (!vol.labels.empty()) {
    detail::write_raw_le<std::uint8_t>(dir / (stem + "_labels.raw"), vol.labels);
    meta["label_file"] = stem + "_labels.raw";
    meta["label_type"] = "uint8";
    meta["label_legend"] = label_legend();
  }
  write_json(dir / (stem + ".json"), meta);
}

inline CbctVolume read_volume(const fs::path& sidecar) {
  const Json meta = read_json(sidecar);
  CbctVolume vol;
  try {
    const Json& g = meta.at("geometry");
    vol.geometry.dims = g.at("dims").get<std::array<int, 3>>();
    vol.geometry.spacing = vec3_from_json(g.at("spacing"), "geometry.spacing");
    vol.geometry.origin = vec3_from_json(g.at("origin"), "geometry.origin");
    vol.geometry.validate("io", "read_volume");
    if (meta.at("scalar_type") != "float32") throw InvalidInput("io", "read_volume", "unsupported scalar_type");
    const fs::path dir = sidecar.parent_path();
    vol.voxels = detail::read_raw_le<float>(dir / meta.at("data_file").get<std::string>(), vol.geometry.voxel_count());
    if (meta.contains("label_file"))
      vol.labels =
          detail::read_raw_le<std::uint8_t>(dir / meta.at("label_file").get<std::string>(), vol.geometry.voxel_count());
  } catch (const Json::exception& e) {
    throw InvalidInput("io", "read_volume", sidecar.string() + ": " + e.what());
  }
  return vol;
}

template <class T>
void write_channel(const fs::path& path, const std::vector<T>& data) {
  detail::write_raw_le<T>(path, data);
}

// --- scene --------------------------------------------------------------------

inline Json box_to_json(const Box& b) { return {{"min", vec3_to_json(b.min)}, {"max", vec3_to_json(b.max)}}; }

inline Json scene_to_json(const PhantomScene& s) {
  Json tubes = Json::array();
  for (const auto& t : s.tubes)
    tubes.push_back({{"start", vec3_to_json(t.start)},
                     {"end", vec3_to_json(t.end)},
                     {"inner_radius", t.inner_radius},
                     {"wall_thickness", t.wall_thickness},
                     {"has_flow", t.has_flow}});
  Json ribs = Json::array();
  for (const auto& r : s.ribs) ribs.push_back(box_to_json(r));
  return {{"format", "cbctus-scene-1"},
          {"tank", box_to_json(s.tank)},
          {"tubes", tubes},
          {"lesion", {{"center", vec3_to_json(s.lesion.center)}, {"radius", s.lesion.radius}}},
          {"ribs", ribs},
          {"intensities", intensity_table_to_json(s.intensities)}};
}

// --- images ---------------------------------------------------------------------

inline Image<std::uint8_t> to_gray8(const Image<float>& img, double lo, double hi) {
  Image<std::uint8_t> out(img.width, img.height);
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround((img.data[i] - lo) * scale), 0L, 255L));
  return out;
}

inline void write_pgm(const fs::path& path, const Image<std::uint8_t>& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("io", "write_pgm", "cannot open " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

}  // namespace cbctus
