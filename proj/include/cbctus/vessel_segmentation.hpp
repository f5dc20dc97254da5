#pragma once

// Doppler-prompted vessel segmentation: connected Doppler components are area
// filtered, their centroids become prompts, and a prompt-seeded region grower
// segments the lumen in the B-mode image.

#include <cbctus/errors.hpp>
#include <cbctus/grid.hpp>
#include <cbctus/ussim.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace cbctus {

struct Pixel {
  int u = 0;
  int v = 0;
  bool operator==(const Pixel&) const = default;
};

using Centroid = Eigen::Vector2d;  // (u, v) in pixels

struct DopplerComponent {
  std::vector<Pixel> pixels;
  double area_mm2 = 0.0;
  Centroid centroid = Centroid::Zero();
};

/// Sparse binary mask on a width x height raster.
struct VesselMask {
  int width = 0;
  int height = 0;
  std::vector<Pixel> pixels;  // in flood-fill order, the prompt first
  Pixel prompt;
  Centroid centroid = Centroid::Zero();

  Image<std::uint8_t> to_image() const {
    Image<std::uint8_t> img(width, height);
    for (const Pixel& p : pixels) img.at(p.u, p.v) = 1;
    return img;
  }
  bool contains(const Pixel& q) const {
    return std::find(pixels.begin(), pixels.end(), q) != pixels.end();
  }
};

namespace detail {

inline Centroid pixel_centroid(const std::vector<Pixel>& pixels) {
  double su = 0.0;
  double sv = 0.0;
  for (const Pixel& p : pixels) {
    su += p.u;
    sv += p.v;
  }
  const double n = static_cast<double>(pixels.size());
  return {su / n, sv / n};
}

inline constexpr int kDu[4] = {1, -1, 0, 0};
inline constexpr int kDv[4] = {0, 0, 1, -1};

}  // namespace detail

/// Strictly larger than the threshold. Areas equal to the threshold within
/// 1e-9 relative (pixel area rounding) do not count as larger.
inline bool area_exceeds(double area_mm2, double min_area_mm2) {
  return area_mm2 > min_area_mm2 && area_mm2 - min_area_mm2 > 1e-9 * std::max(1.0, std::abs(min_area_mm2));
}

/// 4-connected components with area > min_area_mm2, largest first; equal
/// areas ordered by centroid (u, then v).
inline std::vector<DopplerComponent> extract_components(const Image<std::uint8_t>& mask, double spacing_mm,
                                                        double min_area_mm2 = 10.0) {
  if (!(spacing_mm > 0.0)) throw InvalidInput("vessel_segmentation", "extract_components", "spacing must be > 0");
  Image<std::uint8_t> seen(mask.width, mask.height);
  std::vector<DopplerComponent> out;
  std::deque<Pixel> queue;
  const double pixel_area = spacing_mm * spacing_mm;
  for (int v = 0; v < mask.height; ++v)
    for (int u = 0; u < mask.width; ++u) {
      if (!mask.at(u, v) || seen.at(u, v)) continue;
      DopplerComponent comp;
      seen.at(u, v) = 1;
      queue.push_back({u, v});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        comp.pixels.push_back(p);
        for (int d = 0; d < 4; ++d) {
          const int nu = p.u + detail::kDu[d];
          const int nv = p.v + detail::kDv[d];
          if (mask.contains(nu, nv) && mask.at(nu, nv) && !seen.at(nu, nv)) {
            seen.at(nu, nv) = 1;
            queue.push_back({nu, nv});
          }
        }
      }
      comp.area_mm2 = static_cast<double>(comp.pixels.size()) * pixel_area;
      if (!area_exceeds(comp.area_mm2, min_area_mm2)) continue;
      comp.centroid = detail::pixel_centroid(comp.pixels);
      out.push_back(std::move(comp));
    }
  std::stable_sort(out.begin(), out.end(), [](const DopplerComponent& a, const DopplerComponent& b) {
    if (a.pixels.size() != b.pixels.size()) return a.pixels.size() > b.pixels.size();
    if (a.centroid.x() != b.centroid.x()) return a.centroid.x() < b.centroid.x();
    return a.centroid.y() < b.centroid.y();
  });
  return out;
}

struct RegionGrowParams {
  double tolerance_fraction = 0.1;  // of the image's dynamic range
  int neighborhood_radius = 1;      // median window is (2r+1)^2, clipped to the image
  std::optional<std::size_t> max_area_px;
};

/// Median-referenced 4-connected flood fill from the prompt pixel.
inline VesselMask segment_from_prompt(const Image<float>& bmode, Pixel prompt, const RegionGrowParams& params = {}) {
  if (!bmode.contains(prompt.u, prompt.v))
    throw InvalidInput("vessel_segmentation", "segment_from_prompt", "prompt outside the image");

  const auto [lo, hi] = std::minmax_element(bmode.data.begin(), bmode.data.end());
  const double tolerance = params.tolerance_fraction * static_cast<double>(*hi - *lo);

  std::vector<float> window;
  const int r = params.neighborhood_radius;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du)
      if (bmode.contains(prompt.u + du, prompt.v + dv)) window.push_back(bmode.at(prompt.u + du, prompt.v + dv));
  std::sort(window.begin(), window.end());
  const std::size_t m = window.size() / 2;
  const double reference = window.size() % 2 ? window[m] : 0.5 * (static_cast<double>(window[m - 1]) + window[m]);

  const auto accept = [&](int u, int v) { return std::abs(static_cast<double>(bmode.at(u, v)) - reference) <= tolerance; };

  VesselMask mask;
  mask.width = bmode.width;
  mask.height = bmode.height;
  mask.prompt = prompt;
  Image<std::uint8_t> seen(bmode.width, bmode.height);
  std::deque<Pixel> queue;
  seen.at(prompt.u, prompt.v) = 1;
  queue.push_back(prompt);
  const std::size_t limit = params.max_area_px.value_or(std::numeric_limits<std::size_t>::max());
  while (!queue.empty()) {
    const Pixel p = queue.front();
    queue.pop_front();
    mask.pixels.push_back(p);
    if (mask.pixels.size() > limit)
      throw Oversegmentation("vessel_segmentation", "segment_from_prompt",
                             "region from prompt (" + std::to_string(prompt.u) + ", " + std::to_string(prompt.v) +
                                 ") exceeds the max-area bound of " + std::to_string(limit) + " px");
    for (int d = 0; d < 4; ++d) {
      const int nu = p.u + detail::kDu[d];
      const int nv = p.v + detail::kDv[d];
      if (bmode.contains(nu, nv) && !seen.at(nu, nv) && accept(nu, nv)) {
        seen.at(nu, nv) = 1;
        queue.push_back({nu, nv});
      }
    }
  }
  mask.centroid = detail::pixel_centroid(mask.pixels);
  return mask;
}

/// Prompt-driven segmenter interface, so a learned model can stand in for
/// the region grower.
class VesselSegmenter {
 public:
  virtual ~VesselSegmenter() = default;
  virtual VesselMask segment(const Image<float>& bmode, Pixel prompt, std::size_t max_area_px) const = 0;
};

class RegionGrowSegmenter final : public VesselSegmenter {
 public:
  explicit RegionGrowSegmenter(RegionGrowParams params = {}) : params_(params) {}

  VesselMask segment(const Image<float>& bmode, Pixel prompt, std::size_t max_area_px) const override {
    RegionGrowParams p = params_;
    p.max_area_px = max_area_px;
    return segment_from_prompt(bmode, prompt, p);
  }

 private:
  RegionGrowParams params_;
};

struct SegmentFrameOptions {
  double min_area_mm2 = 10.0;
  double max_area_factor = 4.0;  // region-grow bound relative to the prompting component
};

struct FrameSegmentation {
  std::vector<DopplerComponent> components;
  std::vector<VesselMask> masks;
  std::vector<std::string> warnings;
};

inline FrameSegmentation segment_frame(const UsFrame& frame, const ProbeModel& probe,
                                       const VesselSegmenter& segmenter, const SegmentFrameOptions& options = {}) {
  if (frame.doppler.width != probe.width || frame.doppler.height != probe.height)
    throw InvalidInput("vessel_segmentation", "segment_frame", "frame size does not match the probe model");
  FrameSegmentation out;
  out.components = extract_components(frame.doppler, probe.spacing_mm, options.min_area_mm2);
  for (const auto& comp : out.components) {
    const Pixel prompt{static_cast<int>(std::lround(comp.centroid.x())),
                       static_cast<int>(std::lround(comp.centroid.y()))};
    const auto bound = static_cast<std::size_t>(options.max_area_factor * static_cast<double>(comp.pixels.size()));
    try {
      out.masks.push_back(segmenter.segment(frame.bmode, prompt, bound));
    } catch (const Oversegmentation& e) {
      out.warnings.push_back("frame " + std::to_string(frame.index) + ": " + e.what());
    }
  }
  return out;
}

inline FrameSegmentation segment_frame(const UsFrame& frame, const ProbeModel& probe,
                                       const SegmentFrameOptions& options = {}) {
  return segment_frame(frame, probe, RegionGrowSegmenter{}, options);
}

}  // namespace cbctus
