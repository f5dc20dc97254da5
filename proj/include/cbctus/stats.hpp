#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace cbctus {

struct ResidualStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double max = 0.0;
  double rms = 0.0;
  std::size_t count = 0;
};

inline ResidualStats summarize(std::span<const double> v) {
  ResidualStats s;
  s.count = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  double sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
    s.max = std::max(s.max, x);
  }
  const double n = static_cast<double>(v.size());
  s.mean = sum / n;
  s.rms = std::sqrt(sq / n);
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

/// NaN for an empty range.
inline double median(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> c(v.begin(), v.end());
  const std::size_t mid = c.size() / 2;
  std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(mid), c.end());
  const double hi = c[mid];
  if (c.size() % 2 == 1) return hi;
  const double lo = *std::max_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace cbctus
