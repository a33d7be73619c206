#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "entsim/units.hpp"

namespace entsim {

/// Sorted detection timestamps of one detector channel over [0, duration).
struct TimeTagStream {
  std::uint8_t channel_id = 0;
  std::vector<TimePs> tags_ps;
  double duration_s = 0.0;

  double rate_hz() const {
    return duration_s > 0.0 ? static_cast<double>(tags_ps.size()) / duration_s : 0.0;
  }
  TimePs duration_ps() const { return static_cast<TimePs>(std::llround(seconds_to_ps(duration_s))); }

  /// Sorted ascending with every tag in [0, duration).
  bool is_valid() const;
};

/// Fixed-width histogram; bin i covers [origin + i w, origin + (i+1) w).
struct Histogram {
  double bin_width_ps = 20.0;
  double origin_ps = 0.0;
  std::vector<std::uint64_t> counts;

  std::size_t size() const { return counts.size(); }
  double bin_center(std::size_t i) const { return origin_ps + (static_cast<double>(i) + 0.5) * bin_width_ps; }
  double upper_edge() const { return origin_ps + static_cast<double>(counts.size()) * bin_width_ps; }
  std::uint64_t total() const;

  Histogram& operator+=(const Histogram& other);
};

}  // namespace entsim
