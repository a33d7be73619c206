#pragma once

#include <cstdint>

#include "entsim/units.hpp"

namespace entsim {

enum class EventOrigin : std::uint8_t {
  genuine_pair,
  noise_single_signal,
  noise_single_idler,
  dark,
};

/// Emission record for one pair, or one uncorrelated photon. A photon that is
/// lost (or was never present, for singles) carries kAbsent.
struct PairEvent {
  static constexpr TimePs kAbsent = -1;

  TimePs signal_t_ps = kAbsent;
  TimePs idler_t_ps = kAbsent;
  EventOrigin origin = EventOrigin::genuine_pair;

  bool has_signal() const { return signal_t_ps != kAbsent; }
  bool has_idler() const { return idler_t_ps != kAbsent; }
  bool operator==(const PairEvent&) const = default;
};

}  // namespace entsim
