#pragma once

#include <cstdint>
#include <vector>

#include "entsim/pair_event.hpp"

namespace entsim::franson {

/// Asymmetric Mach-Zehnder interferometer on one arm.
struct AmziSpec {
  double delay_ps = 1500.0;
  double phase_rad = 0.0;
  double insertion_loss_dB = 0.0;
};

struct FransonSetting {
  AmziSpec signal_amzi;
  AmziSpec idler_amzi;
  double intrinsic_visibility = 0.954;

  /// Delays positive, matched within 1 ps, and longer than the coherence
  /// time; visibility in [0, 1]. Throws ConfigError.
  void validate(double coherence_time_ps) const;
  double phase_sum() const { return signal_amzi.phase_rad + idler_amzi.phase_rad; }
};

/// Relative coincidence weights at delays (-delay, 0, +delay).
struct ThreePeakWeights {
  double minus = 0.25;
  double central = 0.5;
  double plus = 0.25;
};

/// Linear piezo map phase = rad_per_V * (V - zero_phase_V).
struct PztCalibration {
  double rad_per_V = 0.0;
  double zero_phase_V = 0.0;

  double phase(double volts) const { return rad_per_V * (volts - zero_phase_V); }
};

/// 1/2 (1 + V0 cos(phi_s + phi_i)).
double central_peak_probability(double phase_signal, double phase_idler, double intrinsic_visibility);

ThreePeakWeights three_peak_weights(double phase_sum, double intrinsic_visibility);

/// Sends every photon through its arm's AMZI and keeps only the monitored
/// output port.
///
/// A pair with both photons present samples the port-resolved two-photon
/// outcome: both photons reach the monitored ports with probability
/// 1/4 (1 + V0 cos(phase_sum) / 2), split over the (-, 0, +) delays by
/// three_peak_weights; each photon alone reaches its monitored port with
/// probability 1/2, so singles carry no phase dependence. Photons without a
/// partner choose port and path independently. Insertion loss thins each arm
/// afterwards. The returned list keeps the input order; dropped photons are
/// set to PairEvent::kAbsent.
std::vector<PairEvent> apply_franson(const std::vector<PairEvent>& events,
                                     const FransonSetting& setting, std::uint64_t seed);

/// (max - min) / (max + min).
double visibility_from_extrema(double c_max, double c_min);

/// Intrinsic visibility that yields `target_visibility` once a flat
/// accidental rate dilutes the central peak. `genuine_window_rate` is the
/// phase-averaged genuine central-peak rate inside the counting window.
double calibrate_intrinsic_visibility(double target_visibility, double genuine_window_rate,
                                      double accidental_window_rate);

}  // namespace entsim::franson
