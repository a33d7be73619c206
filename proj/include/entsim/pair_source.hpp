#pragma once

#include "entsim/units.hpp"

namespace entsim::source {

/// End-to-end rate-law coefficients: singles C = a P^2 + b P per arm and
/// coincidences C_c = c_c P^2, with P in mW.
struct RateCoefficients {
  double a_s = 3.4e4;  // Hz/mW^2
  double a_i = 3.4e4;
  double b_s = 1.9e4;  // Hz/mW
  double b_i = 1.9e4;
  double c_c = 545.5;  // Hz/mW^2

  /// All non-negative and c_c <= min(a_s, a_i); throws InconsistentCoefficients.
  void validate() const;
};

struct EmissionModel {
  double coherence_time_ps = 205.5;
  /// FWHM of the signal-minus-idler emission delay.
  double peak_fwhm_ps = 205.5;

  void validate() const;
};

struct ChannelEfficiencies {
  double signal = 1.0;
  double idler = 1.0;
};

double singles_rate(PowerMW pump, double a, double b);
double coincidence_rate(PowerMW pump, double c_c);

/// a_s a_i / c_c, pairs per second per mW^2.
double infer_pgr(const RateCoefficients& coeffs);

/// eta_s = c_c / a_i and eta_i = c_c / a_s.
ChannelEfficiencies channel_efficiencies(const RateCoefficients& coeffs);

/// Mean pair number per coherence cell.
double mean_pairs_per_cell(double pair_rate_per_s, double coherence_time_ps);

/// Single-mode thermal (Bose-Einstein) photon-number distribution.
double bose_einstein_pmf(double mean, unsigned n);

}  // namespace entsim::source
