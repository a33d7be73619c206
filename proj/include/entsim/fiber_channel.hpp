#pragma once

#include <cstdint>

#include "entsim/timetag.hpp"

namespace entsim::fiber {

/// One optical fiber span. total_loss_dB is authoritative; when a per-km
/// attenuation is given in the config it is converted into total loss.
struct FiberSpec {
  double length_km = 0.0;
  double total_loss_dB = 0.0;
  double dispersion_ps_per_nm_km = 0.0;
  double group_index = 1.468;
  /// Add the absolute propagation delay z n_g / c to every tag.
  bool include_group_delay = false;

  void validate() const;
  bool is_identity() const { return total_loss_dB == 0.0 && dispersion_ps_per_nm_km == 0.0 && !include_group_delay; }
  double group_delay_ps() const;
};

double transmission(const FiberSpec& spec);

/// D delta_lambda z, ps.
double dispersion_broadening(double dispersion_ps_per_nm_km, double linewidth_nm, double length_km);

/// sqrt(t0^2 + dt^2).
double broadened_width(double t0_ps, double dt_ps);

/// Monte Carlo realisation of the span: binomial thinning at transmission(spec),
/// Gaussian timing spread of FWHM dispersion_broadening(...) on survivors, and
/// the optional constant group delay. Tags leaving [0, duration) are dropped.
TimeTagStream apply_channel(const TimeTagStream& stream, const FiberSpec& spec,
                            double photon_linewidth_nm, std::uint64_t seed);

}  // namespace entsim::fiber
