#pragma once

#include <vector>

#include "entsim/units.hpp"

namespace entsim::ring {

/// Microring resonator parameters.
///
/// Circumference defaults to two 400 um straights plus a 50 um radius bend.
/// The nonlinear coefficient and group index are not measured quantities
/// here; the defaults are typical values for silicon ridge waveguides.
struct RingParams {
  double circumference_m = 2 * 400e-6 + 2 * constants::pi * 50e-6;
  double gamma_per_W_m = 200.0;
  double group_index = 4.2;
  double q_factor = 1.0e5;
  double pump_nm = 1545.69;
  std::vector<double> resonances_nm{1544.62, 1545.16, 1545.7, 1546.23};
  /// Per-resonance loaded Q; empty means every resonance uses q_factor.
  std::vector<double> resonance_q_factors{0.96e5, 1.01e5, 1.07e5, 1.07e5};
  double linewidth_nm = 0.0176;
  double t_min = 0.1;
  double time_bandwidth_product = 0.4413;

  /// Throws DomainError on the first violated invariant.
  void validate() const;
  double group_velocity_m_per_s() const { return constants::speed_of_light_m_per_s / group_index; }
};

struct SourceSummary {
  double pgr_per_mW2 = 0.0;
  double brightness_per_GHz_mW2 = 0.0;
};

/// c / (n_g L), in GHz. The wavelength argument is accepted for symmetry
/// with dispersive models and does not enter the constant-n_g form.
double fsr(const RingParams& params, double wavelength_nm);

double q_from_linewidth(double center_nm, double linewidth_nm);
double linewidth_from_q(double center_nm, double q_factor);

/// Lorentzian all-pass dip with floor t_min and FWHM params.linewidth_nm.
double transmission(double wavelength_nm, const RingParams& params, double center_nm);
/// Same lineshape with an explicit linewidth, for per-resonance widths.
double transmission(double wavelength_nm, double center_nm, double linewidth_nm, double t_min);

/// sqrt(2 Q v_g / (omega_0 L)).
double field_enhancement(const RingParams& params, double center_nm);

/// SFWM pair rate (L gamma)^2 F^6 (v_g / 2L) P^2 in pairs/s.
double pair_generation_rate(const RingParams& params, double center_nm, PowerMW pump);

double brightness(double pgr_per_mW2, double linewidth_GHz);
SourceSummary summarize_source(double pgr_per_mW2, double linewidth_GHz);

/// Temporal FWHM in ps of a transform-limited pulse of bandwidth `bandwidth_GHz`.
double transform_limited_width(double bandwidth_GHz, double time_bandwidth_product);

}  // namespace entsim::ring
