#include "entsim/ring_model.hpp"

#include <cmath>
#include <string>

#include "entsim/errors.hpp"

namespace entsim::ring {

void RingParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("ring parameters: ") + what);
  };
  require(circumference_m > 0.0, "circumference must be positive");
  require(gamma_per_W_m > 0.0, "nonlinear coefficient must be positive");
  require(group_index >= 1.0, "group index must be >= 1");
  require(q_factor > 0.0, "Q must be positive");
  require(pump_nm > 0.0, "pump wavelength must be positive");
  require(linewidth_nm > 0.0, "linewidth must be positive");
  require(t_min >= 0.0 && t_min <= 1.0, "t_min must lie in [0, 1]");
  require(time_bandwidth_product > 0.0, "time-bandwidth product must be positive");
  for (double r : resonances_nm) require(r > 0.0, "resonance wavelengths must be positive");
  require(resonance_q_factors.empty() || resonance_q_factors.size() == resonances_nm.size(),
          "resonance_q_factors must be empty or match resonances_nm");
  for (double q : resonance_q_factors) require(q > 0.0, "resonance Q factors must be positive");
}

double fsr(const RingParams& params, double /*wavelength_nm*/) {
  return constants::speed_of_light_m_per_s / (params.group_index * params.circumference_m) * 1e-9;
}

double q_from_linewidth(double center_nm, double linewidth_nm) {
  if (!(linewidth_nm > 0.0)) throw DomainError("linewidth must be positive");
  return center_nm / linewidth_nm;
}

double linewidth_from_q(double center_nm, double q_factor) {
  if (!(q_factor > 0.0)) throw DomainError("Q must be positive");
  return center_nm / q_factor;
}

double transmission(double wavelength_nm, double center_nm, double linewidth_nm, double t_min) {
  const double detuning = 2.0 * (wavelength_nm - center_nm) / linewidth_nm;
  return 1.0 - (1.0 - t_min) / (1.0 + detuning * detuning);
}

double transmission(double wavelength_nm, const RingParams& params, double center_nm) {
  return transmission(wavelength_nm, center_nm, params.linewidth_nm, params.t_min);
}

double field_enhancement(const RingParams& params, double center_nm) {
  const double omega0 = 2.0 * constants::pi * wl_to_freq(center_nm) * 1e12;
  return std::sqrt(2.0 * params.q_factor * params.group_velocity_m_per_s() /
                   (omega0 * params.circumference_m));
}

double pair_generation_rate(const RingParams& params, double center_nm, PowerMW pump) {
  const double length = params.circumference_m;
  const double f2 = std::pow(field_enhancement(params, center_nm), 2);
  const double lg = length * params.gamma_per_W_m;
  const double p = pump.watts();
  return lg * lg * f2 * f2 * f2 * (params.group_velocity_m_per_s() / (2.0 * length)) * p * p;
}

double brightness(double pgr_per_mW2, double linewidth_GHz) {
  if (!(linewidth_GHz > 0.0)) throw DomainError("linewidth must be positive for brightness");
  return pgr_per_mW2 / linewidth_GHz;
}

SourceSummary summarize_source(double pgr_per_mW2, double linewidth_GHz) {
  return {pgr_per_mW2, brightness(pgr_per_mW2, linewidth_GHz)};
}

double transform_limited_width(double bandwidth_GHz, double time_bandwidth_product) {
  if (!(bandwidth_GHz > 0.0)) throw DomainError("bandwidth must be positive");
  return time_bandwidth_product / bandwidth_GHz * 1e3;
}

}  // namespace entsim::ring
