#include "entsim/units.hpp"

#include <cmath>
#include <string>

#include "entsim/errors.hpp"

namespace entsim {

namespace {
// c in nm*THz: c [m/s] * 1e9 nm/m / 1e12 Hz/THz.
constexpr double c_nm_THz = constants::speed_of_light_m_per_s * 1e-3;
}  // namespace

double wl_to_freq(double wavelength_nm) {
  if (!(wavelength_nm > 0.0))
    throw DomainError("wavelength must be positive, got " + std::to_string(wavelength_nm));
  return c_nm_THz / wavelength_nm;
}

double freq_to_wl(double frequency_THz) {
  if (!(frequency_THz > 0.0))
    throw DomainError("frequency must be positive, got " + std::to_string(frequency_THz));
  return c_nm_THz / frequency_THz;
}

double bandwidth_wl_to_freq(double delta_nm, double wavelength_nm) {
  if (!(wavelength_nm > 0.0))
    throw DomainError("wavelength must be positive, got " + std::to_string(wavelength_nm));
  if (delta_nm < 0.0)
    throw DomainError("line width must be non-negative, got " + std::to_string(delta_nm));
  // c * dl / l^2 with dl, l in nm gives Hz*1e9, i.e. GHz directly.
  return constants::speed_of_light_m_per_s * delta_nm / (wavelength_nm * wavelength_nm);
}

double db_to_linear(double loss_dB) { return std::pow(10.0, -loss_dB / 10.0); }

double linear_to_db(double fraction) {
  if (!(fraction > 0.0)) throw DomainError("fraction must be positive for dB conversion");
  return -10.0 * std::log10(fraction);
}

Spectral Spectral::from_wavelength_nm(double wavelength_nm) {
  if (!(wavelength_nm > 0.0))
    throw DomainError("wavelength must be positive, got " + std::to_string(wavelength_nm));
  return Spectral(wavelength_nm);
}

Spectral Spectral::from_frequency_THz(double frequency_THz) {
  return Spectral(freq_to_wl(frequency_THz));
}

double Spectral::frequency_THz() const { return wl_to_freq(wavelength_nm_); }

PowerMW::PowerMW(double milliwatts) : value_(milliwatts) {
  if (!(milliwatts >= 0.0))
    throw DomainError("pump power must be non-negative, got " + std::to_string(milliwatts));
}

}  // namespace entsim
