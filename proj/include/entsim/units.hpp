#pragma once

#include <cstdint>

namespace entsim {

namespace constants {
inline constexpr double speed_of_light_m_per_s = 299'792'458.0;
inline constexpr double pi = 3.14159265358979323846;
/// FWHM of a Gaussian in units of its standard deviation, 2*sqrt(2 ln 2).
inline constexpr double gaussian_fwhm_per_sigma = 2.3548200450309493;
inline constexpr double ps_per_s = 1e12;
}  // namespace constants

/// Detector timestamps are integer picoseconds.
using TimePs = std::int64_t;

/// Optical carrier, held as vacuum wavelength.
class Spectral {
 public:
  static Spectral from_wavelength_nm(double wavelength_nm);
  static Spectral from_frequency_THz(double frequency_THz);

  double wavelength_nm() const noexcept { return wavelength_nm_; }
  double frequency_THz() const;

 private:
  explicit Spectral(double wavelength_nm) : wavelength_nm_(wavelength_nm) {}
  double wavelength_nm_;
};

/// Pump power in milliwatts. Never negative.
class PowerMW {
 public:
  constexpr PowerMW() = default;
  explicit PowerMW(double milliwatts);

  constexpr double mW() const noexcept { return value_; }
  constexpr double watts() const noexcept { return value_ * 1e-3; }

 private:
  double value_ = 0.0;
};

double wl_to_freq(double wavelength_nm);
double freq_to_wl(double frequency_THz);

/// Spectral width in GHz of a line of width `delta_nm` centred at `wavelength_nm`.
double bandwidth_wl_to_freq(double delta_nm, double wavelength_nm);

double db_to_linear(double loss_dB);
double linear_to_db(double fraction);

inline constexpr double fwhm_to_sigma(double fwhm) {
  return fwhm / constants::gaussian_fwhm_per_sigma;
}
inline constexpr double sigma_to_fwhm(double sigma) {
  return sigma * constants::gaussian_fwhm_per_sigma;
}

inline constexpr double seconds_to_ps(double seconds) { return seconds * constants::ps_per_s; }
inline constexpr double ps_to_seconds(double ps) { return ps / constants::ps_per_s; }

}  // namespace entsim
