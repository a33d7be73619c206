#include "entsim/pair_source.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "entsim/errors.hpp"

namespace entsim::source {

void RateCoefficients::validate() const {
  if (a_s < 0 || a_i < 0 || b_s < 0 || b_i < 0 || c_c < 0)
    throw InconsistentCoefficients("rate coefficients must be non-negative");
  if (c_c > std::min(a_s, a_i))
    throw InconsistentCoefficients("c_c exceeds min(a_s, a_i): a coincidence needs a single on each arm");
}

void EmissionModel::validate() const {
  if (!(coherence_time_ps > 0.0)) throw DomainError("coherence time must be positive");
  if (!(peak_fwhm_ps > 0.0)) throw DomainError("emission peak FWHM must be positive");
}

double singles_rate(PowerMW pump, double a, double b) {
  const double p = pump.mW();
  return a * p * p + b * p;
}

double coincidence_rate(PowerMW pump, double c_c) {
  const double p = pump.mW();
  return c_c * p * p;
}

double infer_pgr(const RateCoefficients& coeffs) {
  if (!(coeffs.c_c > 0.0)) throw DomainError("PGR inference needs a positive coincidence coefficient");
  return coeffs.a_s * coeffs.a_i / coeffs.c_c;
}

ChannelEfficiencies channel_efficiencies(const RateCoefficients& coeffs) {
  if (!(coeffs.a_s > 0.0 && coeffs.a_i > 0.0))
    throw DomainError("channel efficiencies need positive quadratic singles coefficients");
  const ChannelEfficiencies eta{coeffs.c_c / coeffs.a_i, coeffs.c_c / coeffs.a_s};
  if (eta.signal > 1.0 || eta.idler > 1.0)
    throw InconsistentCoefficients("coefficients imply a channel efficiency above 1 (eta_s=" +
                                   std::to_string(eta.signal) +
                                   ", eta_i=" + std::to_string(eta.idler) + ")");
  return eta;
}

double mean_pairs_per_cell(double pair_rate_per_s, double coherence_time_ps) {
  if (pair_rate_per_s < 0.0) throw DomainError("pair rate must be non-negative");
  if (!(coherence_time_ps > 0.0)) throw DomainError("coherence time must be positive");
  return pair_rate_per_s * ps_to_seconds(coherence_time_ps);
}

double bose_einstein_pmf(double mean, unsigned n) {
  if (mean < 0.0) throw DomainError("thermal mean must be non-negative");
  if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
  // mu^n / (1+mu)^(n+1), evaluated in log space for large n.
  return std::exp(n * std::log(mean) - (n + 1.0) * std::log1p(mean));
}

}  // namespace entsim::source
