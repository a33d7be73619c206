#include "entsim/fiber_channel.hpp"

#include <algorithm>
#include <cmath>

#include "entsim/errors.hpp"
#include "entsim/rng.hpp"

namespace entsim::fiber {

void FiberSpec::validate() const {
  if (!(length_km >= 0.0)) throw DomainError("fiber length must be non-negative");
  if (!(total_loss_dB >= 0.0)) throw DomainError("fiber loss must be non-negative");
  if (!std::isfinite(dispersion_ps_per_nm_km)) throw DomainError("fiber dispersion must be finite");
  if (!(group_index >= 1.0)) throw DomainError("fiber group index must be >= 1");
}

double FiberSpec::group_delay_ps() const {
  return length_km * 1e3 * group_index / constants::speed_of_light_m_per_s * constants::ps_per_s;
}

double transmission(const FiberSpec& spec) { return db_to_linear(spec.total_loss_dB); }

double dispersion_broadening(double dispersion_ps_per_nm_km, double linewidth_nm, double length_km) {
  return dispersion_ps_per_nm_km * linewidth_nm * length_km;
}

double broadened_width(double t0_ps, double dt_ps) { return std::hypot(t0_ps, dt_ps); }

TimeTagStream apply_channel(const TimeTagStream& stream, const FiberSpec& spec,
                            double photon_linewidth_nm, std::uint64_t seed) {
  spec.validate();
  const double survive = transmission(spec);
  const double sigma =
      fwhm_to_sigma(std::abs(dispersion_broadening(spec.dispersion_ps_per_nm_km, photon_linewidth_nm,
                                                   spec.length_km)));
  const double delay = spec.include_group_delay ? spec.group_delay_ps() : 0.0;
  const TimePs end = stream.duration_ps();
  const std::uint64_t key = rng::derive_seed(seed, "fiber_channel");

  TimeTagStream out{stream.channel_id, {}, stream.duration_s};
  out.tags_ps.reserve(static_cast<std::size_t>(static_cast<double>(stream.tags_ps.size()) * survive * 1.01) + 16);
  for (std::size_t i = 0; i < stream.tags_ps.size(); ++i) {
    rng::RandomStream draw(key, i);
    if (survive < 1.0 && !draw.bernoulli(survive)) continue;
    double t = static_cast<double>(stream.tags_ps[i]) + delay;
    if (sigma > 0.0) t += sigma * draw.normal();
    const TimePs tag = static_cast<TimePs>(std::llround(t));
    if (tag < 0 || tag >= end) continue;
    out.tags_ps.push_back(tag);
  }
  std::sort(out.tags_ps.begin(), out.tags_ps.end());
  return out;
}

}  // namespace entsim::fiber
