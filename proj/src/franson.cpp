#include "entsim/franson.hpp"

#include <cmath>
#include <string>

#include "entsim/errors.hpp"
#include "entsim/rng.hpp"

namespace entsim::franson {

namespace {

constexpr double kDelayMatchTolerancePs = 1.0;

struct ArmPath {
  double delay_ps;
  double survive;  // insertion-loss transmission
};

// Port and path for a photon travelling without an interfering partner.
TimePs route_single(TimePs t, const ArmPath& arm, rng::RandomStream& draw) {
  if (!draw.bernoulli(0.5)) return PairEvent::kAbsent;  // other output port
  const bool long_path = draw.bernoulli(0.5);
  if (arm.survive < 1.0 && !draw.bernoulli(arm.survive)) return PairEvent::kAbsent;
  return t + (long_path ? static_cast<TimePs>(std::llround(arm.delay_ps)) : 0);
}

TimePs thin(TimePs t, const ArmPath& arm, rng::RandomStream& draw) {
  if (t == PairEvent::kAbsent) return t;
  if (arm.survive < 1.0 && !draw.bernoulli(arm.survive)) return PairEvent::kAbsent;
  return t;
}

}  // namespace

void FransonSetting::validate(double coherence_time_ps) const {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw ConfigError(ConfigErrorCode::invariant_violation, key, msg);
  };
  if (!(signal_amzi.delay_ps > 0.0)) fail("franson.signal_amzi.delay_ps", "delay must be positive");
  if (!(idler_amzi.delay_ps > 0.0)) fail("franson.idler_amzi.delay_ps", "delay must be positive");
  if (std::abs(signal_amzi.delay_ps - idler_amzi.delay_ps) > kDelayMatchTolerancePs)
    fail("franson.idler_amzi.delay_ps", "AMZI delays must match within 1 ps for post-selection");
  if (!(signal_amzi.delay_ps > coherence_time_ps))
    fail("franson.signal_amzi.delay_ps", "AMZI delay must exceed the coherence time");
  if (!(signal_amzi.insertion_loss_dB >= 0.0))
    fail("franson.signal_amzi.insertion_loss_dB", "insertion loss must be non-negative");
  if (!(idler_amzi.insertion_loss_dB >= 0.0))
    fail("franson.idler_amzi.insertion_loss_dB", "insertion loss must be non-negative");
  if (!(intrinsic_visibility >= 0.0 && intrinsic_visibility <= 1.0))
    fail("franson.intrinsic_visibility", "visibility must lie in [0, 1]");
}

double central_peak_probability(double phase_signal, double phase_idler, double intrinsic_visibility) {
  return 0.5 * (1.0 + intrinsic_visibility * std::cos(phase_signal + phase_idler));
}

ThreePeakWeights three_peak_weights(double phase_sum, double intrinsic_visibility) {
  return {0.25, 0.5 * (1.0 + intrinsic_visibility * std::cos(phase_sum)), 0.25};
}

std::vector<PairEvent> apply_franson(const std::vector<PairEvent>& events,
                                     const FransonSetting& setting, std::uint64_t seed) {
  const ArmPath signal{setting.signal_amzi.delay_ps, db_to_linear(setting.signal_amzi.insertion_loss_dB)};
  const ArmPath idler{setting.idler_amzi.delay_ps, db_to_linear(setting.idler_amzi.insertion_loss_dB)};
  const TimePs signal_long = static_cast<TimePs>(std::llround(signal.delay_ps));
  const TimePs idler_long = static_cast<TimePs>(std::llround(idler.delay_ps));

  // Both photons at the monitored ports: 1/4 of the three-peak weights.
  const ThreePeakWeights w = three_peak_weights(setting.phase_sum(), setting.intrinsic_visibility);
  const double p_minus = 0.25 * w.minus;
  const double p_plus = p_minus + 0.25 * w.plus;
  const double p_central = p_plus + 0.25 * w.central;
  // Marginal 1/2 per photon fixes the one-port-only outcomes.
  const double p_pair = 0.25 * (w.minus + w.central + w.plus);
  const double p_signal_only = p_central + (0.5 - p_pair);
  const double p_idler_only = p_signal_only + (0.5 - p_pair);

  const std::uint64_t key = rng::derive_seed(seed, "franson");
  std::vector<PairEvent> out(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const PairEvent& in = events[i];
    rng::RandomStream draw(key, i);
    PairEvent ev{PairEvent::kAbsent, PairEvent::kAbsent, in.origin};

    if (in.origin == EventOrigin::genuine_pair && in.has_signal() && in.has_idler()) {
      const double u = draw.uniform();
      if (u < p_minus) {
        ev.signal_t_ps = in.signal_t_ps;
        ev.idler_t_ps = in.idler_t_ps + idler_long;
      } else if (u < p_plus) {
        ev.signal_t_ps = in.signal_t_ps + signal_long;
        ev.idler_t_ps = in.idler_t_ps;
      } else if (u < p_central) {
        const bool both_long = draw.bernoulli(0.5);
        ev.signal_t_ps = in.signal_t_ps + (both_long ? signal_long : 0);
        ev.idler_t_ps = in.idler_t_ps + (both_long ? idler_long : 0);
      } else if (u < p_signal_only) {
        ev.signal_t_ps = in.signal_t_ps + (draw.bernoulli(0.5) ? signal_long : 0);
      } else if (u < p_idler_only) {
        ev.idler_t_ps = in.idler_t_ps + (draw.bernoulli(0.5) ? idler_long : 0);
      }
      ev.signal_t_ps = thin(ev.signal_t_ps, signal, draw);
      ev.idler_t_ps = thin(ev.idler_t_ps, idler, draw);
    } else {
      if (in.has_signal()) ev.signal_t_ps = route_single(in.signal_t_ps, signal, draw);
      if (in.has_idler()) ev.idler_t_ps = route_single(in.idler_t_ps, idler, draw);
    }
    out[i] = ev;
  }
  return out;
}

double visibility_from_extrema(double c_max, double c_min) {
  if (c_max == 0.0 && c_min == 0.0) throw DomainError("visibility undefined for zero counts");
  if (!(c_max >= c_min && c_min >= 0.0)) throw DomainError("visibility needs c_max >= c_min >= 0");
  return (c_max - c_min) / (c_max + c_min);
}

double calibrate_intrinsic_visibility(double target_visibility, double genuine_window_rate,
                                      double accidental_window_rate) {
  if (!(genuine_window_rate > 0.0)) throw DomainError("genuine rate must be positive");
  if (accidental_window_rate < 0.0) throw DomainError("accidental rate must be non-negative");
  const double v0 = target_visibility * (1.0 + accidental_window_rate / genuine_window_rate);
  if (v0 > 1.0) throw DomainError("target visibility is unreachable with this accidental level");
  return v0;
}

}  // namespace entsim::franson
