#include "entsim/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "entsim/errors.hpp"
#include "entsim/parallel.hpp"
#include "entsim/rng.hpp"

namespace entsim::mc {

namespace {

constexpr double kSliceTargetPs = 1e10;  // 10 ms

[[noreturn]] void invariant(const std::string& key, const std::string& message) {
  throw ConfigError(ConfigErrorCode::invariant_violation, key, message);
}

// Rethrow a module-level DomainError as a ConfigError under `key`.
template <class Fn>
void check_section(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    invariant(key, e.what());
  }
}

void append_poisson(double rate_hz, double begin_ps, double end_ps, rng::RandomStream& draw,
                    std::vector<TimePs>& out) {
  if (!(rate_hz > 0.0) || !(end_ps > begin_ps)) return;
  const double rate_per_ps = rate_hz / constants::ps_per_s;
  const TimePs end = static_cast<TimePs>(std::ceil(end_ps));
  double t = begin_ps + draw.exponential(rate_per_ps);
  while (t < end_ps) {
    const TimePs tag = static_cast<TimePs>(std::llround(t));
    if (tag < end) out.push_back(tag);
    t += draw.exponential(rate_per_ps);
  }
}

void detector_check(const DetectorSpec& d, const std::string& key) {
  if (!(d.efficiency >= 0.0 && d.efficiency <= 1.0)) invariant(key + ".efficiency", "must lie in [0, 1]");
  if (!(d.dark_rate_hz >= 0.0)) invariant(key + ".dark_rate_Hz", "must be non-negative");
  if (!(d.jitter_fwhm_ps >= 0.0)) invariant(key + ".jitter_fwhm_ps", "must be non-negative");
  if (!(d.dead_time_ps >= 0.0)) invariant(key + ".dead_time_ps", "must be non-negative");
}

}  // namespace

void DetectorSpec::validate() const { detector_check(*this, "detector"); }

void ExperimentConfig::validate() const {
  if (!(duration_s > 0.0)) invariant("duration_s", "must be positive");
  if (!(pump.mW() >= 0.0)) invariant("pump_mW", "must be non-negative");
  check_section("ring", [&] { ring.validate(); });
  check_section("coefficients", [&] { coeffs.validate(); });
  check_section("emission", [&] { emission.validate(); });
  check_section("fibers.signal", [&] { signal_fiber.validate(); });
  check_section("fibers.idler", [&] { idler_fiber.validate(); });
  detector_check(signal_detector, "detectors.signal");
  detector_check(idler_detector, "detectors.idler");
  if (rate_mode == RateMode::measured) {
    check_section("coefficients", [&] { source::channel_efficiencies(coeffs); });
  } else {
    if (!(collection_efficiency.signal > 0.0 && collection_efficiency.signal <= 1.0))
      invariant("physical.collection_efficiency_signal", "must lie in (0, 1]");
    if (!(collection_efficiency.idler > 0.0 && collection_efficiency.idler <= 1.0))
      invariant("physical.collection_efficiency_idler", "must lie in (0, 1]");
  }
  if (franson) franson->validate(emission.coherence_time_ps);
}

// ---------------------------------------------------------------------------

PairEmitter::PairEmitter(double pair_rate_hz, const source::EmissionModel& emission,
                         std::uint64_t seed, PerArm keep)
    : cell_ps_(emission.coherence_time_ps),
      sigma_delay_ps_(fwhm_to_sigma(emission.peak_fwhm_ps)),
      mu_(source::mean_pairs_per_cell(pair_rate_hz, emission.coherence_time_ps)),
      seed_(seed) {
  emission.validate();
  if (!(keep.signal >= 0.0 && keep.signal <= 1.0 && keep.idler >= 0.0 && keep.idler <= 1.0))
    throw DomainError("keep probabilities must lie in [0, 1]");
  const double p_any = 1.0 - (1.0 - keep.signal) * (1.0 - keep.idler);
  mu_kept_ = mu_ * p_any;
  p_both_ = p_any > 0.0 ? keep.signal * keep.idler / p_any : 0.0;
  p_signal_only_ = p_any > 0.0 ? keep.signal * (1.0 - keep.idler) / p_any : 0.0;
  cells_per_slice_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(kSliceTargetPs / cell_ps_));
}

std::size_t PairEmitter::slice_count(double duration_s) const {
  const double total_cells = std::ceil(seconds_to_ps(duration_s) / cell_ps_);
  return static_cast<std::size_t>(std::ceil(total_cells / static_cast<double>(cells_per_slice_)));
}

void PairEmitter::emit_slice(std::size_t k, double duration_s, std::vector<PairEvent>& out) const {
  if (!(mu_kept_ > 0.0)) return;
  const double end_ps = seconds_to_ps(duration_s);
  const TimePs end = static_cast<TimePs>(std::llround(end_ps));
  const auto total_cells = static_cast<std::uint64_t>(std::ceil(end_ps / cell_ps_));
  const std::uint64_t first = static_cast<std::uint64_t>(k) * cells_per_slice_;
  const std::uint64_t last = std::min(first + cells_per_slice_, total_cells);

  // Thermal cell occupation: P(n) = (1 - q) q^n with q = mu / (1 + mu).
  const double q = mu_kept_ / (1.0 + mu_kept_);
  rng::RandomStream draw(rng::derive_seed(seed_, "pair_emission", k));

  struct Emitted {
    double t;
    PairEvent ev;
  };
  std::vector<Emitted> cell;
  std::uint64_t index = first;
  while (index < last) {
    // Empty cells before the next occupied one; P(occupied) = q.
    const std::uint64_t gap = draw.geometric(q);
    if (gap >= last - index) break;
    index += gap;
    const std::uint64_t pairs = 1 + draw.geometric(1.0 - q);
    cell.clear();
    for (std::uint64_t p = 0; p < pairs; ++p) {
      const double t = (static_cast<double>(index) + draw.uniform()) * cell_ps_;
      const double delay = sigma_delay_ps_ * draw.normal();
      const double u = draw.uniform();
      const bool keep_signal = u < p_both_ + p_signal_only_;
      const bool keep_idler = u < p_both_ || u >= p_both_ + p_signal_only_;
      PairEvent ev;
      const TimePs ts = static_cast<TimePs>(std::llround(t));
      const TimePs ti = static_cast<TimePs>(std::llround(t - delay));
      if (keep_signal && ts < end) ev.signal_t_ps = ts;
      if (keep_idler && ti >= 0 && ti < end) ev.idler_t_ps = ti;
      if (ev.has_signal() || ev.has_idler()) cell.push_back({t, ev});
    }
    std::sort(cell.begin(), cell.end(), [](const Emitted& a, const Emitted& b) { return a.t < b.t; });
    for (const auto& e : cell) out.push_back(e.ev);
    ++index;
  }
}

std::vector<PairEvent> generate_pair_events(double pair_rate_hz, double duration_s,
                                            const source::EmissionModel& emission,
                                            std::uint64_t seed, PerArm keep) {
  if (pair_rate_hz < 0.0) throw DomainError("pair rate must be non-negative");
  if (!(duration_s > 0.0)) throw DomainError("duration must be positive");
  std::vector<PairEvent> out;
  if (pair_rate_hz == 0.0) return out;
  const PairEmitter emitter(pair_rate_hz, emission, seed, keep);
  const std::size_t slices = emitter.slice_count(duration_s);
  for (std::size_t k = 0; k < slices; ++k) emitter.emit_slice(k, duration_s, out);
  return out;
}

std::vector<TimePs> generate_noise_singles(double rate_hz, double duration_s, std::uint64_t seed) {
  if (rate_hz < 0.0) throw DomainError("noise rate must be non-negative");
  std::vector<TimePs> out;
  if (rate_hz == 0.0 || !(duration_s > 0.0)) return out;
  const double end_ps = seconds_to_ps(duration_s);
  const auto slices = static_cast<std::size_t>(std::ceil(end_ps / kSliceTargetPs));
  out.reserve(static_cast<std::size_t>(rate_hz * duration_s * 1.01) + 16);
  for (std::size_t k = 0; k < slices; ++k) {
    rng::RandomStream draw(rng::derive_seed(seed, "noise_singles", k));
    const double begin = static_cast<double>(k) * kSliceTargetPs;
    append_poisson(rate_hz, begin, std::min(begin + kSliceTargetPs, end_ps), draw, out);
  }
  return out;
}

TimeTagStream detect(const std::vector<TimePs>& tags, const DetectorSpec& spec, double duration_s,
                     std::uint64_t seed, std::uint8_t channel_id) {
  spec.validate();
  TimeTagStream out{channel_id, {}, duration_s};
  const TimePs end = out.duration_ps();
  const double sigma = fwhm_to_sigma(spec.jitter_fwhm_ps);
  const std::uint64_t key = rng::derive_seed(seed, "detector_response");

  auto dark = generate_noise_singles(spec.dark_rate_hz, duration_s, rng::derive_seed(seed, "dark_counts"));
  std::vector<TimePs> merged;
  merged.reserve(static_cast<std::size_t>(static_cast<double>(tags.size()) * spec.efficiency) + dark.size() + 16);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    rng::RandomStream draw(key, i);
    if (spec.efficiency < 1.0 && !draw.bernoulli(spec.efficiency)) continue;
    TimePs t = tags[i];
    if (sigma > 0.0) t = static_cast<TimePs>(std::llround(static_cast<double>(t) + sigma * draw.normal()));
    if (t < 0 || t >= end) continue;
    merged.push_back(t);
  }
  merged.insert(merged.end(), dark.begin(), dark.end());
  std::sort(merged.begin(), merged.end());

  if (spec.dead_time_ps > 0.0) {
    out.tags_ps.reserve(merged.size());
    double last = -1e300;
    for (TimePs t : merged) {
      if (static_cast<double>(t) - last < spec.dead_time_ps) continue;
      out.tags_ps.push_back(t);
      last = static_cast<double>(t);
    }
  } else {
    out.tags_ps = std::move(merged);
  }
  return out;
}

// ---------------------------------------------------------------------------

double experiment_pair_rate(const ExperimentConfig& config) {
  if (config.rate_mode == RateMode::measured)
    return source::infer_pgr(config.coeffs) * config.pump.mW() * config.pump.mW();
  return ring::pair_generation_rate(config.ring, config.ring.pump_nm, config.pump);
}

PerArm experiment_generation_keep(const ExperimentConfig& config) {
  if (config.rate_mode == RateMode::measured) {
    const auto eta = source::channel_efficiencies(config.coeffs);
    return {eta.signal, eta.idler};
  }
  return config.collection_efficiency;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const bool physical = config.rate_mode == RateMode::physical;
  const double rate = experiment_pair_rate(config);
  const PerArm keep = experiment_generation_keep(config);
  const double T = config.duration_s;

  // Detected noise equals b P in both modes.
  const double det_s = physical ? config.signal_detector.efficiency : 1.0;
  const double det_i = physical ? config.idler_detector.efficiency : 1.0;
  const double p = config.pump.mW();
  const double noise_s = det_s > 0.0 ? config.coeffs.b_s * p / det_s : 0.0;
  const double noise_i = det_i > 0.0 ? config.coeffs.b_i * p / det_i : 0.0;

  const PairEmitter emitter(rate, config.emission, config.seed, keep);
  const std::size_t slices = emitter.slice_count(T);
  const double slice_ps = emitter.slice_length_ps();
  const double end_ps = seconds_to_ps(T);

  struct SliceTags {
    std::vector<TimePs> signal, idler;
    std::uint64_t emitted = 0;
  };
  std::vector<SliceTags> per_slice(slices);

  parallel_for(slices, options.threads, [&](std::size_t k) {
    std::vector<PairEvent> events;
    emitter.emit_slice(k, T, events);
    SliceTags& st = per_slice[k];
    st.emitted = events.size();

    const double begin = static_cast<double>(k) * slice_ps;
    const double end = std::min(begin + slice_ps, end_ps);
    std::vector<TimePs> noise;
    rng::RandomStream draw_s(rng::derive_seed(config.seed, "noise_signal", k));
    append_poisson(noise_s, begin, end, draw_s, noise);
    for (TimePs t : noise) events.push_back({t, PairEvent::kAbsent, EventOrigin::noise_single_signal});
    noise.clear();
    rng::RandomStream draw_i(rng::derive_seed(config.seed, "noise_idler", k));
    append_poisson(noise_i, begin, end, draw_i, noise);
    for (TimePs t : noise) events.push_back({PairEvent::kAbsent, t, EventOrigin::noise_single_idler});

    if (config.franson)
      events = franson::apply_franson(events, *config.franson, rng::derive_seed(config.seed, "franson_slice", k));

    const TimePs end_tag = static_cast<TimePs>(std::llround(end_ps));
    for (const PairEvent& ev : events) {
      if (ev.has_signal() && ev.signal_t_ps < end_tag) st.signal.push_back(ev.signal_t_ps);
      if (ev.has_idler() && ev.idler_t_ps < end_tag) st.idler.push_back(ev.idler_t_ps);
    }
  });

  ExperimentResult result;
  result.pair_rate_hz = rate;
  result.generation_keep = {keep.signal, keep.idler};

  auto gather = [&](auto member) {
    std::size_t n = 0;
    for (const auto& st : per_slice) n += (st.*member).size();
    std::vector<TimePs> all;
    all.reserve(n);
    for (auto& st : per_slice) {
      all.insert(all.end(), (st.*member).begin(), (st.*member).end());
      std::vector<TimePs>().swap(st.*member);
    }
    std::sort(all.begin(), all.end());
    return all;
  };
  for (const auto& st : per_slice) result.emitted_events += st.emitted;

  auto finish_arm = [&](std::vector<TimePs> tags, const fiber::FiberSpec& fiber_spec,
                        DetectorSpec detector, std::string_view label, std::uint8_t channel) {
    TimeTagStream stream{channel, std::move(tags), T};
    if (!fiber_spec.is_identity())
      stream = fiber::apply_channel(stream, fiber_spec, config.ring.linewidth_nm,
                                    rng::derive_seed(config.seed, std::string("fiber_") + std::string(label)));
    if (!physical) detector.efficiency = 1.0;
    return detect(stream.tags_ps, detector, T,
                  rng::derive_seed(config.seed, std::string("detector_") + std::string(label)), channel);
  };

  result.signal = finish_arm(gather(&SliceTags::signal), config.signal_fiber, config.signal_detector, "signal", 0);
  result.idler = finish_arm(gather(&SliceTags::idler), config.idler_fiber, config.idler_detector, "idler", 1);
  return result;
}

}  // namespace entsim::mc
