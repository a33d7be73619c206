#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "entsim/fiber_channel.hpp"
#include "entsim/franson.hpp"
#include "entsim/pair_event.hpp"
#include "entsim/pair_source.hpp"
#include "entsim/ring_model.hpp"
#include "entsim/timetag.hpp"

namespace entsim::mc {

struct DetectorSpec {
  double efficiency = 0.8;
  double dark_rate_hz = 100.0;
  double jitter_fwhm_ps = 15.0;
  double dead_time_ps = 0.0;

  void validate() const;
};

/// How the pair rate and the channel losses are obtained.
///  - measured: rate = infer_pgr(coeffs) P^2 and the coefficients already
///    contain every collection and detection efficiency, so detector
///    efficiency is not applied again.
///  - physical: rate from the ring model; pair photons are thinned by the
///    collection efficiencies and then by detector efficiency.
/// In both modes the linear noise coefficients b are end-to-end detected rates.
enum class RateMode { measured, physical };

struct PerArm {
  double signal = 1.0;
  double idler = 1.0;
};

struct ExperimentConfig {
  RateMode rate_mode = RateMode::measured;
  ring::RingParams ring;
  source::RateCoefficients coeffs;
  source::EmissionModel emission;
  PerArm collection_efficiency;  // physical mode only
  PowerMW pump{0.198};
  double duration_s = 60.0;
  fiber::FiberSpec signal_fiber;
  fiber::FiberSpec idler_fiber;
  std::optional<franson::FransonSetting> franson;
  DetectorSpec signal_detector;
  DetectorSpec idler_detector;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Coherence-cell pair emitter. The time axis is cut into cells of the
/// coherence time; each cell holds a Bose-Einstein number of pairs with mean
/// R tau_c, placed uniformly in the cell, with a Gaussian signal-idler delay.
///
/// Cells are grouped into slices of roughly 10 ms; slice k always draws from
/// derive_seed(seed, "pair_emission", k), so any subset of slices can be
/// produced independently. Optional per-photon keep probabilities thin the
/// pairs exactly (a thinned thermal cell is thermal with a reduced mean), so
/// pairs that would lose both photons are never materialised.
class PairEmitter {
 public:
  PairEmitter(double pair_rate_hz, const source::EmissionModel& emission, std::uint64_t seed,
              PerArm keep = {});

  std::size_t slice_count(double duration_s) const;
  double slice_length_ps() const { return static_cast<double>(cells_per_slice_) * cell_ps_; }

  /// Appends slice k, ordered by emission time (which equals the signal time).
  void emit_slice(std::size_t k, double duration_s, std::vector<PairEvent>& out) const;

  double mean_pairs_per_cell() const { return mu_; }

 private:
  double cell_ps_;
  double sigma_delay_ps_;
  double mu_;
  double mu_kept_;
  double p_both_, p_signal_only_;
  std::uint64_t seed_;
  std::uint64_t cells_per_slice_;
};

std::vector<PairEvent> generate_pair_events(double pair_rate_hz, double duration_s,
                                            const source::EmissionModel& emission,
                                            std::uint64_t seed, PerArm keep = {});

/// Homogeneous Poisson arrivals on [0, duration).
std::vector<TimePs> generate_noise_singles(double rate_hz, double duration_s, std::uint64_t seed);

/// Detector response: efficiency thinning, Gaussian jitter, Poisson dark
/// counts, then non-paralysable dead time on the merged sorted stream.
TimeTagStream detect(const std::vector<TimePs>& tags, const DetectorSpec& spec, double duration_s,
                     std::uint64_t seed, std::uint8_t channel_id = 0);

struct ExperimentResult {
  TimeTagStream signal;
  TimeTagStream idler;
  double pair_rate_hz = 0.0;
  source::ChannelEfficiencies generation_keep;
  std::uint64_t emitted_events = 0;  // pair events with at least one kept photon
};

struct RunOptions {
  unsigned threads = 1;
};

/// Source -> optional Franson analysers -> fibers -> detectors. Output is
/// bit-identical for a fixed config regardless of `threads`. Franson path
/// choice is applied at emission; every later stage acts per photon and
/// independently, so the order of AMZI and fiber does not change the result
/// in distribution.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Pair rate and per-photon keep probabilities used by run_experiment.
double experiment_pair_rate(const ExperimentConfig& config);
PerArm experiment_generation_keep(const ExperimentConfig& config);

}  // namespace entsim::mc
