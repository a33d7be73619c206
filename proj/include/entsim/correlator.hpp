#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "entsim/fitting.hpp"
#include "entsim/timetag.hpp"

namespace entsim::corr {

/// [lo, hi) spanning +-half_range with zero delay at a bin centre.
std::pair<double, double> centered_range(double half_range_ps, double bin_width_ps);

/// Histogram of every delay signal - idler in [lo, hi). Two-pointer sweep,
/// O(n + m + matches). Positive delay means the signal photon arrived late.
/// With threads > 1 the signal stream is partitioned and the per-part
/// histograms summed, which is exact.
Histogram coincidence_histogram(const TimeTagStream& signal, const TimeTagStream& idler,
                                double bin_width_ps, double lo_ps, double hi_ps, unsigned threads = 1);

/// Gaussian (plus flat offset) fit to the dominant peak, using the bins
/// within fit_half_range_ps of the maximum bin. Throws NoPeakError when the
/// maximum is below 5x the median bin.
fit::PeakFit fit_coincidence_peak(const Histogram& hist, double fit_half_range_ps = 1000.0);
double peak_fwhm(const Histogram& hist, double fit_half_range_ps = 1000.0);

struct CarOptions {
  /// Further exclusion centres relative to the fitted peak, e.g. +-AMZI delay.
  std::vector<double> extra_exclusions_ps;
  double fit_half_range_ps = 1000.0;
  /// Use this centre instead of fitting one (NaN = fit).
  double center_ps = std::numeric_limits<double>::quiet_NaN();
};

struct CarResult {
  double car = 0.0;
  double car_sigma = 0.0;
  std::uint64_t coincidences_in_window = 0;
  double accidentals_in_window = 0.0;
  double window_ps = 0.0;
  double center_ps = 0.0;
  std::size_t window_bins = 0;
  std::size_t background_bins = 0;
  std::uint64_t background_counts = 0;
  bool infinite = false;  // no background counts; car is +inf
};

/// Counts in the bins whose centres lie within window/2 of the peak centre,
/// over the accidental level in the same bins. The accidental level is the
/// mean of bins further than 3 windows from the peak and from every extra
/// exclusion centre.
CarResult car(const Histogram& hist, double window_ps, const CarOptions& options = {});

/// Sum of counts in bins centred within [center - window/2, center + window/2].
std::uint64_t window_counts(const Histogram& hist, double center_ps, double window_ps,
                            std::size_t* bins_used = nullptr);

struct G2Curve {
  Histogram raw;
  /// Expected counts per bin for uncorrelated light, n_A n_B w / T summed over segments.
  double flat_level = 0.0;
  std::vector<double> g2;
  std::uint64_t tags_a = 0;
  std::uint64_t tags_b = 0;
};

/// Accumulates a 50:50-split autocorrelation over successive independent
/// segments of one arm. Segment s is split with derive_seed(seed, "hbt", s).
class G2Accumulator {
 public:
  G2Accumulator(std::uint64_t splitter_seed, double bin_width_ps, double lo_ps, double hi_ps);

  void add(const TimeTagStream& segment);
  G2Curve curve() const;
  std::uint64_t tags_seen() const { return tags_seen_; }

 private:
  std::uint64_t seed_;
  double bin_width_ps_, lo_ps_, hi_ps_;
  Histogram raw_;
  double flat_ = 0.0;
  std::uint64_t tags_seen_ = 0, tags_a_ = 0, tags_b_ = 0, segments_ = 0;
};

/// Throws InsufficientData below 1000 tags.
G2Curve g2_hbt(const TimeTagStream& arm, std::uint64_t splitter_seed, double bin_width_ps,
               double lo_ps, double hi_ps);

struct G2Summary {
  double g2_zero_raw = 0.0;
  double g2_zero_fit = 0.0;
  double g2_zero_fit_sigma = 0.0;
  double g2_infinity = 0.0;
  double g2_infinity_sigma = 0.0;
  fit::PeakFit lorentzian;  // in units of raw counts
};

/// Lorentzian fit over |tau| <= fit_half_range_ps; g2(inf) is the mean of bins
/// beyond it.
G2Summary analyze_g2(const G2Curve& curve, double fit_half_range_ps);

}  // namespace entsim::corr
