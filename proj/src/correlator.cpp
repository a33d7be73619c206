#include "entsim/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "entsim/errors.hpp"
#include "entsim/parallel.hpp"
#include "entsim/rng.hpp"

namespace entsim {

bool TimeTagStream::is_valid() const {
  if (!std::is_sorted(tags_ps.begin(), tags_ps.end())) return false;
  if (tags_ps.empty()) return true;
  return tags_ps.front() >= 0 && tags_ps.back() < duration_ps();
}

std::uint64_t Histogram::total() const {
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  return sum;
}

Histogram& Histogram::operator+=(const Histogram& other) {
  if (other.counts.size() != counts.size() || other.bin_width_ps != bin_width_ps || other.origin_ps != origin_ps)
    throw DomainError("cannot add histograms with different binning");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

}  // namespace entsim

namespace entsim::corr {

namespace {

Histogram empty_histogram(double bin_width_ps, double lo_ps, double hi_ps) {
  if (!(bin_width_ps > 0.0)) throw DomainError("bin width must be positive");
  if (!(lo_ps < hi_ps)) throw DomainError("histogram range needs lo < hi");
  Histogram h;
  h.bin_width_ps = bin_width_ps;
  h.origin_ps = lo_ps;
  h.counts.assign(static_cast<std::size_t>(std::ceil((hi_ps - lo_ps) / bin_width_ps - 1e-9)), 0);
  if (h.counts.empty()) h.counts.assign(1, 0);
  return h;
}

void sweep(const std::vector<TimePs>& signal, std::size_t s_begin, std::size_t s_end,
           const std::vector<TimePs>& idler, double lo, double hi, Histogram& h) {
  const double w = h.bin_width_ps;
  const std::size_t nbins = h.counts.size();
  std::size_t first = 0;
  for (std::size_t a = s_begin; a < s_end; ++a) {
    const TimePs s = signal[a];
    // First idler with delay s - i < hi.
    while (first < idler.size() && static_cast<double>(s - idler[first]) >= hi) ++first;
    for (std::size_t b = first; b < idler.size(); ++b) {
      const double d = static_cast<double>(s - idler[b]);
      if (d < lo) break;
      const auto bin = static_cast<std::size_t>(std::floor((d - lo) / w));
      if (bin < nbins) ++h.counts[bin];
    }
  }
}

}  // namespace

std::pair<double, double> centered_range(double half_range_ps, double bin_width_ps) {
  if (!(bin_width_ps > 0.0)) throw DomainError("bin width must be positive");
  const double n = std::ceil(half_range_ps / bin_width_ps);
  return {-(n + 0.5) * bin_width_ps, (n + 0.5) * bin_width_ps};
}

Histogram coincidence_histogram(const TimeTagStream& signal, const TimeTagStream& idler,
                                double bin_width_ps, double lo_ps, double hi_ps, unsigned threads) {
  Histogram h = empty_histogram(bin_width_ps, lo_ps, hi_ps);
  const auto& sv = signal.tags_ps;
  if (sv.empty() || idler.tags_ps.empty()) return h;
  const std::size_t parts = std::max(1u, threads);
  if (parts == 1) {
    sweep(sv, 0, sv.size(), idler.tags_ps, lo_ps, hi_ps, h);
    return h;
  }
  std::vector<Histogram> partial(parts, h);
  parallel_for(parts, threads, [&](std::size_t k) {
    const std::size_t b = sv.size() * k / parts, e = sv.size() * (k + 1) / parts;
    sweep(sv, b, e, idler.tags_ps, lo_ps, hi_ps, partial[k]);
  });
  for (const auto& p : partial) h += p;
  return h;
}

fit::PeakFit fit_coincidence_peak(const Histogram& hist, double fit_half_range_ps) {
  if (hist.counts.empty()) throw NoPeakError("empty histogram");
  const auto max_it = std::max_element(hist.counts.begin(), hist.counts.end());
  std::vector<std::uint64_t> sorted = hist.counts;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double med = static_cast<double>(sorted[sorted.size() / 2]);
  const double peak = static_cast<double>(*max_it);
  if (peak == 0.0 || peak < 5.0 * med)
    throw NoPeakError("no significant peak: max " + std::to_string(peak) + " vs median " + std::to_string(med));

  const double center = hist.bin_center(static_cast<std::size_t>(max_it - hist.counts.begin()));
  std::vector<fit::Point> pts;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double x = hist.bin_center(i);
    if (std::abs(x - center) <= fit_half_range_ps) pts.push_back({x, static_cast<double>(hist.counts[i])});
  }
  if (pts.size() < 5) throw NoPeakError("too few bins around the peak to fit");
  fit::FitOptions opts;
  opts.absolute_weights = true;  // Poisson counts
  return fit::fit_gaussian(pts, opts, fit::Polarity::peak);
}

double peak_fwhm(const Histogram& hist, double fit_half_range_ps) {
  return fit_coincidence_peak(hist, fit_half_range_ps).fwhm;
}

std::uint64_t window_counts(const Histogram& hist, double center_ps, double window_ps, std::size_t* bins_used) {
  std::uint64_t sum = 0;
  std::size_t bins = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    if (std::abs(hist.bin_center(i) - center_ps) <= 0.5 * window_ps) {
      sum += hist.counts[i];
      ++bins;
    }
  }
  if (bins_used) *bins_used = bins;
  return sum;
}

CarResult car(const Histogram& hist, double window_ps, const CarOptions& options) {
  if (!(window_ps > 0.0)) throw DomainError("CAR window must be positive");
  CarResult r;
  r.window_ps = window_ps;
  r.center_ps = std::isnan(options.center_ps) ? fit_coincidence_peak(hist, options.fit_half_range_ps).center
                                              : options.center_ps;
  r.coincidences_in_window = window_counts(hist, r.center_ps, window_ps, &r.window_bins);
  if (r.window_bins == 0) throw DomainError("CAR window covers no bins");

  const double guard = 3.0 * window_ps;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double x = hist.bin_center(i) - r.center_ps;
    bool excluded = std::abs(x) <= guard;
    for (double e : options.extra_exclusions_ps) excluded = excluded || std::abs(x - e) <= guard;
    if (excluded) continue;
    ++r.background_bins;
    r.background_counts += hist.counts[i];
  }
  if (r.background_bins == 0) throw InsufficientData("histogram too narrow to estimate the accidental level");

  const double per_bin = static_cast<double>(r.background_counts) / static_cast<double>(r.background_bins);
  r.accidentals_in_window = per_bin * static_cast<double>(r.window_bins);
  if (r.background_counts == 0) {
    r.infinite = true;
    r.car = std::numeric_limits<double>::infinity();
    r.car_sigma = std::numeric_limits<double>::infinity();
    return r;
  }
  r.car = static_cast<double>(r.coincidences_in_window) / r.accidentals_in_window;
  const double cc = static_cast<double>(std::max<std::uint64_t>(r.coincidences_in_window, 1));
  r.car_sigma = r.car * std::sqrt(1.0 / cc + 1.0 / static_cast<double>(r.background_counts));
  return r;
}

// ---------------------------------------------------------------------------

G2Accumulator::G2Accumulator(std::uint64_t splitter_seed, double bin_width_ps, double lo_ps, double hi_ps)
    : seed_(splitter_seed),
      bin_width_ps_(bin_width_ps),
      lo_ps_(lo_ps),
      hi_ps_(hi_ps),
      raw_(empty_histogram(bin_width_ps, lo_ps, hi_ps)) {}

void G2Accumulator::add(const TimeTagStream& segment) {
  const std::uint64_t key = rng::derive_seed(seed_, "hbt", segments_++);
  TimeTagStream a{0, {}, segment.duration_s}, b{1, {}, segment.duration_s};
  a.tags_ps.reserve(segment.tags_ps.size() / 2 + 16);
  b.tags_ps.reserve(segment.tags_ps.size() / 2 + 16);
  for (std::size_t i = 0; i < segment.tags_ps.size(); ++i) {
    rng::RandomStream draw(key, i);
    (draw.bernoulli(0.5) ? a : b).tags_ps.push_back(segment.tags_ps[i]);
  }
  raw_ += coincidence_histogram(a, b, bin_width_ps_, lo_ps_, hi_ps_);
  if (segment.duration_s > 0.0)
    flat_ += static_cast<double>(a.tags_ps.size()) * static_cast<double>(b.tags_ps.size()) * bin_width_ps_ /
             seconds_to_ps(segment.duration_s);
  tags_seen_ += segment.tags_ps.size();
  tags_a_ += a.tags_ps.size();
  tags_b_ += b.tags_ps.size();
}

G2Curve G2Accumulator::curve() const {
  if (tags_seen_ < 1000)
    throw InsufficientData("g2 needs at least 1000 tags, got " + std::to_string(tags_seen_));
  if (!(flat_ > 0.0)) throw InsufficientData("g2 normalisation level is zero");
  G2Curve c;
  c.raw = raw_;
  c.flat_level = flat_;
  c.tags_a = tags_a_;
  c.tags_b = tags_b_;
  c.g2.resize(raw_.size());
  for (std::size_t i = 0; i < raw_.size(); ++i) c.g2[i] = static_cast<double>(raw_.counts[i]) / flat_;
  return c;
}

G2Curve g2_hbt(const TimeTagStream& arm, std::uint64_t splitter_seed, double bin_width_ps, double lo_ps,
               double hi_ps) {
  if (arm.tags_ps.size() < 1000)
    throw InsufficientData("g2 needs at least 1000 tags, got " + std::to_string(arm.tags_ps.size()));
  G2Accumulator acc(splitter_seed, bin_width_ps, lo_ps, hi_ps);
  acc.add(arm);
  return acc.curve();
}

G2Summary analyze_g2(const G2Curve& curve, double fit_half_range_ps) {
  G2Summary s;
  const Histogram& h = curve.raw;

  // Zero delay: the bin containing 0, or the mean of the two bins sharing an edge at 0.
  const double pos = (0.0 - h.origin_ps) / h.bin_width_ps;
  const double fl = std::floor(pos);
  if (pos < 0.0 || pos >= static_cast<double>(h.size())) throw DomainError("g2 range does not contain zero delay");
  const auto idx = static_cast<std::size_t>(fl);
  if (pos == fl && idx > 0)
    s.g2_zero_raw = 0.5 * (curve.g2[idx - 1] + curve.g2[idx]);
  else
    s.g2_zero_raw = curve.g2[idx];

  std::vector<fit::Point> pts;
  double far_sum = 0.0;
  std::size_t far_n = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = h.bin_center(i);
    if (std::abs(x) <= fit_half_range_ps) {
      pts.push_back({x, static_cast<double>(h.counts[i])});
    } else {
      far_sum += static_cast<double>(h.counts[i]);
      ++far_n;
    }
  }
  if (far_n > 0) {
    s.g2_infinity = far_sum / static_cast<double>(far_n) / curve.flat_level;
    s.g2_infinity_sigma = std::sqrt(far_sum) / static_cast<double>(far_n) / curve.flat_level;
  }
  fit::FitOptions opts;
  opts.absolute_weights = true;
  s.lorentzian = fit::fit_lorentzian(pts, opts, fit::Polarity::peak);
  s.g2_zero_fit = s.lorentzian.peak_value() / curve.flat_level;
  const auto& fs = s.lorentzian.fit.sigmas;
  s.g2_zero_fit_sigma = std::hypot(fs[2], fs[3]) / curve.flat_level;
  return s;
}

}  // namespace entsim::corr
