#include "entsim/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "entsim/errors.hpp"
#include "entsim/fiber_channel.hpp"
#include "entsim/fitting.hpp"
#include "entsim/franson.hpp"
#include "entsim/pair_source.hpp"
#include "entsim/parallel.hpp"
#include "entsim/reference.hpp"
#include "entsim/rng.hpp"
#include "entsim/ring_model.hpp"
#include "entsim/tag_io.hpp"

namespace entsim::scenarios {

namespace {

using ojson = nlohmann::ordered_json;

// Number formatting shared by every CSV: shortest round-trip form.
std::string num(double v) { return fmt::format("{}", v); }

ojson fit_json(const fit::FitResult& f) {
  return {{"params", f.params},
          {"sigmas", f.sigmas},
          {"residual_sum_squares", f.residual_sum_squares},
          {"converged", f.converged},
          {"iterations", f.iterations}};
}

ojson peak_json(const fit::PeakFit& p) {
  return {{"center_ps", p.center},
          {"center_sigma_ps", p.center_sigma()},
          {"fwhm_ps", p.fwhm},
          {"fwhm_sigma_ps", p.fwhm_sigma()},
          {"amplitude", p.amplitude},
          {"offset", p.offset},
          {"fit", fit_json(p.fit)}};
}

ojson car_json(const corr::CarResult& c) {
  ojson j;
  if (c.infinite) {
    j["car"] = nullptr;
    j["car_sigma"] = nullptr;
  } else {
    j["car"] = c.car;
    j["car_sigma"] = c.car_sigma;
  }
  j["infinite"] = c.infinite;
  j["window_ps"] = c.window_ps;
  j["center_ps"] = c.center_ps;
  j["coincidences_in_window"] = c.coincidences_in_window;
  j["accidentals_in_window"] = c.accidentals_in_window;
  j["window_bins"] = c.window_bins;
  j["background_bins"] = c.background_bins;
  j["background_counts"] = c.background_counts;
  return j;
}

struct Comparisons {
  ojson list = ojson::array();

  // |sim - ref| <= tol, absolute.
  void absolute(const std::string& id, double simulated, double simulated_sigma, double tolerance,
                const std::string& reference_id) {
    add(id, reference_id, reference::value(reference_id), simulated, simulated_sigma, "absolute", tolerance,
        std::abs(simulated - reference::value(reference_id)) <= tolerance);
  }
  // |sim - ref| <= tol |ref|.
  void relative(const std::string& id, double simulated, double simulated_sigma, double tolerance,
                const std::string& reference_id, double ref) {
    add(id, reference_id, ref, simulated, simulated_sigma, "relative", tolerance,
        std::abs(simulated - ref) <= tolerance * std::abs(ref));
  }
  void relative(const std::string& id, double simulated, double simulated_sigma, double tolerance,
                const std::string& reference_id) {
    relative(id, simulated, simulated_sigma, tolerance, reference_id, reference::value(reference_id));
  }
  // ref / factor <= sim <= ref factor.
  void factor(const std::string& id, double simulated, double simulated_sigma, double tolerance,
              const std::string& reference_id) {
    const double ref = reference::value(reference_id);
    add(id, reference_id, ref, simulated, simulated_sigma, "factor", tolerance,
        simulated >= ref / tolerance && simulated <= ref * tolerance);
  }
  // lo <= sim <= hi, with no table entry behind it.
  void range(const std::string& id, double simulated, double simulated_sigma, double lo, double hi,
             const std::string& basis) {
    ojson c;
    c["id"] = id;
    c["basis"] = basis;
    c["simulated"] = simulated;
    c["simulated_sigma"] = simulated_sigma;
    c["tolerance_kind"] = "range";
    c["lower"] = lo;
    c["upper"] = hi;
    c["pass"] = simulated >= lo && simulated <= hi;
    list.push_back(c);
  }

  bool all_pass() const {
    for (const auto& c : list)
      if (!c["pass"].get<bool>()) return false;
    return true;
  }

 private:
  void add(const std::string& id, const std::string& reference_id, double ref, double simulated,
           double simulated_sigma, const char* kind, double tolerance, bool pass) {
    ojson c;
    c["id"] = id;
    c["reference_id"] = reference_id;
    c["reference"] = ref;
    c["reference_sigma"] = reference::sigma(reference_id);
    c["simulated"] = simulated;
    c["simulated_sigma"] = simulated_sigma;
    c["tolerance_kind"] = kind;
    c["tolerance"] = tolerance;
    c["pass"] = pass;
    list.push_back(c);
  }
};

// Everything one scenario produces, written as it goes.
class Context {
 public:
  explicit Context(const Request& r) : request(r), cfg(r.config) {}

  const Request& request;
  const config::ScenarioConfig& cfg;
  ojson results;
  Comparisons comparisons;

  void write(const std::string& name, const std::string& contents) {
    io::write_file_atomic(request.out_dir / name, contents);
    std::lock_guard lock(mutex_);
    files_[name] = true;
  }

  /// Registers a file written by other means.
  void mark(const std::string& name) {
    std::lock_guard lock(mutex_);
    files_[name] = true;
  }

  void record_error(const std::string& where, const Error& e) {
    std::lock_guard lock(mutex_);
    errors_.push_back({where, e.what(), static_cast<int>(e.category())});
  }

  Outcome finish() {
    Outcome out;
    ojson s;
    s["schema_version"] = kSummarySchemaVersion;
    s["artifact_version"] = kArtifactVersion;
    s["reference_table_version"] = reference::version();
    s["scenario"] = request.scenario;
    s["seed"] = cfg.experiment.seed;
    s["config_hash"] = config::config_hash(cfg);
    std::sort(errors_.begin(), errors_.end(), [](const auto& a, const auto& b) { return a.where < b.where; });
    s["status"] = errors_.empty() ? "complete" : "partial";
    s["results"] = results.is_null() ? ojson::object() : results;
    s["comparisons"] = comparisons.list;
    s["all_comparisons_pass"] = comparisons.all_pass();
    ojson errs = ojson::array();
    for (const auto& e : errors_) errs.push_back({{"where", e.where}, {"message", e.message}, {"category", e.category}});
    s["errors"] = errs;
    ojson files = ojson::array();
    for (const auto& [name, _] : files_) {
      files.push_back(name);
      out.files.push_back(name);
    }
    s["files"] = files;
    const std::string summary_name = request.scenario + "_summary.json";
    io::write_file_atomic(request.out_dir / summary_name, s.dump(2) + "\n");
    out.files.push_back(summary_name);
    out.exit_code = errors_.empty() ? 0 : errors_.front().category;
    out.summary = std::move(s);
    return out;
  }

 private:
  struct ErrorEntry {
    std::string where;
    std::string message;
    int category;
  };
  std::mutex mutex_;
  std::map<std::string, bool> files_;  // sorted, so the listing ignores write order
  std::vector<ErrorEntry> errors_;
};

double mean_spacing(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  if (xs.size() < 2) return 0.0;
  return (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
}

// ---------------------------------------------------------------------------

void fig1b(Context& ctx) {
  const auto& ring = ctx.cfg.experiment.ring;
  const auto& s = ctx.cfg.scenarios.fig1b;
  if (ring.resonances_nm.empty()) throw ConfigError(ConfigErrorCode::invariant_violation, "ring.resonances_nm", "fig1b needs at least one resonance");

  std::vector<double> widths;
  for (std::size_t k = 0; k < ring.resonances_nm.size(); ++k) {
    const double q = ring.resonance_q_factors.empty() ? ring.q_factor : ring.resonance_q_factors[k];
    widths.push_back(ring::linewidth_from_q(ring.resonances_nm[k], q));
  }
  const auto [lo_it, hi_it] = std::minmax_element(ring.resonances_nm.begin(), ring.resonances_nm.end());
  const double center = 0.5 * (*lo_it + *hi_it);
  const auto n = static_cast<std::size_t>(std::floor(s.span_nm / s.step_nm)) + 1;
  const double start = center - 0.5 * s.span_nm;

  std::vector<double> wl(n), model(n), measured(n);
  const std::uint64_t noise_key = rng::derive_seed(ctx.cfg.experiment.seed, "fig1b_noise");
  for (std::size_t i = 0; i < n; ++i) {
    wl[i] = start + static_cast<double>(i) * s.step_nm;
    double t = 1.0;
    for (std::size_t k = 0; k < widths.size(); ++k)
      t *= ring::transmission(wl[i], ring.resonances_nm[k], widths[k], ring.t_min);
    model[i] = t;
    rng::RandomStream draw(noise_key, i);
    measured[i] = t + (s.noise_sigma > 0.0 ? s.noise_sigma * draw.normal() : 0.0);
  }
  std::string csv = "wavelength_nm,transmission,model\n";
  for (std::size_t i = 0; i < n; ++i) csv += num(wl[i]) + "," + num(measured[i]) + "," + num(model[i]) + "\n";
  ctx.write("fig1b_transmission.csv", csv);

  const auto ref_q = reference::values("resonance_q_factors");
  ojson fits = ojson::array();
  std::vector<double> centers;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    // Fit in pm offsets from the nominal resonance for conditioning.
    std::vector<fit::Point> pts;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = wl[i] - ring.resonances_nm[k];
      if (std::abs(dx) <= 4.0 * widths[k]) pts.push_back({dx * 1e3, measured[i]});
    }
    ojson r;
    r["nominal_nm"] = ring.resonances_nm[k];
    r["configured_linewidth_nm"] = widths[k];
    try {
      fit::FitOptions opts;
      opts.weighting = fit::Weighting::uniform;
      const auto f = fit::fit_lorentzian(pts, opts, fit::Polarity::dip);
      const double c_nm = ring.resonances_nm[k] + f.center * 1e-3;
      const double w_nm = f.fwhm * 1e-3;
      const double q = ring::q_from_linewidth(c_nm, w_nm);
      const double q_sigma = q * f.fwhm_sigma() / f.fwhm;
      centers.push_back(c_nm);
      r["center_nm"] = c_nm;
      r["fwhm_nm"] = w_nm;
      r["fwhm_sigma_nm"] = f.fwhm_sigma() * 1e-3;
      r["dip_floor"] = f.peak_value();
      r["q_fit"] = q;
      r["q_fit_sigma"] = q_sigma;
      r["fit"] = fit_json(f.fit);
      if (k < ref_q.size())
        ctx.comparisons.relative(fmt::format("q_factor_{}", k + 1), q, q_sigma, 0.02, "resonance_q_factors", ref_q[k]);
    } catch (const Error& e) {
      ctx.record_error(fmt::format("resonance_{}", k + 1), e);
    }
    fits.push_back(r);
  }
  ctx.results["points"] = n;
  ctx.results["resonances"] = fits;
  ctx.results["fsr_model_GHz"] = ring::fsr(ring, ring.pump_nm);
  if (centers.size() >= 2) {
    const double spacing = mean_spacing(centers);
    const double fsr_GHz = bandwidth_wl_to_freq(spacing, ring.pump_nm);
    ctx.results["fsr_from_spacing_nm"] = spacing;
    ctx.results["fsr_from_spacing_GHz"] = fsr_GHz;
    ctx.comparisons.relative("fsr_GHz", fsr_GHz, 0.0, 0.02, "fsr_GHz");
  }
  const double bw = bandwidth_wl_to_freq(ring.linewidth_nm, ring.pump_nm);
  ctx.results["linewidth_bandwidth_GHz"] = bw;
  ctx.comparisons.relative("resonance_bandwidth_GHz", bw, 0.0, 0.02, "resonance_bandwidth_GHz");
}

// ---------------------------------------------------------------------------

struct SweepPoint {
  double pump_mW = 0.0;
  double duration_s = 0.0;
  std::uint64_t signal_counts = 0;
  std::uint64_t idler_counts = 0;
  bool analyzed = false;
  CoincidenceAnalysis analysis;
  bool ok = false;
};

std::vector<SweepPoint> power_sweep(Context& ctx, bool with_histograms, const std::string& prefix) {
  const auto& grid = ctx.cfg.scenarios.fig3.pump_grid_mW;
  std::vector<SweepPoint> points(grid.size());
  parallel_for(grid.size(), ctx.request.threads, [&](std::size_t k) {
    SweepPoint& pt = points[k];
    pt.pump_mW = grid[k];
    const std::string where = fmt::format("point_{:02d}", k);
    try {
      mc::ExperimentConfig exp = ctx.cfg.experiment;
      exp.pump = PowerMW(grid[k]);
      exp.franson.reset();
      exp.seed = rng::derive_seed(ctx.cfg.experiment.seed, "fig3_point", k);
      pt.duration_s = exp.duration_s;
      const auto run = mc::run_experiment(exp);
      pt.signal_counts = run.signal.tags_ps.size();
      pt.idler_counts = run.idler.tags_ps.size();
      pt.ok = true;
      if (with_histograms) {
        pt.analysis = analyze_pair(run.signal, run.idler, ctx.cfg.analysis);
        pt.analyzed = true;
        ctx.write(fmt::format("{}_hist_{:02d}.csv", prefix, k), io::histogram_csv(pt.analysis.histogram));
        ojson j;
        j["pump_mW"] = pt.pump_mW;
        j["duration_s"] = pt.duration_s;
        j["signal_counts"] = pt.signal_counts;
        j["idler_counts"] = pt.idler_counts;
        j["peak"] = peak_json(pt.analysis.peak);
        j["car"] = car_json(pt.analysis.car);
        j["net_coincidences"] = pt.analysis.net_coincidences;
        j["net_coincidences_sigma"] = pt.analysis.net_coincidences_sigma;
        ctx.write(fmt::format("{}_point_{:02d}.json", prefix, k), j.dump(2) + "\n");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      ctx.record_error(where, e);
    }
  });
  return points;
}

fit::FitResult rate_fit(const std::vector<fit::Point>& pts, const std::vector<double>& sigmas) {
  fit::FitOptions opts;
  opts.weighting = fit::Weighting::explicit_;
  opts.absolute_weights = true;
  for (double s : sigmas) opts.weights.push_back(1.0 / (s * s));
  return fit::fit_quadratic_linear(pts, opts);
}

void fig3a(Context& ctx) {
  const auto points = power_sweep(ctx, false, "fig3a");
  std::vector<fit::Point> ps, pi;
  std::vector<double> ss, si;
  for (const auto& pt : points) {
    if (!pt.ok) continue;
    const double T = pt.duration_s;
    ps.push_back({pt.pump_mW, static_cast<double>(pt.signal_counts) / T});
    pi.push_back({pt.pump_mW, static_cast<double>(pt.idler_counts) / T});
    ss.push_back(std::sqrt(std::max<double>(1.0, static_cast<double>(pt.signal_counts))) / T);
    si.push_back(std::sqrt(std::max<double>(1.0, static_cast<double>(pt.idler_counts))) / T);
  }
  const auto fs = rate_fit(ps, ss);
  const auto fi = rate_fit(pi, si);

  std::string csv = "pump_mW,signal_Hz,signal_sigma_Hz,idler_Hz,idler_sigma_Hz,signal_fit_Hz,idler_fit_Hz\n";
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const double p = ps[k].x;
    csv += fmt::format("{},{},{},{},{},{},{}\n", num(p), num(ps[k].y), num(ss[k]), num(pi[k].y), num(si[k]),
                       num(fs.params[0] * p * p + fs.params[1] * p), num(fi.params[0] * p * p + fi.params[1] * p));
  }
  ctx.write("fig3a_singles.csv", csv);

  ctx.results["signal_fit"] = {{"a_Hz_per_mW2", fs.params[0]}, {"a_sigma", fs.sigmas[0]},
                               {"b_Hz_per_mW", fs.params[1]}, {"b_sigma", fs.sigmas[1]}, {"fit", fit_json(fs)}};
  ctx.results["idler_fit"] = {{"a_Hz_per_mW2", fi.params[0]}, {"a_sigma", fi.sigmas[0]},
                              {"b_Hz_per_mW", fi.params[1]}, {"b_sigma", fi.sigmas[1]}, {"fit", fit_json(fi)}};
  ctx.comparisons.relative("signal_a", fs.params[0], fs.sigmas[0], 0.10, "singles_quadratic_Hz_per_mW2");
  ctx.comparisons.relative("signal_b", fs.params[1], fs.sigmas[1], 0.10, "singles_linear_Hz_per_mW");
  ctx.comparisons.relative("idler_a", fi.params[0], fi.sigmas[0], 0.10, "singles_quadratic_Hz_per_mW2");
  ctx.comparisons.relative("idler_b", fi.params[1], fi.sigmas[1], 0.10, "singles_linear_Hz_per_mW");
  const double pgr = source::infer_pgr({fs.params[0], fi.params[0], fs.params[1], fi.params[1], ctx.cfg.experiment.coeffs.c_c});
  ctx.results["pgr_from_fit_per_mW2"] = pgr;
}

void fig3b(Context& ctx) {
  const auto points = power_sweep(ctx, true, "fig3b");
  std::vector<fit::Point> pc;
  std::vector<double> sc;
  std::string csv = "pump_mW,coincidences_Hz,coincidences_sigma_Hz,car,car_sigma,fwhm_ps\n";
  ojson list = ojson::array();
  const SweepPoint* at_reference = nullptr;
  const double ref_pump = 0.198;
  for (const auto& pt : points) {
    if (!pt.analyzed) continue;
    const double T = pt.duration_s;
    const auto& a = pt.analysis;
    pc.push_back({pt.pump_mW, a.net_coincidences / T});
    sc.push_back(std::max(a.net_coincidences_sigma, 1.0) / T);
    csv += fmt::format("{},{},{},{},{},{}\n", num(pt.pump_mW), num(a.net_coincidences / T),
                       num(a.net_coincidences_sigma / T), a.car.infinite ? "inf" : num(a.car.car),
                       a.car.infinite ? "inf" : num(a.car.car_sigma), num(a.peak.fwhm));
    if (std::abs(pt.pump_mW - ref_pump) < 1e-9) at_reference = &pt;
  }
  ctx.write("fig3b_coincidences.csv", csv);

  if (pc.size() >= 2) {
    const auto fc = rate_fit(pc, sc);
    ctx.results["coincidence_fit"] = {{"c_c_Hz_per_mW2", fc.params[0]}, {"c_c_sigma", fc.sigmas[0]},
                                      {"linear_Hz_per_mW", fc.params[1]}, {"linear_sigma", fc.sigmas[1]},
                                      {"fit", fit_json(fc)}};
    ctx.comparisons.relative("c_c", fc.params[0], fc.sigmas[0], 0.10, "coincidence_quadratic_Hz_per_mW2");
  }
  if (at_reference && !at_reference->analysis.car.infinite) {
    const auto& c = at_reference->analysis.car;
    ctx.results["car_at_reference_pump"] = car_json(c);
    ctx.comparisons.factor("car_at_0.198mW", c.car, c.car_sigma, 2.0, "car");
  }
  // High-power trend: between 1/P^2 (noise-free) and 1/P (linear noise dominated).
  std::vector<const SweepPoint*> ok;
  for (const auto& pt : points)
    if (pt.analyzed && !pt.analysis.car.infinite && pt.pump_mW > 0.0) ok.push_back(&pt);
  std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->pump_mW < b->pump_mW; });
  if (ok.size() >= 2) {
    const auto* p1 = ok[ok.size() - 2];
    const auto* p2 = ok.back();
    const double k = p2->pump_mW / p1->pump_mW;
    const auto& c1 = p1->analysis.car;
    const auto& c2 = p2->analysis.car;
    const double ratio = c2.car / c1.car;
    const double ratio_sigma = ratio * std::hypot(c1.car_sigma / c1.car, c2.car_sigma / c2.car);
    ctx.results["car_trend"] = {{"pump_low_mW", p1->pump_mW}, {"pump_high_mW", p2->pump_mW},
                                {"car_ratio", ratio}, {"car_ratio_sigma", ratio_sigma},
                                {"inverse_square_ratio", 1.0 / (k * k)}};
    ctx.comparisons.range("car_high_power_ratio", ratio, ratio_sigma, 1.0 / (k * k) - 2.0 * ratio_sigma,
                          1.0 / k + 2.0 * ratio_sigma, "CAR(P2)/CAR(P1) between (P1/P2)^2 and P1/P2");
  }
}

// ---------------------------------------------------------------------------

void fig3c(Context& ctx) {
  const auto& s = ctx.cfg.scenarios.fig3c;
  const auto& an = ctx.cfg.analysis;
  mc::ExperimentConfig exp = ctx.cfg.experiment;
  exp.pump = PowerMW(s.pump_mW);
  const double rate = mc::experiment_pair_rate(exp);
  if (!(rate > 0.0)) throw ConfigError(ConfigErrorCode::invariant_violation, "scenarios.fig3c.pump_mW", "pair rate is zero");

  // One arm straight from the source: every signal photon, no idler.
  const mc::PairEmitter emitter(rate, exp.emission, rng::derive_seed(exp.seed, "fig3c"), {1.0, 0.0});
  const std::size_t slices = emitter.slice_count(s.duration_s);
  const auto per_segment = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(seconds_to_ps(s.segment_s) / emitter.slice_length_ps())));
  const std::size_t segments = (slices + per_segment - 1) / per_segment;
  const double total_ps = seconds_to_ps(s.duration_s);

  const auto [lo, hi] = corr::centered_range(an.g2_half_range_ps, an.bin_width_ps);
  corr::G2Accumulator acc(rng::derive_seed(exp.seed, "fig3c_split"), an.bin_width_ps, lo, hi);
  const std::size_t batch = std::max(1u, ctx.request.threads);
  for (std::size_t first = 0; first < segments; first += batch) {
    const std::size_t count = std::min(batch, segments - first);
    std::vector<TimeTagStream> built(count);
    parallel_for(count, ctx.request.threads, [&](std::size_t j) {
      const std::size_t seg = first + j;
      const std::size_t k0 = seg * per_segment;
      const std::size_t k1 = std::min(slices, k0 + per_segment);
      std::vector<PairEvent> events;
      for (std::size_t k = k0; k < k1; ++k) emitter.emit_slice(k, s.duration_s, events);
      TimeTagStream& st = built[j];
      st.tags_ps.reserve(events.size());
      for (const auto& ev : events)
        if (ev.has_signal()) st.tags_ps.push_back(ev.signal_t_ps);
      std::sort(st.tags_ps.begin(), st.tags_ps.end());
      const double begin = static_cast<double>(k0) * emitter.slice_length_ps();
      const double end = std::min(total_ps, static_cast<double>(k1) * emitter.slice_length_ps());
      st.duration_s = ps_to_seconds(end - begin);
    });
    for (const auto& st : built) acc.add(st);
  }

  const auto curve = acc.curve();
  std::string csv = "tau_ps,counts,g2\n";
  for (std::size_t i = 0; i < curve.raw.size(); ++i)
    csv += fmt::format("{},{},{}\n", num(curve.raw.bin_center(i)), curve.raw.counts[i], num(curve.g2[i]));
  ctx.write("fig3c_g2.csv", csv);

  ctx.results["pump_mW"] = s.pump_mW;
  ctx.results["duration_s"] = s.duration_s;
  ctx.results["mean_pairs_per_cell"] = emitter.mean_pairs_per_cell();
  ctx.results["coherence_cells"] = std::ceil(total_ps / exp.emission.coherence_time_ps);
  ctx.results["photons"] = acc.tags_seen();
  ctx.results["flat_level_counts_per_bin"] = curve.flat_level;
  try {
    const auto g = corr::analyze_g2(curve, an.g2_fit_half_range_ps);
    ctx.results["g2_zero_raw"] = g.g2_zero_raw;
    ctx.results["g2_zero_fit"] = g.g2_zero_fit;
    ctx.results["g2_zero_fit_sigma"] = g.g2_zero_fit_sigma;
    ctx.results["g2_infinity"] = g.g2_infinity;
    ctx.results["g2_infinity_sigma"] = g.g2_infinity_sigma;
    ctx.results["lorentzian"] = peak_json(g.lorentzian);
    ctx.comparisons.absolute("g2_zero", g.g2_zero_fit, g.g2_zero_fit_sigma, reference::sigma("g2_zero"), "g2_zero");
  } catch (const Error& e) {
    ctx.record_error("g2_fit", e);
  }
}

// ---------------------------------------------------------------------------

struct FransonRun {
  Histogram histogram;
  FransonCounts counts;
};

FransonRun franson_run(const mc::ExperimentConfig& exp, const config::AnalysisSettings& an) {
  const auto run = mc::run_experiment(exp);
  const auto [lo, hi] = corr::centered_range(an.histogram_half_range_ps, an.bin_width_ps);
  FransonRun r;
  r.histogram = corr::coincidence_histogram(run.signal, run.idler, an.bin_width_ps, lo, hi);
  r.counts = franson_counts(r.histogram, exp.franson->signal_amzi.delay_ps, an);
  return r;
}

std::vector<double> default_phases() {
  std::vector<double> p(18);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = 2.0 * constants::pi * static_cast<double>(k) / 18.0;
  return p;
}

void fig3d(Context& ctx) {
  const auto& s = ctx.cfg.scenarios.fig3d;
  const bool voltage_mode = !s.voltages_V.empty();
  const std::vector<double> xs = voltage_mode ? s.voltages_V : (s.phases_rad.empty() ? default_phases() : s.phases_rad);

  std::vector<double> counts(xs.size(), -1.0);
  parallel_for(xs.size(), ctx.request.threads, [&](std::size_t k) {
    try {
      mc::ExperimentConfig exp = ctx.cfg.experiment;
      exp.pump = PowerMW(s.pump_mW);
      exp.franson = ctx.cfg.franson_template;
      exp.franson->signal_amzi.phase_rad = voltage_mode ? s.pzt.phase(xs[k]) : xs[k];
      exp.seed = rng::derive_seed(ctx.cfg.experiment.seed, "fig3d_point", k);
      const auto r = franson_run(exp, ctx.cfg.analysis);
      counts[k] = r.counts.central;
      ctx.write(fmt::format("fig3d_hist_{:02d}.csv", k), io::histogram_csv(r.histogram));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      ctx.record_error(fmt::format("point_{:02d}", k), e);
    }
  });

  std::vector<fit::Point> pts;
  for (std::size_t k = 0; k < xs.size(); ++k)
    if (counts[k] >= 0.0) pts.push_back({xs[k], counts[k]});
  fit::FitOptions opts;
  opts.absolute_weights = true;
  const auto f = fit::fit_sinusoid(pts, voltage_mode ? fit::SinusoidAxis::voltage : fit::SinusoidAxis::phase, opts);

  std::string csv = voltage_mode ? "voltage_V,phase_rad,coincidences,fit_value\n" : "phase_rad,coincidences,fit_value\n";
  for (const auto& p : pts) {
    const double model = fit::models::sinusoid(p.x, f.fit.params);
    if (voltage_mode)
      csv += fmt::format("{},{},{},{}\n", num(p.x), num(s.pzt.phase(p.x)), num(p.y), num(model));
    else
      csv += fmt::format("{},{},{}\n", num(p.x), num(p.y), num(model));
  }
  ctx.write("fig3d_phase_sweep.csv", csv);

  ctx.results["pump_mW"] = s.pump_mW;
  ctx.results["intrinsic_visibility"] = ctx.cfg.franson_template.intrinsic_visibility;
  ctx.results["visibility"] = f.visibility;
  ctx.results["visibility_sigma"] = f.visibility_sigma;
  ctx.results["unphysical"] = f.unphysical;
  ctx.results["amplitude"] = f.amplitude;
  ctx.results["offset"] = f.offset;
  ctx.results["phase0_rad"] = f.phase0;
  if (voltage_mode) {
    ctx.results["rad_per_V_fit"] = f.rad_per_unit;
    ctx.results["rad_per_V_configured"] = s.pzt.rad_per_V;
  }
  ctx.results["fit"] = fit_json(f.fit);
  ctx.comparisons.absolute("local_visibility", f.visibility, f.visibility_sigma, reference::sigma("local_visibility"),
                           "local_visibility");
}

// ---------------------------------------------------------------------------

double visibility_sigma(double c_max, double c_min) {
  const double s = c_max + c_min;
  if (!(s > 0.0)) return 0.0;
  // dV/dmax = 2 min / s^2, dV/dmin = -2 max / s^2, Poisson variances.
  return 2.0 * std::sqrt(c_min * c_min * c_max + c_max * c_max * c_min) / (s * s);
}

void fig4(Context& ctx) {
  const auto& s = ctx.cfg.scenarios.fig4;
  const auto& an = ctx.cfg.analysis;
  mc::ExperimentConfig base = ctx.cfg.experiment;
  base.pump = PowerMW(s.pump_mW);
  franson::FransonSetting fr = ctx.cfg.franson_template;

  ojson calib;
  if (s.target_visibility > 0.0) {
    mc::ExperimentConfig probe = base;
    probe.franson = fr;
    const auto rates = expected_franson_rates(probe, an.coincidence_window_ps);
    fr.intrinsic_visibility =
        franson::calibrate_intrinsic_visibility(s.target_visibility, rates.genuine_central_hz, rates.accidental_hz);
    calib["target_visibility"] = s.target_visibility;
    calib["genuine_central_Hz"] = rates.genuine_central_hz;
    calib["accidental_Hz"] = rates.accidental_hz;
  }
  calib["intrinsic_visibility"] = fr.intrinsic_visibility;
  ctx.results["calibration"] = calib;

  struct Panel {
    const char* name;
    bool after;
    bool franson;
    bool constructive;
  };
  const Panel panels[] = {{"fig4a", false, false, false}, {"fig4b", true, false, false},
                          {"fig4c", false, true, true},   {"fig4d", true, true, true},
                          {"fig4e", false, true, false},  {"fig4f", true, true, false}};
  constexpr std::size_t kPanels = 6;
  std::vector<Histogram> hists(kPanels);
  std::vector<FransonCounts> fc(kPanels);
  std::vector<fit::PeakFit> peaks(kPanels);
  std::vector<bool> ok(kPanels, false);

  parallel_for(kPanels, ctx.request.threads, [&](std::size_t k) {
    const Panel& p = panels[k];
    try {
      mc::ExperimentConfig exp = base;
      if (p.after) exp.signal_fiber = s.link;
      if (p.franson) {
        exp.franson = fr;
        // Phase sum 0 or pi, set on the signal interferometer.
        exp.franson->signal_amzi.phase_rad = (p.constructive ? 0.0 : constants::pi) - fr.idler_amzi.phase_rad;
      } else {
        exp.franson.reset();
      }
      exp.seed = rng::derive_seed(ctx.cfg.experiment.seed, "fig4_panel", k);
      const auto run = mc::run_experiment(exp);
      const auto [lo, hi] = corr::centered_range(an.histogram_half_range_ps, an.bin_width_ps);
      hists[k] = corr::coincidence_histogram(run.signal, run.idler, an.bin_width_ps, lo, hi);
      ctx.write(std::string(p.name) + ".csv", io::histogram_csv(hists[k]));
      if (p.franson)
        fc[k] = franson_counts(hists[k], fr.signal_amzi.delay_ps, an);
      else
        peaks[k] = corr::fit_coincidence_peak(hists[k], an.peak_fit_half_range_ps);
      ok[k] = true;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      ctx.record_error(p.name, e);
    }
  });

  const double dt = fiber::dispersion_broadening(s.link.dispersion_ps_per_nm_km, base.ring.linewidth_nm, s.link.length_km);
  ctx.results["pump_mW"] = s.pump_mW;
  ctx.results["link_transmission"] = fiber::transmission(s.link);
  ctx.results["dispersion_broadening_ps"] = dt;
  ctx.results["expected_broadened_width_ps"] = fiber::broadened_width(base.emission.peak_fwhm_ps, dt);

  if (ok[0]) {
    ctx.results["fwhm_before_ps"] = peaks[0].fwhm;
    ctx.results["fwhm_before_sigma_ps"] = peaks[0].fwhm_sigma();
    ctx.comparisons.absolute("fwhm_before", peaks[0].fwhm, peaks[0].fwhm_sigma(), 3.0, "peak_width_transform_limited_ps");
  }
  if (ok[1]) {
    ctx.results["fwhm_after_ps"] = peaks[1].fwhm;
    ctx.results["fwhm_after_sigma_ps"] = peaks[1].fwhm_sigma();
    ctx.comparisons.absolute("fwhm_after", peaks[1].fwhm, peaks[1].fwhm_sigma(), 3.0, "observed_width_after_fiber_ps");
  }
  auto visibility = [&](std::size_t kmax, std::size_t kmin, const char* label, const char* ref_id, double tol) {
    if (!ok[kmax] || !ok[kmin]) return;
    const double cmax = fc[kmax].central, cmin = fc[kmin].central;
    try {
      const double v = franson::visibility_from_extrema(std::max(cmax, cmin), std::min(cmax, cmin));
      const double vs = visibility_sigma(cmax, cmin);
      ctx.results[std::string("visibility_") + label] = v;
      ctx.results[std::string("visibility_") + label + "_sigma"] = vs;
      ctx.results[std::string("counts_") + label] = {{"max", {{"central", cmax}, {"minus", fc[kmax].minus}, {"plus", fc[kmax].plus}, {"accidental_per_window", fc[kmax].accidental_per_window}}},
                                                 {"min", {{"central", cmin}, {"minus", fc[kmin].minus}, {"plus", fc[kmin].plus}, {"accidental_per_window", fc[kmin].accidental_per_window}}}};
      ctx.comparisons.absolute(std::string("visibility_") + label, v, vs, tol, ref_id);
    } catch (const Error& e) {
      ctx.record_error(std::string("visibility_") + label, e);
    }
  };
  visibility(2, 4, "before", "visibility_before_fiber", 0.02);
  visibility(3, 5, "after", "visibility_after_fiber", reference::sigma("visibility_after_fiber"));
  if (ctx.results.contains("visibility_before") && ctx.results.contains("visibility_after")) {
    const double drop = ctx.results["visibility_before"].get<double>() - ctx.results["visibility_after"].get<double>();
    const double drop_sigma = std::hypot(ctx.results["visibility_before_sigma"].get<double>(),
                                         ctx.results["visibility_after_sigma"].get<double>());
    ctx.results["visibility_drop"] = drop;
    ctx.results["visibility_drop_sigma"] = drop_sigma;
    ctx.comparisons.range("visibility_drop", drop, drop_sigma, -1.0, 0.02, "before minus after at most 0.02");
  }
}

void fig4_dispersion(Context& ctx) {
  const auto& link = ctx.cfg.scenarios.fig4.link;
  const auto& exp = ctx.cfg.experiment;
  const double dt = fiber::dispersion_broadening(link.dispersion_ps_per_nm_km, exp.ring.linewidth_nm, link.length_km);
  const double t0 = exp.emission.peak_fwhm_ps;
  const double bw = bandwidth_wl_to_freq(exp.ring.linewidth_nm, exp.ring.pump_nm);
  const double t_tl = ring::transform_limited_width(bw, exp.ring.time_bandwidth_product);
  const double width = fiber::broadened_width(t0, dt);
  ctx.results["linewidth_nm"] = exp.ring.linewidth_nm;
  ctx.results["bandwidth_GHz"] = bw;
  ctx.results["time_bandwidth_product"] = exp.ring.time_bandwidth_product;
  ctx.results["transform_limited_width_ps"] = t_tl;
  ctx.results["t0_ps"] = t0;
  ctx.results["dispersion_ps_per_nm_km"] = link.dispersion_ps_per_nm_km;
  ctx.results["length_km"] = link.length_km;
  ctx.results["dispersion_broadening_ps"] = dt;
  ctx.results["broadened_width_ps"] = width;
  ctx.results["broadened_transform_limited_ps"] = fiber::broadened_width(t_tl, dt);
  ctx.results["link_loss_dB"] = link.total_loss_dB;
  ctx.results["link_transmission"] = fiber::transmission(link);
  ctx.results["loss_dB_per_km"] = link.length_km > 0.0 ? link.total_loss_dB / link.length_km : 0.0;
  ctx.comparisons.absolute("dispersion_broadening", dt, 0.0, 0.05, "dispersion_broadening_ps");
  ctx.comparisons.absolute("broadened_width", fiber::broadened_width(t0, 25.7), 0.0, 0.05, "broadened_width_ps");
  ctx.comparisons.absolute("broadened_width_unrounded", width, 0.0, 0.05, "broadened_width_ps");
}

// ---------------------------------------------------------------------------

TimeTagStream pick(const std::vector<TimeTagStream>& streams, int channel, const std::filesystem::path& file) {
  if (channel >= 0) {
    for (const auto& s : streams)
      if (s.channel_id == channel) return s;
    throw IoError(fmt::format("{}: no records for channel {}", file.string(), channel));
  }
  if (streams.empty()) throw IoError(file.string() + ": no time tags");
  return streams.front();
}

void analyze(Context& ctx) {
  const auto& r = ctx.request;
  if (r.signal_file.empty() || r.idler_file.empty()) throw IoError("analyze needs both a signal and an idler file");
  TimeTagStream sig, idl;
  if (r.signal_file == r.idler_file) {
    const auto streams = io::read_tags(r.signal_file);
    sig = pick(streams, 0, r.signal_file);
    idl = pick(streams, 1, r.signal_file);
  } else {
    sig = pick(io::read_tags(r.signal_file), -1, r.signal_file);
    idl = pick(io::read_tags(r.idler_file), -1, r.idler_file);
  }
  if (!sig.is_valid()) throw IoError(r.signal_file.string() + ": tags unsorted or outside the duration");
  if (!idl.is_valid()) throw IoError(r.idler_file.string() + ": tags unsorted or outside the duration");

  ctx.results["signal_tags"] = sig.tags_ps.size();
  ctx.results["idler_tags"] = idl.tags_ps.size();
  ctx.results["signal_rate_Hz"] = sig.rate_hz();
  ctx.results["idler_rate_Hz"] = idl.rate_hz();
  ctx.results["bin_width_ps"] = ctx.cfg.analysis.bin_width_ps;
  const auto [lo, hi] = corr::centered_range(ctx.cfg.analysis.histogram_half_range_ps, ctx.cfg.analysis.bin_width_ps);
  const auto hist = corr::coincidence_histogram(sig, idl, ctx.cfg.analysis.bin_width_ps, lo, hi, r.threads);
  ctx.write("analyze_histogram.csv", io::histogram_csv(hist));
  ctx.results["histogram_total"] = hist.total();
  try {
    const auto a = analyze_pair(sig, idl, ctx.cfg.analysis);
    ctx.results["peak"] = peak_json(a.peak);
    ctx.results["car"] = car_json(a.car);
    ctx.results["net_coincidences"] = a.net_coincidences;
    ctx.results["net_coincidences_sigma"] = a.net_coincidences_sigma;
  } catch (const Error& e) {
    ctx.record_error("peak", e);
  }
}

void custom(Context& ctx) {
  const auto& exp = ctx.cfg.experiment;
  const auto run = mc::run_experiment(exp, {std::max(1u, ctx.request.threads)});
  if (ctx.request.export_tags) {
    io::write_tags_binary(ctx.request.out_dir / "custom_tags.ttag", {run.signal, run.idler});
    io::write_tags_csv(ctx.request.out_dir / "custom_tags.csv", {run.signal, run.idler});
    ctx.mark("custom_tags.ttag");
    ctx.mark("custom_tags.csv");
  }
  ctx.results["pair_rate_Hz"] = run.pair_rate_hz;
  ctx.results["emitted_events"] = run.emitted_events;
  ctx.results["signal_tags"] = run.signal.tags_ps.size();
  ctx.results["idler_tags"] = run.idler.tags_ps.size();
  ctx.results["signal_rate_Hz"] = run.signal.rate_hz();
  ctx.results["idler_rate_Hz"] = run.idler.rate_hz();
  ctx.results["expected_singles_signal_Hz"] = source::singles_rate(exp.pump, exp.coeffs.a_s, exp.coeffs.b_s);
  ctx.results["expected_singles_idler_Hz"] = source::singles_rate(exp.pump, exp.coeffs.a_i, exp.coeffs.b_i);

  std::vector<double> side;
  if (exp.franson) side = {-exp.franson->signal_amzi.delay_ps, exp.franson->signal_amzi.delay_ps};
  const auto [lo, hi] = corr::centered_range(ctx.cfg.analysis.histogram_half_range_ps, ctx.cfg.analysis.bin_width_ps);
  const auto hist = corr::coincidence_histogram(run.signal, run.idler, ctx.cfg.analysis.bin_width_ps, lo, hi);
  ctx.write("custom_histogram.csv", io::histogram_csv(hist));
  if (exp.franson) {
    const auto c = franson_counts(hist, exp.franson->signal_amzi.delay_ps, ctx.cfg.analysis);
    ctx.results["franson_counts"] = {{"central", c.central}, {"minus", c.minus}, {"plus", c.plus},
                                     {"accidental_per_window", c.accidental_per_window}};
  }
  try {
    const auto a = analyze_pair(run.signal, run.idler, ctx.cfg.analysis, side);
    ctx.results["peak"] = peak_json(a.peak);
    ctx.results["car"] = car_json(a.car);
    ctx.results["net_coincidences"] = a.net_coincidences;
    ctx.results["net_coincidences_sigma"] = a.net_coincidences_sigma;
  } catch (const Error& e) {
    ctx.record_error("peak", e);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& registered() {
  static const std::vector<std::string> names{"fig1b", "fig3a", "fig3b",          "fig3c",   "fig3d",
                                              "fig4",  "fig4_dispersion", "analyze", "custom"};
  return names;
}

bool is_registered(const std::string& name) {
  const auto& r = registered();
  return std::find(r.begin(), r.end(), name) != r.end();
}

CoincidenceAnalysis analyze_pair(const TimeTagStream& signal, const TimeTagStream& idler,
                                 const config::AnalysisSettings& analysis, const std::vector<double>& side_peaks_ps) {
  CoincidenceAnalysis a;
  const auto [lo, hi] = corr::centered_range(analysis.histogram_half_range_ps, analysis.bin_width_ps);
  a.histogram = corr::coincidence_histogram(signal, idler, analysis.bin_width_ps, lo, hi);
  a.peak = corr::fit_coincidence_peak(a.histogram, analysis.peak_fit_half_range_ps);
  const double window = analysis.car_window_ps > 0.0 ? analysis.car_window_ps : a.peak.fwhm;
  corr::CarOptions opts;
  opts.extra_exclusions_ps = side_peaks_ps;
  opts.fit_half_range_ps = analysis.peak_fit_half_range_ps;
  opts.center_ps = a.peak.center;
  a.car = corr::car(a.histogram, window, opts);

  std::size_t bins = 0;
  const auto raw = corr::window_counts(a.histogram, a.peak.center, analysis.coincidence_window_ps, &bins);
  const double per_bin = static_cast<double>(a.car.background_counts) / static_cast<double>(a.car.background_bins);
  const double nb = static_cast<double>(bins);
  a.net_coincidences = static_cast<double>(raw) - per_bin * nb;
  a.net_coincidences_sigma =
      std::sqrt(static_cast<double>(raw) + nb * nb * per_bin / static_cast<double>(a.car.background_bins));
  return a;
}

FransonCounts franson_counts(const Histogram& hist, double delay_ps, const config::AnalysisSettings& analysis) {
  const double w = analysis.coincidence_window_ps;
  FransonCounts c;
  c.central = static_cast<double>(corr::window_counts(hist, 0.0, w));
  c.minus = static_cast<double>(corr::window_counts(hist, -delay_ps, w));
  c.plus = static_cast<double>(corr::window_counts(hist, delay_ps, w));
  std::size_t window_bins = 0;
  corr::window_counts(hist, 0.0, w, &window_bins);

  const double guard = 3.0 * w;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double x = hist.bin_center(i);
    if (std::abs(x) <= guard || std::abs(x - delay_ps) <= guard || std::abs(x + delay_ps) <= guard) continue;
    sum += static_cast<double>(hist.counts[i]);
    ++n;
  }
  c.accidental_per_window = n > 0 ? sum / static_cast<double>(n) * static_cast<double>(window_bins) : 0.0;
  return c;
}

FransonRates expected_franson_rates(const mc::ExperimentConfig& exp, double window_ps) {
  if (!exp.franson) throw DomainError("expected_franson_rates needs a Franson setting");
  const bool physical = exp.rate_mode == mc::RateMode::physical;
  const double rate = mc::experiment_pair_rate(exp);
  const auto keep = mc::experiment_generation_keep(exp);
  const double det_s = physical ? exp.signal_detector.efficiency : 1.0;
  const double det_i = physical ? exp.idler_detector.efficiency : 1.0;
  const double amzi_s = db_to_linear(exp.franson->signal_amzi.insertion_loss_dB);
  const double amzi_i = db_to_linear(exp.franson->idler_amzi.insertion_loss_dB);
  const double fib_s = fiber::transmission(exp.signal_fiber);
  const double fib_i = fiber::transmission(exp.idler_fiber);
  const double arm_s = det_s * amzi_s * fib_s;
  const double arm_i = det_i * amzi_i * fib_i;
  const double p = exp.pump.mW();

  // Fraction of the Gaussian signal-idler delay inside the window.
  const double dt_s = fiber::dispersion_broadening(exp.signal_fiber.dispersion_ps_per_nm_km, exp.ring.linewidth_nm,
                                                   exp.signal_fiber.length_km);
  const double dt_i = fiber::dispersion_broadening(exp.idler_fiber.dispersion_ps_per_nm_km, exp.ring.linewidth_nm,
                                                   exp.idler_fiber.length_km);
  const double sigma = fwhm_to_sigma(std::sqrt(exp.emission.peak_fwhm_ps * exp.emission.peak_fwhm_ps +
                                               exp.signal_detector.jitter_fwhm_ps * exp.signal_detector.jitter_fwhm_ps +
                                               exp.idler_detector.jitter_fwhm_ps * exp.idler_detector.jitter_fwhm_ps +
                                               dt_s * dt_s + dt_i * dt_i));
  const double in_window = std::erf(0.5 * window_ps / (sigma * std::sqrt(2.0)));

  FransonRates r;
  // Phase average of 1/4 * 1/2 (1 + V0 cos).
  r.genuine_central_hz = rate * keep.signal * keep.idler * arm_s * arm_i * 0.125 * in_window;
  // Each photon exits the monitored port with probability 1/2.
  const double singles_s = 0.5 * (rate * keep.signal * det_s + exp.coeffs.b_s * p) * amzi_s * fib_s +
                           exp.signal_detector.dark_rate_hz;
  const double singles_i = 0.5 * (rate * keep.idler * det_i + exp.coeffs.b_i * p) * amzi_i * fib_i +
                           exp.idler_detector.dark_rate_hz;
  r.accidental_hz = singles_s * singles_i * ps_to_seconds(window_ps);
  return r;
}

Outcome run(const Request& request) {
  if (!is_registered(request.scenario))
    throw ConfigError(ConfigErrorCode::schema_violation, "scenario", "unknown scenario '" + request.scenario + "'");
  request.config.validate();
  Context ctx(request);
  const auto& n = request.scenario;
  if (n == "fig1b")
    fig1b(ctx);
  else if (n == "fig3a")
    fig3a(ctx);
  else if (n == "fig3b")
    fig3b(ctx);
  else if (n == "fig3c")
    fig3c(ctx);
  else if (n == "fig3d")
    fig3d(ctx);
  else if (n == "fig4")
    fig4(ctx);
  else if (n == "fig4_dispersion")
    fig4_dispersion(ctx);
  else if (n == "analyze")
    analyze(ctx);
  else
    custom(ctx);
  return ctx.finish();
}

}  // namespace entsim::scenarios
