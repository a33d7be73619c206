// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>

#include "entsim/config.hpp"
#include "entsim/correlator.hpp"
#include "entsim/fiber_channel.hpp"
#include "entsim/fitting.hpp"
#include "entsim/montecarlo.hpp"
#include "entsim/pair_source.hpp"
#include "entsim/ring_model.hpp"
#include "entsim/rng.hpp"
#include "entsim/scenarios.hpp"
#include "entsim/units.hpp"

using namespace entsim;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

fs::path out_root() {
  const fs::path p = fs::temp_directory_path() / "entsim_acceptance";
  fs::create_directories(p);
  return p;
}

nlohmann::ordered_json run_scenario(const std::string& name, const config::ScenarioConfig& cfg,
                                    const std::string& tag, unsigned threads = 1) {
  const fs::path dir = out_root() / tag;
  fs::remove_all(dir);
  scenarios::Request r;
  r.scenario = name;
  r.config = cfg;
  r.out_dir = dir;
  r.threads = threads;
  auto out = scenarios::run(r);
  return out.summary;
}

bool within(double x, double target, double tol) { return std::abs(x - target) <= tol; }

// 1
Verdict pgr_identity() {
  const double pgr = source::infer_pgr({3.4e4, 3.4e4, 0.0, 0.0, 545.5});
  const double rel = std::abs(pgr / 2.1e6 - 1.0);
  return {within(pgr, 2.12e6, 0.005e6) && rel <= 0.02,
          fmt::format("PGR {:.6g} /s/mW^2, {:.2f}% from 2.1e6", pgr, 100.0 * rel)};
}

// 2
Verdict dispersion_chain() {
  const double dt = fiber::dispersion_broadening(18.0, 0.0176, 81.0);
  const double w = fiber::broadened_width(205.5, 25.7);
  return {within(dt, 25.7, 0.05) && within(w, 207.1, 0.05),
          fmt::format("dt {:.4f} ps, broadened {:.4f} ps", dt, w)};
}

// 3
Verdict brightness() {
  const double b = ring::brightness(2.1e6, 2.2);
  return {b >= 0.9e6 && b <= 1.0e6, fmt::format("brightness {:.6g} /s/GHz/mW^2", b)};
}

// 4
Verdict loss_budget() {
  const fiber::FiberSpec link{81.0, 16.8, 0.0};
  const double t = fiber::transmission(link);
  const std::size_t n = 1000000;
  TimeTagStream s{0, {}, 1.0};
  s.tags_ps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) s.tags_ps.push_back(static_cast<TimePs>(i) * 1000000);
  const auto out = fiber::apply_channel(s, link, 0.0176, rng::derive_seed(1, "acceptance_loss"));
  const double mean = t * static_cast<double>(n);
  const double sd = std::sqrt(static_cast<double>(n) * t * (1.0 - t));
  const double z = (static_cast<double>(out.tags_ps.size()) - mean) / sd;
  return {within(t, 0.0209, 1e-4) && std::abs(z) <= 5.0,
          fmt::format("T {:.6f}; {} of {} survived, z = {:+.2f}", t, out.tags_ps.size(), n, z)};
}

// 5
Verdict franson_analytic() {
  double worst = 0.0;
  for (double v0 : {1.0, 0.954, 0.895}) {
    std::vector<fit::Point> pts;
    for (int k = 0; k < 18; ++k) {
      const double phi = 2.0 * constants::pi * k / 18.0;
      pts.push_back({phi, 1e4 * franson::central_peak_probability(phi, 0.0, v0)});
    }
    const auto f = fit::fit_sinusoid(pts);
    worst = std::max(worst, std::abs(f.visibility - v0));
  }
  return {worst <= 1e-6, fmt::format("max |V - V0| = {:.3g}", worst)};
}

// 6
Verdict franson_mc() {
  auto cfg = config::default_config();
  cfg.experiment.duration_s = 60.0;
  const auto s = run_scenario("fig4", cfg, "c6_fig4");
  const auto& r = s["results"];
  if (!r.contains("visibility_before") || !r.contains("visibility_after"))
    return {false, "fig4 did not produce both visibilities: " + s["errors"].dump()};
  const double vb = r["visibility_before"], va = r["visibility_after"];
  const double drop = vb - va;
  return {within(vb, 0.895, 0.02) && drop <= 0.02,
          fmt::format("V0 {:.4f}; V before {:.4f} +- {:.4f}, after {:.4f} +- {:.4f}, drop {:+.4f}",
                      r["calibration"]["intrinsic_visibility"].get<double>(),
                      vb, r["visibility_before_sigma"].get<double>(), va, r["visibility_after_sigma"].get<double>(),
                      drop)};
}

// 7
Verdict car() {
  auto cfg = config::default_config();
  cfg.experiment.duration_s = 60.0;
  cfg.scenarios.fig3.pump_grid_mW = {0.198, 1.25, 2.5};
  const auto s = run_scenario("fig3b", cfg, "c7_fig3b");
  const auto& r = s["results"];
  if (!r.contains("car_at_reference_pump") || !r["car_at_reference_pump"]["car"].is_number())
    return {false, "no finite CAR at 0.198 mW: " + s["errors"].dump()};
  const double c = r["car_at_reference_pump"]["car"];
  const double cs = r["car_at_reference_pump"]["car_sigma"];
  const double ratio = r["car_trend"]["car_ratio"];
  const double rs = r["car_trend"]["car_ratio_sigma"];
  const double k = r["car_trend"]["pump_high_mW"].get<double>() / r["car_trend"]["pump_low_mW"].get<double>();
  const bool factor2 = c >= 5218.0 / 2.0 && c <= 5218.0 * 2.0;
  const bool trend = ratio >= 1.0 / (k * k) - 2.0 * rs && ratio <= 1.0 / k + 2.0 * rs;
  return {factor2 && trend,
          fmt::format("CAR(0.198 mW) {:.0f} +- {:.0f} (envelope 2609..10436); CAR(2.5)/CAR(1.25) {:.4f} +- {:.4f}, "
                      "1/k^2 = {:.4f}, 1/k = {:.4f}",
                      c, cs, ratio, rs, 1.0 / (k * k), 1.0 / k)};
}

// 8
Verdict g2_thermal() {
  auto cfg = config::default_config();
  cfg.scenarios.fig3c.duration_s = 10.0;
  const auto s = run_scenario("fig3c", cfg, "c8_fig3c");
  const auto& r = s["results"];
  if (!r.contains("g2_zero_fit")) return {false, "g2 analysis failed: " + s["errors"].dump()};
  const double mu = r["mean_pairs_per_cell"], cells = r["coherence_cells"];
  const double g0 = r["g2_zero_fit"], ginf = r["g2_infinity"];
  return {mu <= 1e-3 && cells >= 1e6 && within(g0, 2.0, 0.05) && within(ginf, 1.0, 0.02),
          fmt::format("mu {:.3g}, cells {:.3g}; g2(0) {:.4f} +- {:.4f} (raw {:.4f}), g2(inf) {:.4f}", mu, cells, g0,
                      r["g2_zero_fit_sigma"].get<double>(), r["g2_zero_raw"].get<double>(), ginf)};
}

// 9
Verdict peak_width() {
  mc::ExperimentConfig exp;
  exp.coeffs = {4.8e5, 4.8e5, 0.0, 0.0, 4.8e5};
  exp.pump = PowerMW(1.0);
  exp.duration_s = 10.0;
  exp.seed = 9;
  const auto lo_hi = corr::centered_range(5000.0, 20.0);
  auto fwhm = [&](const mc::ExperimentConfig& c) {
    const auto run = mc::run_experiment(c);
    const auto h = corr::coincidence_histogram(run.signal, run.idler, 20.0, lo_hi.first, lo_hi.second);
    return corr::fit_coincidence_peak(h, 1000.0);
  };
  const auto before = fwhm(exp);
  exp.signal_fiber = config::default_config().scenarios.fig4.link;
  const auto after = fwhm(exp);
  return {within(before.fwhm, 205.0, 3.0) && within(after.fwhm, 207.0, 3.0),
          fmt::format("FWHM before {:.2f} +- {:.2f} ps, after {:.2f} +- {:.2f} ps", before.fwhm, before.fwhm_sigma(),
                      after.fwhm, after.fwhm_sigma())};
}

// 10
Verdict fit_recovery() {
  double worst = 0.0;
  auto rel = [&](double got, double want) { worst = std::max(worst, std::abs(got / want - 1.0)); };

  const std::vector<double> grid{0.1, 0.198, 0.4, 0.7, 1.0, 1.5, 2.0, 2.5};
  std::vector<fit::Point> q;
  for (double p : grid) q.push_back({p, 3.4e4 * p * p + 1.9e4 * p});
  const auto qr = fit::fit_quadratic_linear(q);
  rel(qr.params[0], 3.4e4);
  rel(qr.params[1], 1.9e4);

  std::vector<fit::Point> dip, peak;
  for (int i = -120; i <= 120; ++i) {
    const double x = 1545.7 + 0.0005 * i;
    dip.push_back({x, 1.0 - 0.9 / (1.0 + std::pow(2.0 * (x - 1545.7) / 0.0176, 2))});
    const double t = 10.0 * i;
    peak.push_back({t, 30.0 + 5000.0 * std::exp(-4.0 * std::log(2.0) * std::pow((t - 7.0) / 205.5, 2))});
  }
  const auto lz = fit::fit_lorentzian(dip);
  rel(lz.center, 1545.7);
  rel(lz.fwhm, 0.0176);
  rel(lz.amplitude, -0.9);
  rel(lz.offset, 1.0);
  const auto gs = fit::fit_gaussian(peak);
  rel(gs.center, 7.0);
  rel(gs.fwhm, 205.5);
  rel(gs.amplitude, 5000.0);
  rel(gs.offset, 30.0);

  std::vector<fit::Point> sine;
  for (int k = 0; k < 18; ++k) {
    const double phi = 2.0 * constants::pi * k / 18.0;
    sine.push_back({phi, 400.0 + 350.0 * std::cos(phi + 0.7)});
  }
  const auto sf = fit::fit_sinusoid(sine);
  rel(sf.amplitude, 350.0);
  rel(sf.offset, 400.0);
  rel(sf.phase0, 0.7);

  std::mt19937_64 gen(rng::derive_seed(1, "acceptance_quadratic"));
  int ok_a = 0, ok_b = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<fit::Point> pts;
    for (double p : grid) {
      std::poisson_distribution<long long> pois(3.4e4 * p * p + 1.9e4 * p);
      pts.push_back({p, static_cast<double>(pois(gen))});
    }
    const auto r = fit::fit_quadratic_linear(pts);
    ok_a += std::abs(r.params[0] - 3.4e4) <= 3.0 * r.sigmas[0];
    ok_b += std::abs(r.params[1] - 1.9e4) <= 3.0 * r.sigmas[1];
  }
  const bool noisy = ok_a >= 190 && ok_b >= 190;
  return {worst <= 1e-6 && noisy,
          fmt::format("worst noiseless relative error {:.2g}; 3-sigma coverage a {}/{}, b {}/{}", worst, ok_a, trials,
                      ok_b, trials)};
}

// 11
Verdict oracle_equivalence() {
  rng::RandomStream r(rng::derive_seed(1, "acceptance_oracle"));
  int mismatches = 0;
  std::uint64_t total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto draw = [&](std::size_t n, TimePs span) {
      std::vector<TimePs> t(n);
      for (auto& v : t) v = static_cast<TimePs>(r.uniform() * static_cast<double>(span));
      std::sort(t.begin(), t.end());
      return t;
    };
    const TimePs span = 1000 + static_cast<TimePs>(r.uniform() * 2e5);
    const TimeTagStream s{0, draw(1 + static_cast<std::size_t>(r.uniform() * 1000), span), 1.0};
    const TimeTagStream i{1, draw(1 + static_cast<std::size_t>(r.uniform() * 1000), span), 1.0};
    const double w = 1.0 + std::floor(r.uniform() * 40.0);
    const double lo = -std::floor(r.uniform() * 3000.0) - 0.5 * w, hi = std::floor(r.uniform() * 3000.0) + w;
    const auto fast = corr::coincidence_histogram(s, i, w, lo, hi);
    std::vector<std::uint64_t> slow(fast.counts.size(), 0);
    for (TimePs a : s.tags_ps)
      for (TimePs b : i.tags_ps) {
        const double d = static_cast<double>(a - b);
        if (d < lo || d >= hi) continue;
        const auto k = static_cast<std::size_t>(std::floor((d - lo) / w));
        if (k < slow.size()) ++slow[k];
      }
    mismatches += fast.counts != slow;
    total += fast.total();
  }
  return {mismatches == 0, fmt::format("{} of 100 streams differ; {} coincidences compared", mismatches, total)};
}

// 12
Verdict determinism() {
  auto cfg = config::default_config();
  cfg.experiment.pump = PowerMW(1.5);
  cfg.experiment.duration_s = 2.0;
  cfg.experiment.franson = cfg.franson_template;
  cfg.experiment.signal_fiber = cfg.scenarios.fig4.link;
  cfg.scenarios.fig3.pump_grid_mW = {0.5, 1.0, 2.0};
  std::size_t files = 0, differing = 0;
  for (const std::string name : {"custom", "fig3a"}) {
    const std::vector<std::pair<std::string, unsigned>> runs{{"a", 1}, {"b", 1}, {"c", 2}};
    for (const auto& [tag, threads] : runs) run_scenario(name, cfg, "c12_" + name + "_" + tag, threads);
    const fs::path ref = out_root() / ("c12_" + name + "_a");
    for (const auto& entry : fs::directory_iterator(ref)) {
      ++files;
      auto bytes = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
      };
      const std::string a = bytes(entry.path());
      for (const char* other : {"_b", "_c"}) {
        const fs::path p = out_root() / ("c12_" + name + other) / entry.path().filename();
        if (!fs::exists(p) || bytes(p) != a) ++differing;
      }
    }
  }
  return {files > 0 && differing == 0,
          fmt::format("{} files x 2 reruns (1 and 2 threads), {} differ", files, differing)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "pgr_identity", pgr_identity},
      {2, "dispersion_chain", dispersion_chain},
      {3, "brightness", brightness},
      {4, "loss_budget", loss_budget},
      {5, "franson_analytic", franson_analytic},
      {6, "franson_monte_carlo", franson_mc},
      {7, "car_order_of_magnitude", car},
      {8, "g2_thermal", g2_thermal},
      {9, "peak_width_after_fiber", peak_width},
      {10, "fit_recovery", fit_recovery},
      {11, "oracle_equivalence", oracle_equivalence},
      {12, "determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    fmt::print("{} criterion {:2d} {}: {} [{:.1f} s]\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail, secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
