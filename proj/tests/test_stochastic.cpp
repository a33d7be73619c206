#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "entsim/errors.hpp"
#include "entsim/franson.hpp"
#include "entsim/montecarlo.hpp"
#include "entsim/rng.hpp"

using namespace entsim;
using doctest::Approx;

TEST_SUITE("rng") {
  TEST_CASE("Philox4x32-10 known answer") {
    const auto out = rng::philox4x32_10({0, 0, 0, 0}, {0, 0});
    CHECK(out[0] == 0x6627e8d5u);
    CHECK(out[1] == 0xe169c58du);
    CHECK(out[2] == 0xbc57ac4cu);
    CHECK(out[3] == 0x9b00dbd8u);
  }

  TEST_CASE("hash primitives") {
    CHECK(rng::fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(rng::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(rng::splitmix64(0) == 0xe220a8397b1dcdafull);
    CHECK(rng::derive_seed(1, "a", 0) != rng::derive_seed(1, "b", 0));
    CHECK(rng::derive_seed(1, "a", 0) != rng::derive_seed(1, "a", 1));
    CHECK(rng::derive_seed(1, "a", 0) != rng::derive_seed(2, "a", 0));
    CHECK(rng::derive_seed(7, "x", 3) == rng::derive_seed(7, "x", 3));
  }

  TEST_CASE("streams are reproducible and distinct") {
    rng::RandomStream a(42, 3), b(42, 3), c(42, 4);
    int same_c = 0;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      same_c += x == c.next_u64();
    }
    CHECK(same_c == 0);
  }

  TEST_CASE("uniform moments") {
    rng::RandomStream s(123);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = s.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
      sq += u * u;
    }
    CHECK(std::abs(sum / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(sq / n - (sum / n) * (sum / n) == Approx(1.0 / 12.0).epsilon(0.01));
  }

  TEST_CASE("exponential passes Kolmogorov-Smirnov") {
    rng::RandomStream s(2024);
    const int n = 20000;
    const double rate = 3.5;
    std::vector<double> x(n);
    for (auto& v : x) v = s.exponential(rate);
    std::sort(x.begin(), x.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      const double cdf = 1.0 - std::exp(-rate * x[i]);
      d = std::max({d, std::abs(cdf - static_cast<double>(i) / n), std::abs((i + 1.0) / n - cdf)});
    }
    CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));
  }

  TEST_CASE("normal and geometric moments") {
    rng::RandomStream s(77);
    const int n = 100000;
    double m = 0.0, v = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = s.normal();
      m += z;
      v += z * z;
    }
    CHECK(std::abs(m / n) < 0.02);
    CHECK(v / n == Approx(1.0).epsilon(0.02));

    const double p = 0.2;
    double g = 0.0;
    for (int i = 0; i < n; ++i) g += static_cast<double>(s.geometric(p));
    CHECK(g / n == Approx((1.0 - p) / p).epsilon(0.03));
    CHECK(s.geometric(1.0) == 0);
  }
}

TEST_SUITE("franson") {
  TEST_CASE("interference law") {
    CHECK(franson::central_peak_probability(0.0, 0.0, 1.0) == 1.0);
    CHECK(franson::central_peak_probability(constants::pi / 2, constants::pi / 2, 1.0) == Approx(0.0));
    CHECK(franson::central_peak_probability(1.0, 0.5, 0.0) == 0.5);
    for (double phi = 0.0; phi < 6.3; phi += 0.7) {
      const auto w = franson::three_peak_weights(phi, 0.954);
      CHECK(w.minus == 0.25);
      CHECK(w.plus == 0.25);
      CHECK(w.central == Approx(franson::central_peak_probability(phi, 0.0, 0.954)));
    }
  }

  TEST_CASE("visibility and calibration") {
    CHECK(franson::visibility_from_extrema(947.5, 52.5) == Approx(0.895).epsilon(1e-12));
    CHECK(franson::visibility_from_extrema(10.0, 10.0) == 0.0);
    CHECK_THROWS_AS(franson::visibility_from_extrema(0.0, 0.0), DomainError);
    CHECK_THROWS_AS(franson::visibility_from_extrema(1.0, 2.0), DomainError);

    const double v0 = franson::calibrate_intrinsic_visibility(0.895, 351.36, 11.94);
    CHECK(v0 == Approx(0.895 * (1.0 + 11.94 / 351.36)));
    // The diluted visibility V0 G / (G + A) returns the target.
    CHECK(v0 * 351.36 / (351.36 + 11.94) == Approx(0.895));
    CHECK(franson::calibrate_intrinsic_visibility(0.9, 1.0, 0.0) == 0.9);
    CHECK_THROWS_AS(franson::calibrate_intrinsic_visibility(0.9, 1.0, 1.0), DomainError);
  }

  TEST_CASE("setting validation names the key") {
    franson::FransonSetting s;
    CHECK_NOTHROW(s.validate(205.5));
    s.idler_amzi.delay_ps = 1502.0;
    try {
      s.validate(205.5);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.key_path() == "franson.idler_amzi.delay_ps");
    }
    s = {};
    s.signal_amzi.delay_ps = s.idler_amzi.delay_ps = 100.0;
    CHECK_THROWS_AS(s.validate(205.5), ConfigError);
    s = {};
    s.intrinsic_visibility = 1.2;
    CHECK_THROWS_AS(s.validate(205.5), ConfigError);
  }

  TEST_CASE("port-resolved outcome frequencies") {
    const int n = 200000;
    std::vector<PairEvent> in(n);
    for (int i = 0; i < n; ++i) in[i] = {10000LL * i, 10000LL * i + 3, EventOrigin::genuine_pair};
    franson::FransonSetting s;
    s.intrinsic_visibility = 0.9;
    s.signal_amzi.phase_rad = 0.4;
    for (double phase : {0.0, 1.3, constants::pi}) {
      s.idler_amzi.phase_rad = phase - 0.4;
      const auto out = franson::apply_franson(in, s, 5);
      REQUIRE(out.size() == in.size());
      std::map<long long, int> delay;
      int signals = 0, idlers = 0;
      for (const auto& e : out) {
        signals += e.has_signal();
        idlers += e.has_idler();
        if (e.has_signal() && e.has_idler()) ++delay[e.signal_t_ps - e.idler_t_ps];
      }
      const double central = 0.25 * 0.5 * (1.0 + 0.9 * std::cos(phase));
      const double side = 0.25 * 0.25;
      CAPTURE(phase);
      CHECK(std::abs(delay[-3] - n * central) < 5.0 * std::sqrt(n * central) + 1.0);
      CHECK(std::abs(delay[1500 - 3] - n * side) < 5.0 * std::sqrt(n * side));
      CHECK(std::abs(delay[-1500 - 3] - n * side) < 5.0 * std::sqrt(n * side));
      CHECK(std::abs(signals - n * 0.5) < 5.0 * std::sqrt(n * 0.25));
      CHECK(std::abs(idlers - n * 0.5) < 5.0 * std::sqrt(n * 0.25));
    }
  }

  TEST_CASE("unpaired photons and determinism") {
    std::vector<PairEvent> in;
    for (int i = 0; i < 1000; ++i) in.push_back({100LL * i, PairEvent::kAbsent, EventOrigin::noise_single_signal});
    const franson::FransonSetting s;
    const auto a = franson::apply_franson(in, s, 9);
    CHECK(a == franson::apply_franson(in, s, 9));
    CHECK(a != franson::apply_franson(in, s, 10));
    for (const auto& e : a) CHECK_FALSE(e.has_idler());
  }
}

TEST_SUITE("montecarlo") {
  TEST_CASE("pair emission counts and delay width") {
    const source::EmissionModel em;
    const double rate = 2e5, T = 1.0;
    const auto ev = mc::generate_pair_events(rate, T, em, 11);
    CHECK(std::abs(static_cast<double>(ev.size()) - rate * T) < 5.0 * std::sqrt(rate * T));
    double m = 0.0, v = 0.0;
    for (const auto& e : ev) {
      REQUIRE(e.has_signal());
      REQUIRE(e.has_idler());
      const double d = static_cast<double>(e.signal_t_ps - e.idler_t_ps);
      m += d;
      v += d * d;
    }
    m /= static_cast<double>(ev.size());
    v = v / static_cast<double>(ev.size()) - m * m;
    CHECK(std::abs(m) < 2.0);
    CHECK(sigma_to_fwhm(std::sqrt(v)) == Approx(205.5).epsilon(0.01));
  }

  TEST_CASE("keep probabilities thin each photon") {
    const source::EmissionModel em;
    const double rate = 3e5;
    const auto ev = mc::generate_pair_events(rate, 1.0, em, 4, {0.5, 0.2});
    double s = 0, i = 0, both = 0;
    for (const auto& e : ev) {
      s += e.has_signal();
      i += e.has_idler();
      both += e.has_signal() && e.has_idler();
    }
    CHECK(s == Approx(rate * 0.5).epsilon(0.02));
    CHECK(i == Approx(rate * 0.2).epsilon(0.02));
    CHECK(both == Approx(rate * 0.1).epsilon(0.03));
  }

  TEST_CASE("slices are independent of order") {
    const mc::PairEmitter em(1e6, {}, 3);
    CHECK(em.mean_pairs_per_cell() == Approx(1e6 * 205.5e-12));
    const double T = 0.05;
    REQUIRE(em.slice_count(T) >= 2);
    std::vector<PairEvent> fwd, one;
    for (std::size_t k = 0; k < em.slice_count(T); ++k) em.emit_slice(k, T, fwd);
    em.emit_slice(1, T, one);
    std::vector<PairEvent> solo;
    em.emit_slice(1, T, solo);
    CHECK(one == solo);
    CHECK(std::is_sorted(fwd.begin(), fwd.end(),
                         [](const PairEvent& a, const PairEvent& b) { return a.signal_t_ps < b.signal_t_ps; }));
  }

  TEST_CASE("Poisson noise singles") {
    const auto t = mc::generate_noise_singles(100.0, 60.0, 8);
    CHECK(std::abs(static_cast<double>(t.size()) - 6000.0) < 5.0 * 77.46);
    CHECK(std::is_sorted(t.begin(), t.end()));
    CHECK(mc::generate_noise_singles(0.0, 60.0, 8).empty());
  }

  TEST_CASE("detector response") {
    std::vector<TimePs> tags;
    for (int i = 0; i < 100000; ++i) tags.push_back(1000000LL * i + 500000);
    mc::DetectorSpec d;
    d.efficiency = 0.8;
    d.dark_rate_hz = 0.0;
    d.jitter_fwhm_ps = 0.0;
    auto out = mc::detect(tags, d, 0.1, 5);
    CHECK(std::abs(static_cast<double>(out.tags_ps.size()) - 80000.0) < 5.0 * std::sqrt(100000 * 0.16));
    CHECK(out.is_valid());

    d.efficiency = 1.0;
    d.jitter_fwhm_ps = 100.0;
    out = mc::detect(tags, d, 0.1, 5);
    REQUIRE(out.tags_ps.size() == tags.size());
    double v = 0.0;
    for (std::size_t i = 0; i < tags.size(); ++i) v += std::pow(static_cast<double>(out.tags_ps[i] - tags[i]), 2);
    CHECK(sigma_to_fwhm(std::sqrt(v / static_cast<double>(tags.size()))) == Approx(100.0).epsilon(0.02));

    d.jitter_fwhm_ps = 0.0;
    d.dead_time_ps = 1500000.0;
    out = mc::detect(tags, d, 0.1, 5);
    CHECK(out.tags_ps.size() == 50000);
    for (std::size_t i = 1; i < out.tags_ps.size(); ++i) CHECK(out.tags_ps[i] - out.tags_ps[i - 1] >= 1500000);

    d = {};
    d.efficiency = 1.5;
    CHECK_THROWS_AS(mc::detect(tags, d, 0.1, 5), ConfigError);
  }

  TEST_CASE("experiment validation reports key paths") {
    mc::ExperimentConfig c;
    c.duration_s = 0.0;
    try {
      c.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.key_path() == "duration_s");
    }
    c = {};
    c.idler_detector.dark_rate_hz = -1.0;
    try {
      c.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.key_path() == "detectors.idler.dark_rate_Hz");
    }
    c = {};
    c.coeffs.c_c = 1e6;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("end-to-end rates in measured mode") {
    mc::ExperimentConfig c;
    c.pump = PowerMW(1.0);
    c.duration_s = 2.0;
    c.signal_detector.dark_rate_hz = 0.0;
    c.idler_detector.dark_rate_hz = 0.0;
    const auto r = mc::run_experiment(c);
    CHECK(r.pair_rate_hz == Approx(2119156.7369).epsilon(1e-9));
    const double singles = 3.4e4 + 1.9e4;
    CHECK(r.signal.rate_hz() == Approx(singles).epsilon(0.01));
    CHECK(r.idler.rate_hz() == Approx(singles).epsilon(0.01));
    CHECK(r.signal.is_valid());
    CHECK(r.idler.is_valid());
  }

  TEST_CASE("thread count does not change the output") {
    mc::ExperimentConfig c;
    c.pump = PowerMW(1.0);
    c.duration_s = 0.3;
    c.franson = franson::FransonSetting{};
    c.signal_fiber = {20.0, 4.0, 18.0};
    const auto a = mc::run_experiment(c, {1});
    const auto b = mc::run_experiment(c, {3});
    CHECK(a.signal.tags_ps == b.signal.tags_ps);
    CHECK(a.idler.tags_ps == b.idler.tags_ps);
    CHECK(a.emitted_events == b.emitted_events);
    c.seed = 2;
    CHECK(mc::run_experiment(c).signal.tags_ps != a.signal.tags_ps);
  }
}
