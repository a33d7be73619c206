#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "entsim/config.hpp"
#include "entsim/errors.hpp"
#include "entsim/reference.hpp"
#include "entsim/scenarios.hpp"
#include "entsim/tag_io.hpp"

using namespace entsim;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("entsim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

scenarios::Request request(const std::string& name, const config::ScenarioConfig& cfg, const fs::path& dir) {
  scenarios::Request r;
  r.scenario = name;
  r.config = cfg;
  r.out_dir = dir;
  return r;
}

ConfigError config_error(const std::string& text) {
  try {
    config::parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected ConfigError for " << text);
  return ConfigError(ConfigErrorCode::parse_error, "", "");
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults round-trip") {
    const auto c = config::default_config();
    CHECK_NOTHROW(c.validate());
    const std::string text = config::serialize(c);
    const auto back = config::parse_config(text);
    CHECK(config::serialize(back) == text);
    CHECK(config::config_hash(back) == config::config_hash(c));
    CHECK(config::config_hash(c).size() == 16);
  }

  TEST_CASE("overrides apply and alter the hash") {
    const auto c = config::parse_config(R"({"pump_mW": 2.27, "seed": 9, "rate_mode": "physical",
      "fibers": {"signal": {"length_km": 81, "loss_dB_per_km": 0.2}},
      "franson": {"enabled": true, "signal_amzi": {"phase_rad": 1.0}}})");
    CHECK(c.experiment.pump.mW() == 2.27);
    CHECK(c.experiment.seed == 9);
    CHECK(c.seed_from_file);
    CHECK(c.experiment.rate_mode == mc::RateMode::physical);
    CHECK(c.experiment.signal_fiber.total_loss_dB == Approx(16.2));
    REQUIRE(c.experiment.franson.has_value());
    CHECK(c.experiment.franson->signal_amzi.phase_rad == 1.0);
    CHECK(config::config_hash(c) != config::config_hash(config::default_config()));
    CHECK_FALSE(config::parse_config("{}").seed_from_file);
  }

  TEST_CASE("idler coefficients follow the signal ones") {
    const auto c = config::parse_config(R"({"coefficients": {"a_s_Hz_per_mW2": 3.0e4, "b_s_Hz_per_mW": 1.0e4}})");
    CHECK(c.experiment.coeffs.a_i == 3.0e4);
    CHECK(c.experiment.coeffs.b_i == 1.0e4);
  }

  TEST_CASE("errors carry codes and key paths") {
    auto e = config_error(R"({"pump_mW": -1})");
    CHECK(e.code() == ConfigErrorCode::invariant_violation);
    CHECK(e.key_path() == "pump_mW");

    e = config_error(R"({"detectors": {"signal": {"jitter_ps": 3}}})");
    CHECK(e.code() == ConfigErrorCode::schema_violation);
    CHECK(e.key_path() == "detectors.signal.jitter_ps");

    e = config_error(R"({"duration_s": "long"})");
    CHECK(e.code() == ConfigErrorCode::schema_violation);
    CHECK(e.key_path() == "duration_s");

    e = config_error("{not json");
    CHECK(e.code() == ConfigErrorCode::parse_error);

    e = config_error(R"({"schema_version": 2})");
    CHECK(e.key_path() == "schema_version");

    e = config_error(R"({"fibers": {"idler": {"total_loss_dB": 1, "loss_dB_per_km": 0.2}}})");
    CHECK(e.key_path() == "fibers.idler.loss_dB_per_km");

    e = config_error(R"({"detectors": {"idler": {"efficiency": 1.2}}})");
    CHECK(e.code() == ConfigErrorCode::invariant_violation);
    CHECK(e.key_path() == "detectors.idler.efficiency");

    e = config_error(R"({"scenarios": {"fig3": {"pump_grid_mW": [1.0, "x"]}}})");
    CHECK(e.key_path() == "scenarios.fig3.pump_grid_mW[1]");

    e = config_error(R"({"rate_mode": "guess"})");
    CHECK(e.key_path() == "rate_mode");

    try {
      config::load_config("/nonexistent/entsim.json");
      FAIL("expected missing_file");
    } catch (const ConfigError& err) {
      CHECK(err.code() == ConfigErrorCode::missing_file);
    }
  }

  TEST_CASE("seed from the environment") {
    ::setenv("ENTSIM_SEED", "1234", 1);
    CHECK(config::seed_from_environment() == std::optional<std::uint64_t>(1234));
    ::setenv("ENTSIM_SEED", "12x", 1);
    CHECK_THROWS_AS(config::seed_from_environment(), ConfigError);
    ::unsetenv("ENTSIM_SEED");
    CHECK_FALSE(config::seed_from_environment().has_value());
  }

  TEST_CASE("shipped baseline config loads and round-trips") {
    const auto c = config::load_config(fs::path(ENTSIM_SOURCE_DIR) / "configs" / "baseline.json");
    CHECK(config::serialize(config::parse_config(config::serialize(c))) == config::serialize(c));
  }
}

TEST_SUITE("tag_io") {
  TEST_CASE("binary round trip keeps channels and duration") {
    const auto dir = scratch("bin");
    TimeTagStream a{0, {0, 5, 1000000000000LL}, 2.0}, b{1, {3, 5, 7}, 2.0};
    io::write_tags_binary(dir / "t.ttag", {a, b});
    const auto back = io::read_tags(dir / "t.ttag");
    REQUIRE(back.size() == 2);
    CHECK(back[0].channel_id == 0);
    CHECK(back[0].tags_ps == a.tags_ps);
    CHECK(back[1].tags_ps == b.tags_ps);
    CHECK(back[0].duration_s == 2.0);
    CHECK(back[1].duration_s == 2.0);
  }

  TEST_CASE("CSV round trip") {
    const auto dir = scratch("csv");
    TimeTagStream a{0, {10, 20}, 1e-9}, b{1, {15}, 1e-9};
    io::write_tags_csv(dir / "t.csv", {a, b});
    CHECK(slurp(dir / "t.csv") == "channel,t_ps\n0,10\n1,15\n0,20\n");
    const auto back = io::read_tags(dir / "t.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].tags_ps == a.tags_ps);
    CHECK(back[1].tags_ps == b.tags_ps);
    CHECK(back[0].duration_ps() == 21);
  }

  TEST_CASE("malformed input") {
    const auto dir = scratch("bad");
    {
      std::ofstream o(dir / "bad.csv");
      o << "channel,t_ps\n0,abc\n";
    }
    CHECK_THROWS_AS(io::read_tags(dir / "bad.csv"), IoError);
    {
      std::ofstream o(dir / "short.ttag", std::ios::binary);
      o << "TTAG";
    }
    CHECK_THROWS_AS(io::read_tags(dir / "short.ttag"), IoError);
    CHECK_THROWS_AS(io::read_tags(dir / "missing.ttag"), IoError);
  }

  TEST_CASE("histogram CSV") {
    Histogram h{20.0, -30.0, {1, 2, 3}};
    CHECK(io::histogram_csv(h) == "bin_center_ps,counts\n-20,1\n0,2\n20,3\n");
  }
}

TEST_SUITE("reference") {
  TEST_CASE("embedded table") {
    CHECK(reference::version() == 1);
    CHECK(reference::value("car") == 5218.0);
    CHECK(reference::sigma("car") == 470.0);
    CHECK(reference::value("g2_zero") == 2.073);
    CHECK(reference::sigma("fsr_GHz") == 0.0);
    CHECK(reference::values("resonance_q_factors").size() == 4);
    CHECK_THROWS_AS(reference::value("no_such_entry"), std::out_of_range);
  }
}

TEST_SUITE("cli_scenarios") {
  TEST_CASE("registry") {
    CHECK(scenarios::registered().size() == 9);
    CHECK(scenarios::is_registered("fig4"));
    CHECK_FALSE(scenarios::is_registered("fig5"));
    const auto r = request("fig5", config::default_config(), scratch("unknown"));
    CHECK_THROWS_AS(scenarios::run(r), ConfigError);
  }

  TEST_CASE("dispersion scenario summary") {
    const auto dir = scratch("disp");
    const auto r = request("fig4_dispersion", config::default_config(), dir);
    const auto out = scenarios::run(r);
    CHECK(out.exit_code == 0);
    const auto summary = nlohmann::json::parse(slurp(dir / "fig4_dispersion_summary.json"));
    CHECK(summary["schema_version"] == 1);
    CHECK(summary["status"] == "complete");
    CHECK(summary["all_comparisons_pass"] == true);
    CHECK(summary["config_hash"] == config::config_hash(r.config));
  }

  TEST_CASE("custom run exports tags that analyze reproduces") {
    auto cfg = config::default_config();
    cfg.experiment.pump = PowerMW(1.0);
    cfg.experiment.duration_s = 0.5;
    const auto dir = scratch("custom");
    const auto r = request("custom", cfg, dir);
    const auto out = scenarios::run(r);
    CHECK(out.exit_code == 0);
    REQUIRE(fs::exists(dir / "custom_tags.ttag"));
    REQUIRE(fs::exists(dir / "custom_histogram.csv"));

    const auto dir2 = scratch("analyze");
    auto a = request("analyze", cfg, dir2);
    a.signal_file = a.idler_file = dir / "custom_tags.ttag";
    CHECK(scenarios::run(a).exit_code == 0);
    CHECK(slurp(dir2 / "analyze_histogram.csv") == slurp(dir / "custom_histogram.csv"));
  }

  TEST_CASE("analysis helpers on a simulated pair") {
    auto cfg = config::default_config();
    cfg.experiment.pump = PowerMW(1.0);
    cfg.experiment.duration_s = 1.0;
    const auto res = mc::run_experiment(cfg.experiment);
    const auto an = scenarios::analyze_pair(res.signal, res.idler, cfg.analysis);
    CHECK(std::abs(an.peak.fwhm - 206.6) < 4.0 * an.peak.fwhm_sigma());
    CHECK(an.net_coincidences == Approx(545.5).epsilon(0.15));
    CHECK(an.car.car > 1.0);

    auto fr = cfg.experiment;
    fr.franson = cfg.franson_template;
    const auto rates = scenarios::expected_franson_rates(fr, 1000.0);
    CHECK(rates.genuine_central_hz > 0.0);
    CHECK(rates.accidental_hz > 0.0);
  }

  TEST_CASE("fig3a recovers the singles coefficient from the baseline config") {
    auto cfg = config::load_config(fs::path(ENTSIM_SOURCE_DIR) / "configs" / "baseline.json");
    cfg.experiment.duration_s = 5.0;
    const auto dir = scratch("fig3a");
    const auto out = scenarios::run(request("fig3a", cfg, dir));
    CHECK(out.exit_code == 0);
    const double a = out.summary["results"]["signal_fit"]["a_Hz_per_mW2"];
    CHECK(std::abs(a / 3.4e4 - 1.0) < 0.10);
    CHECK(slurp(dir / "fig3a_singles.csv").rfind("pump_mW,", 0) == 0);
    CHECK(out.summary["artifact_version"] == scenarios::kArtifactVersion);
  }

  TEST_CASE("plot file contracts") {
    auto cfg = config::default_config();
    cfg.experiment.duration_s = 1.0;
    const auto d3 = scratch("fig3d");
    CHECK(scenarios::run(request("fig3d", cfg, d3)).exit_code == 0);
    const std::string sweep = slurp(d3 / "fig3d_phase_sweep.csv");
    CHECK(sweep.rfind("phase_rad,coincidences,fit_value\n", 0) == 0);
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 19);
    CHECK(sweep.find('\r') == std::string::npos);

    const auto d4 = scratch("fig4");
    scenarios::run(request("fig4", cfg, d4));
    for (const char* panel : {"fig4a", "fig4b", "fig4c", "fig4d", "fig4e", "fig4f"})
      CHECK(fs::exists(d4 / (std::string(panel) + ".csv")));
    CHECK(fs::exists(d4 / "fig4_summary.json"));
  }

  TEST_CASE("fig3d phase sweep recovers the configured visibility") {
    const auto out = scenarios::run(request("fig3d", config::default_config(), scratch("fig3d_full")));
    REQUIRE(out.exit_code == 0);
    const auto& r = out.summary["results"];
    const double v = r["visibility"], sv = r["visibility_sigma"];
    CHECK(std::abs(v - 0.954) <= 3.0 * sv);
    CHECK_FALSE(r["unphysical"].get<bool>());
  }
}
