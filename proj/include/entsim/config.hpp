#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "entsim/franson.hpp"
#include "entsim/montecarlo.hpp"

namespace entsim::config {

inline constexpr int kSchemaVersion = 1;

struct AnalysisSettings {
  double bin_width_ps = 20.0;
  double histogram_half_range_ps = 50000.0;
  /// 0 selects the fitted FWHM of the coincidence peak.
  double car_window_ps = 0.0;
  double peak_fit_half_range_ps = 1000.0;
  /// Window around each Franson peak used for the fig4 and fig3d counts.
  double coincidence_window_ps = 1000.0;
  double g2_half_range_ps = 3000.0;
  double g2_fit_half_range_ps = 1000.0;
};

struct Fig1bSettings {
  double span_nm = 2.4;
  double step_nm = 0.0005;
  double noise_sigma = 0.002;
};

struct Fig3Settings {
  std::vector<double> pump_grid_mW{0.1, 0.198, 0.4, 0.7, 1.0, 1.5, 2.0, 2.5};
};

struct Fig3cSettings {
  double pump_mW = 1.5;
  double duration_s = 60.0;
  double segment_s = 1.0;
};

struct Fig3dSettings {
  double pump_mW = 0.283;
  /// Phase sum settings; ignored when voltages_V is non-empty. Both empty
  /// means 18 phases evenly spaced over one period.
  std::vector<double> phases_rad;
  std::vector<double> voltages_V;
  franson::PztCalibration pzt{0.359, 5.5};
};

struct Fig4Settings {
  double pump_mW = 2.27;
  /// Calibrate the intrinsic visibility so the before-fiber visibility lands
  /// on this value; 0 keeps the configured franson.intrinsic_visibility.
  double target_visibility = 0.895;
  fiber::FiberSpec link{81.0, 16.8, 18.0, 1.468, false};
};

struct ScenarioSettings {
  Fig1bSettings fig1b;
  Fig3Settings fig3;
  Fig3cSettings fig3c;
  Fig3dSettings fig3d;
  Fig4Settings fig4;
};

struct ScenarioConfig {
  mc::ExperimentConfig experiment;
  /// Franson analysers used by fig3d/fig4 when experiment.franson is unset.
  franson::FransonSetting franson_template;
  AnalysisSettings analysis;
  ScenarioSettings scenarios;
  bool seed_from_file = false;

  void validate() const;
};

/// Default configuration with the stock Franson analysers enabled.
ScenarioConfig default_config();

/// Strict parse: unknown keys, wrong types and invariant violations throw
/// ConfigError with the JSON key path.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Canonical JSON; parse_config(serialize(c)) reproduces c.
std::string serialize(const ScenarioConfig& config);

/// 64-bit FNV-1a hash of serialize(config), hex encoded.
std::string config_hash(const ScenarioConfig& config);

/// ENTSIM_SEED as an unsigned integer if set; throws ConfigError when malformed.
std::optional<std::uint64_t> seed_from_environment();

}  // namespace entsim::config
