#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "entsim/config.hpp"
#include "entsim/correlator.hpp"
#include "entsim/montecarlo.hpp"

namespace entsim::scenarios {

inline constexpr int kSummarySchemaVersion = 1;
inline constexpr const char* kArtifactVersion = ENTSIM_VERSION;

/// fig1b fig3a fig3b fig3c fig3d fig4 fig4_dispersion analyze custom
const std::vector<std::string>& registered();
bool is_registered(const std::string& name);

struct Request {
  std::string scenario;
  config::ScenarioConfig config;
  std::filesystem::path out_dir = "out";
  unsigned threads = 1;
  /// `analyze` only. Both may name the same file (channels 0 and 1).
  std::filesystem::path signal_file;
  std::filesystem::path idler_file;
  /// `custom` only: also export the simulated tag streams.
  bool export_tags = true;
};

struct Outcome {
  int exit_code = 0;
  nlohmann::ordered_json summary;
  /// Paths relative to out_dir, in write order.
  std::vector<std::string> files;
};

/// Runs one scenario and writes its files plus `<scenario>_summary.json`.
/// Configuration and I/O errors propagate; failures inside a sweep point are
/// recorded in the summary, which is then marked partial with a nonzero exit.
Outcome run(const Request& request);

// Shared analysis pieces, exposed for tests and the CLI.

struct CoincidenceAnalysis {
  Histogram histogram;
  fit::PeakFit peak;
  corr::CarResult car;
  /// Counts within analysis.coincidence_window_ps of the peak minus the
  /// accidental estimate.
  double net_coincidences = 0.0;
  double net_coincidences_sigma = 0.0;
};

CoincidenceAnalysis analyze_pair(const TimeTagStream& signal, const TimeTagStream& idler,
                                 const config::AnalysisSettings& analysis,
                                 const std::vector<double>& side_peaks_ps = {});

struct FransonCounts {
  double central = 0.0;
  double minus = 0.0;
  double plus = 0.0;
  double accidental_per_window = 0.0;
};

/// Raw counts in windows of analysis.coincidence_window_ps centred on 0 and
/// on +-delay_ps, plus the flat accidental level per window.
FransonCounts franson_counts(const Histogram& hist, double delay_ps, const config::AnalysisSettings& analysis);

/// Phase-averaged genuine central-peak and accidental rates in one counting
/// window, used to calibrate the intrinsic visibility.
struct FransonRates {
  double genuine_central_hz = 0.0;
  double accidental_hz = 0.0;
};
FransonRates expected_franson_rates(const mc::ExperimentConfig& experiment, double window_ps);

}  // namespace entsim::scenarios
