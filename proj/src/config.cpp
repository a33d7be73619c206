#include "entsim/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "entsim/errors.hpp"
#include "entsim/rng.hpp"

namespace entsim::config {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void schema(const std::string& key, const std::string& message) {
  throw ConfigError(ConfigErrorCode::schema_violation, key, message);
}

[[noreturn]] void invariant(const std::string& key, const std::string& message) {
  throw ConfigError(ConfigErrorCode::invariant_violation, key, message);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Walks one JSON object, remembering which keys were consumed so that
// leftovers can be rejected.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) schema(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string& name) const { return join(path_, name); }

  const json* find(const std::string& name) {
    seen_.insert(name);
    auto it = node_.find(name);
    return it == node_.end() ? nullptr : &*it;
  }

  bool has(const std::string& name) const { return node_.contains(name); }

  void number(const std::string& name, double& out) {
    if (const json* v = find(name)) {
      if (!v->is_number()) schema(key(name), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) schema(key(name), "expected a finite number");
    }
  }

  void boolean(const std::string& name, bool& out) {
    if (const json* v = find(name)) {
      if (!v->is_boolean()) schema(key(name), "expected true or false");
      out = v->get<bool>();
    }
  }

  void unsigned_integer(const std::string& name, std::uint64_t& out) {
    if (const json* v = find(name)) {
      if (!v->is_number_unsigned()) schema(key(name), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void numbers(const std::string& name, std::vector<double>& out) {
    if (const json* v = find(name)) {
      if (!v->is_array()) schema(key(name), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_number()) schema(fmt::format("{}[{}]", key(name), i), "expected a number");
        out.push_back(e.get<double>());
      }
    }
  }

  template <class Fn>
  void object(const std::string& name, Fn&& fn) {
    if (const json* v = find(name)) {
      Section sub(*v, key(name));
      fn(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it)
      if (!seen_.count(it.key())) schema(key(it.key()), "unknown key");
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_ring(Section& s, ring::RingParams& r) {
  s.number("circumference_m", r.circumference_m);
  s.number("gamma_per_W_m", r.gamma_per_W_m);
  s.number("group_index", r.group_index);
  s.number("q_factor", r.q_factor);
  s.number("pump_nm", r.pump_nm);
  s.numbers("resonances_nm", r.resonances_nm);
  s.numbers("resonance_q_factors", r.resonance_q_factors);
  s.number("linewidth_nm", r.linewidth_nm);
  s.number("t_min", r.t_min);
  s.number("time_bandwidth_product", r.time_bandwidth_product);
}

void read_fiber(Section& s, fiber::FiberSpec& f) {
  s.number("length_km", f.length_km);
  if (s.has("total_loss_dB") && s.has("loss_dB_per_km"))
    schema(s.key("loss_dB_per_km"), "give either total_loss_dB or loss_dB_per_km, not both");
  s.number("total_loss_dB", f.total_loss_dB);
  if (s.has("loss_dB_per_km")) {
    double per_km = 0.0;
    s.number("loss_dB_per_km", per_km);
    if (per_km < 0.0) invariant(s.key("loss_dB_per_km"), "must be non-negative");
    f.total_loss_dB = per_km * f.length_km;
  }
  s.number("dispersion_ps_per_nm_km", f.dispersion_ps_per_nm_km);
  s.number("group_index", f.group_index);
  s.boolean("include_group_delay", f.include_group_delay);
}

void read_amzi(Section& s, franson::AmziSpec& a) {
  s.number("delay_ps", a.delay_ps);
  s.number("phase_rad", a.phase_rad);
  s.number("insertion_loss_dB", a.insertion_loss_dB);
}

void read_detector(Section& s, mc::DetectorSpec& d) {
  s.number("efficiency", d.efficiency);
  s.number("dark_rate_Hz", d.dark_rate_hz);
  s.number("jitter_fwhm_ps", d.jitter_fwhm_ps);
  s.number("dead_time_ps", d.dead_time_ps);
}

ojson ring_json(const ring::RingParams& r) {
  return {{"circumference_m", r.circumference_m},
          {"gamma_per_W_m", r.gamma_per_W_m},
          {"group_index", r.group_index},
          {"q_factor", r.q_factor},
          {"pump_nm", r.pump_nm},
          {"resonances_nm", r.resonances_nm},
          {"resonance_q_factors", r.resonance_q_factors},
          {"linewidth_nm", r.linewidth_nm},
          {"t_min", r.t_min},
          {"time_bandwidth_product", r.time_bandwidth_product}};
}

ojson fiber_json(const fiber::FiberSpec& f) {
  return {{"length_km", f.length_km},
          {"total_loss_dB", f.total_loss_dB},
          {"dispersion_ps_per_nm_km", f.dispersion_ps_per_nm_km},
          {"group_index", f.group_index},
          {"include_group_delay", f.include_group_delay}};
}

ojson amzi_json(const franson::AmziSpec& a) {
  return {{"delay_ps", a.delay_ps}, {"phase_rad", a.phase_rad}, {"insertion_loss_dB", a.insertion_loss_dB}};
}

ojson detector_json(const mc::DetectorSpec& d) {
  return {{"efficiency", d.efficiency},
          {"dark_rate_Hz", d.dark_rate_hz},
          {"jitter_fwhm_ps", d.jitter_fwhm_ps},
          {"dead_time_ps", d.dead_time_ps}};
}

void check_positive(double v, const std::string& key) {
  if (!(v > 0.0)) invariant(key, "must be positive");
}

}  // namespace

ScenarioConfig default_config() {
  ScenarioConfig c;
  c.experiment.franson.reset();
  return c;
}

void ScenarioConfig::validate() const {
  experiment.validate();
  franson_template.validate(experiment.emission.coherence_time_ps);

  const auto& a = analysis;
  check_positive(a.bin_width_ps, "analysis.bin_width_ps");
  check_positive(a.histogram_half_range_ps, "analysis.histogram_half_range_ps");
  if (!(a.car_window_ps >= 0.0)) invariant("analysis.car_window_ps", "must be non-negative (0 = fitted FWHM)");
  check_positive(a.peak_fit_half_range_ps, "analysis.peak_fit_half_range_ps");
  check_positive(a.coincidence_window_ps, "analysis.coincidence_window_ps");
  check_positive(a.g2_half_range_ps, "analysis.g2_half_range_ps");
  check_positive(a.g2_fit_half_range_ps, "analysis.g2_fit_half_range_ps");
  if (a.histogram_half_range_ps < 4.0 * a.peak_fit_half_range_ps)
    invariant("analysis.histogram_half_range_ps", "must be at least 4x peak_fit_half_range_ps");
  if (a.g2_fit_half_range_ps >= a.g2_half_range_ps)
    invariant("analysis.g2_fit_half_range_ps", "must be below g2_half_range_ps");

  const auto& s = scenarios;
  check_positive(s.fig1b.span_nm, "scenarios.fig1b.span_nm");
  check_positive(s.fig1b.step_nm, "scenarios.fig1b.step_nm");
  if (s.fig1b.span_nm / s.fig1b.step_nm > 1e7) invariant("scenarios.fig1b.step_nm", "too many points for the span");
  if (!(s.fig1b.noise_sigma >= 0.0)) invariant("scenarios.fig1b.noise_sigma", "must be non-negative");
  if (s.fig3.pump_grid_mW.size() < 2) invariant("scenarios.fig3.pump_grid_mW", "needs at least two powers");
  for (std::size_t i = 0; i < s.fig3.pump_grid_mW.size(); ++i)
    if (!(s.fig3.pump_grid_mW[i] >= 0.0)) invariant(fmt::format("scenarios.fig3.pump_grid_mW[{}]", i), "must be non-negative");
  if (!(s.fig3c.pump_mW >= 0.0)) invariant("scenarios.fig3c.pump_mW", "must be non-negative");
  check_positive(s.fig3c.duration_s, "scenarios.fig3c.duration_s");
  check_positive(s.fig3c.segment_s, "scenarios.fig3c.segment_s");
  if (!(s.fig3d.pump_mW >= 0.0)) invariant("scenarios.fig3d.pump_mW", "must be non-negative");
  if (!s.fig3d.voltages_V.empty() && s.fig3d.pzt.rad_per_V == 0.0)
    invariant("scenarios.fig3d.pzt.rad_per_V", "must be non-zero when voltages_V is given");
  if (!(s.fig4.pump_mW >= 0.0)) invariant("scenarios.fig4.pump_mW", "must be non-negative");
  if (!(s.fig4.target_visibility >= 0.0 && s.fig4.target_visibility <= 1.0))
    invariant("scenarios.fig4.target_visibility", "must lie in [0, 1]");
  try {
    s.fig4.link.validate();
  } catch (const Error& e) {
    invariant("scenarios.fig4.link", e.what());
  }
}

ScenarioConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(ConfigErrorCode::parse_error, "", e.what());
  }

  ScenarioConfig c = default_config();
  auto& x = c.experiment;
  Section top(root, "");

  if (const json* v = top.find("schema_version")) {
    if (!v->is_number_integer()) schema("schema_version", "expected an integer");
    if (v->get<int>() != kSchemaVersion)
      schema("schema_version", fmt::format("unsupported version {} (expected {})", v->get<int>(), kSchemaVersion));
  }
  c.seed_from_file = top.has("seed");
  top.unsigned_integer("seed", x.seed);
  double pump = x.pump.mW();
  top.number("pump_mW", pump);
  if (pump < 0.0) invariant("pump_mW", "must be non-negative");
  x.pump = PowerMW(pump);
  top.number("duration_s", x.duration_s);
  if (const json* v = top.find("rate_mode")) {
    if (!v->is_string()) schema("rate_mode", "expected \"measured\" or \"physical\"");
    const auto mode = v->get<std::string>();
    if (mode == "measured")
      x.rate_mode = mc::RateMode::measured;
    else if (mode == "physical")
      x.rate_mode = mc::RateMode::physical;
    else
      schema("rate_mode", "expected \"measured\" or \"physical\", got \"" + mode + "\"");
  }

  top.object("ring", [&](Section& s) { read_ring(s, x.ring); });
  bool idler_a = false, idler_b = false;
  top.object("coefficients", [&](Section& s) {
    idler_a = s.has("a_i_Hz_per_mW2");
    idler_b = s.has("b_i_Hz_per_mW");
    s.number("a_s_Hz_per_mW2", x.coeffs.a_s);
    s.number("a_i_Hz_per_mW2", x.coeffs.a_i);
    s.number("b_s_Hz_per_mW", x.coeffs.b_s);
    s.number("b_i_Hz_per_mW", x.coeffs.b_i);
    s.number("c_c_Hz_per_mW2", x.coeffs.c_c);
  });
  // Idler coefficients follow the signal ones unless given.
  if (!idler_a) x.coeffs.a_i = x.coeffs.a_s;
  if (!idler_b) x.coeffs.b_i = x.coeffs.b_s;

  top.object("emission", [&](Section& s) {
    s.number("coherence_time_ps", x.emission.coherence_time_ps);
    s.number("peak_fwhm_ps", x.emission.peak_fwhm_ps);
  });
  top.object("physical", [&](Section& s) {
    s.number("collection_efficiency_signal", x.collection_efficiency.signal);
    s.number("collection_efficiency_idler", x.collection_efficiency.idler);
  });
  top.object("fibers", [&](Section& s) {
    s.object("signal", [&](Section& f) { read_fiber(f, x.signal_fiber); });
    s.object("idler", [&](Section& f) { read_fiber(f, x.idler_fiber); });
  });
  bool franson_enabled = false;
  top.object("franson", [&](Section& s) {
    s.boolean("enabled", franson_enabled);
    s.object("signal_amzi", [&](Section& a) { read_amzi(a, c.franson_template.signal_amzi); });
    s.object("idler_amzi", [&](Section& a) { read_amzi(a, c.franson_template.idler_amzi); });
    s.number("intrinsic_visibility", c.franson_template.intrinsic_visibility);
  });
  if (franson_enabled) x.franson = c.franson_template;
  top.object("detectors", [&](Section& s) {
    s.object("signal", [&](Section& d) { read_detector(d, x.signal_detector); });
    s.object("idler", [&](Section& d) { read_detector(d, x.idler_detector); });
  });
  top.object("analysis", [&](Section& s) {
    auto& a = c.analysis;
    s.number("bin_width_ps", a.bin_width_ps);
    s.number("histogram_half_range_ps", a.histogram_half_range_ps);
    s.number("car_window_ps", a.car_window_ps);
    s.number("peak_fit_half_range_ps", a.peak_fit_half_range_ps);
    s.number("coincidence_window_ps", a.coincidence_window_ps);
    s.number("g2_half_range_ps", a.g2_half_range_ps);
    s.number("g2_fit_half_range_ps", a.g2_fit_half_range_ps);
  });
  top.object("scenarios", [&](Section& s) {
    auto& sc = c.scenarios;
    s.object("fig1b", [&](Section& f) {
      f.number("span_nm", sc.fig1b.span_nm);
      f.number("step_nm", sc.fig1b.step_nm);
      f.number("noise_sigma", sc.fig1b.noise_sigma);
    });
    s.object("fig3", [&](Section& f) { f.numbers("pump_grid_mW", sc.fig3.pump_grid_mW); });
    s.object("fig3c", [&](Section& f) {
      f.number("pump_mW", sc.fig3c.pump_mW);
      f.number("duration_s", sc.fig3c.duration_s);
      f.number("segment_s", sc.fig3c.segment_s);
    });
    s.object("fig3d", [&](Section& f) {
      f.number("pump_mW", sc.fig3d.pump_mW);
      f.numbers("phases_rad", sc.fig3d.phases_rad);
      f.numbers("voltages_V", sc.fig3d.voltages_V);
      f.object("pzt", [&](Section& p) {
        p.number("rad_per_V", sc.fig3d.pzt.rad_per_V);
        p.number("zero_phase_V", sc.fig3d.pzt.zero_phase_V);
      });
    });
    s.object("fig4", [&](Section& f) {
      f.number("pump_mW", sc.fig4.pump_mW);
      f.number("target_visibility", sc.fig4.target_visibility);
      f.object("link", [&](Section& l) { read_fiber(l, sc.fig4.link); });
    });
  });
  top.finish();

  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(ConfigErrorCode::missing_file, "", "cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize(const ScenarioConfig& c) {
  const auto& x = c.experiment;
  const auto& a = c.analysis;
  const auto& s = c.scenarios;
  ojson root;
  root["schema_version"] = kSchemaVersion;
  root["seed"] = x.seed;
  root["pump_mW"] = x.pump.mW();
  root["duration_s"] = x.duration_s;
  root["rate_mode"] = x.rate_mode == mc::RateMode::measured ? "measured" : "physical";
  root["ring"] = ring_json(x.ring);
  root["coefficients"] = {{"a_s_Hz_per_mW2", x.coeffs.a_s},
                          {"a_i_Hz_per_mW2", x.coeffs.a_i},
                          {"b_s_Hz_per_mW", x.coeffs.b_s},
                          {"b_i_Hz_per_mW", x.coeffs.b_i},
                          {"c_c_Hz_per_mW2", x.coeffs.c_c}};
  root["emission"] = {{"coherence_time_ps", x.emission.coherence_time_ps},
                      {"peak_fwhm_ps", x.emission.peak_fwhm_ps}};
  root["physical"] = {{"collection_efficiency_signal", x.collection_efficiency.signal},
                      {"collection_efficiency_idler", x.collection_efficiency.idler}};
  root["fibers"] = {{"signal", fiber_json(x.signal_fiber)}, {"idler", fiber_json(x.idler_fiber)}};
  const auto& f = x.franson ? *x.franson : c.franson_template;
  root["franson"] = {{"enabled", x.franson.has_value()},
                     {"signal_amzi", amzi_json(f.signal_amzi)},
                     {"idler_amzi", amzi_json(f.idler_amzi)},
                     {"intrinsic_visibility", f.intrinsic_visibility}};
  root["detectors"] = {{"signal", detector_json(x.signal_detector)}, {"idler", detector_json(x.idler_detector)}};
  root["analysis"] = {{"bin_width_ps", a.bin_width_ps},
                      {"histogram_half_range_ps", a.histogram_half_range_ps},
                      {"car_window_ps", a.car_window_ps},
                      {"peak_fit_half_range_ps", a.peak_fit_half_range_ps},
                      {"coincidence_window_ps", a.coincidence_window_ps},
                      {"g2_half_range_ps", a.g2_half_range_ps},
                      {"g2_fit_half_range_ps", a.g2_fit_half_range_ps}};
  ojson sc;
  sc["fig1b"] = {{"span_nm", s.fig1b.span_nm}, {"step_nm", s.fig1b.step_nm}, {"noise_sigma", s.fig1b.noise_sigma}};
  sc["fig3"] = {{"pump_grid_mW", s.fig3.pump_grid_mW}};
  sc["fig3c"] = {{"pump_mW", s.fig3c.pump_mW}, {"duration_s", s.fig3c.duration_s}, {"segment_s", s.fig3c.segment_s}};
  sc["fig3d"] = {{"pump_mW", s.fig3d.pump_mW},
                 {"phases_rad", s.fig3d.phases_rad},
                 {"voltages_V", s.fig3d.voltages_V},
                 {"pzt", {{"rad_per_V", s.fig3d.pzt.rad_per_V}, {"zero_phase_V", s.fig3d.pzt.zero_phase_V}}}};
  sc["fig4"] = {{"pump_mW", s.fig4.pump_mW},
                {"target_visibility", s.fig4.target_visibility},
                {"link", fiber_json(s.fig4.link)}};
  root["scenarios"] = sc;
  return root.dump(2) + "\n";
}

std::string config_hash(const ScenarioConfig& config) {
  return fmt::format("{:016x}", rng::fnv1a64(serialize(config)));
}

std::optional<std::uint64_t> seed_from_environment() {
  const char* raw = std::getenv("ENTSIM_SEED");
  if (!raw || !*raw) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || *end != '\0' || raw[0] == '-')
    schema("ENTSIM_SEED", std::string("expected a non-negative integer, got '") + raw + "'");
  return static_cast<std::uint64_t>(v);
}

}  // namespace entsim::config
