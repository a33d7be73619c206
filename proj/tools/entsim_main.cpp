#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "entsim/config.hpp"
#include "entsim/errors.hpp"
#include "entsim/scenarios.hpp"

namespace {

using namespace entsim;

// Config errors exit with their specific code, everything else with its category.
int exit_code_for(const Error& e) {
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) return static_cast<int>(ce->code());
  return static_cast<int>(e.category());
}

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> pump_mW;
  std::optional<double> duration_s;
  std::optional<double> bin_ps;
};

config::ScenarioConfig resolve_config(const Overrides& o) {
  config::ScenarioConfig c = o.config_path.empty() ? config::default_config() : config::load_config(o.config_path);
  if (o.seed) {
    c.experiment.seed = *o.seed;
  } else if (!c.seed_from_file) {
    if (auto env = config::seed_from_environment()) c.experiment.seed = *env;
  }
  if (o.pump_mW) {
    if (*o.pump_mW < 0.0)
      throw ConfigError(ConfigErrorCode::invariant_violation, "pump_mW", "must be non-negative");
    c.experiment.pump = PowerMW(*o.pump_mW);
  }
  if (o.duration_s) c.experiment.duration_s = *o.duration_s;
  if (o.bin_ps) c.analysis.bin_width_ps = *o.bin_ps;
  c.validate();
  return c;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults apply when omitted)");
  cmd->add_option("--seed", o.seed, "master seed; overrides the config and ENTSIM_SEED");
  cmd->add_option("--pump-mW", o.pump_mW, "on-chip pump power in mW (pump_mW)");
  cmd->add_option("--duration-s", o.duration_s, "integration time in s (duration_s)");
  cmd->add_option("--bin-ps", o.bin_ps, "histogram bin width in ps (analysis.bin_width_ps)");
}

int report(const scenarios::Outcome& out, const std::string& dir) {
  const auto& s = out.summary;
  fmt::print("{}: {} ({} files in {})\n", s["scenario"].get<std::string>(), s["status"].get<std::string>(),
             out.files.size(), dir);
  for (const auto& c : s["comparisons"]) {
    fmt::print("  {:<28} simulated {:<14.6g} {}\n", c["id"].get<std::string>(), c["simulated"].get<double>(),
               c["pass"].get<bool>() ? "PASS" : "FAIL");
  }
  for (const auto& e : s["errors"])
    fmt::print(stderr, "  error in {}: {}\n", e["where"].get<std::string>(), e["message"].get<std::string>());
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-pair source and Franson link simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(scenarios::kArtifactVersion));

  Overrides sim_o;
  std::string scenario, sim_out = "out", sim_signal, sim_idler;
  unsigned sim_threads = 1;
  bool no_tags = false;
  auto* sim = app.add_subcommand("simulate", "run a registered scenario");
  sim->add_option("scenario", scenario, "scenario name")->required();
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--threads", sim_threads, "worker threads (results do not depend on it)");
  sim->add_option("--signal", sim_signal, "signal tag file (analyze scenario)");
  sim->add_option("--idler", sim_idler, "idler tag file (analyze scenario)");
  sim->add_flag("--no-tags", no_tags, "custom scenario: skip the tag stream export");
  add_common(sim, sim_o);

  Overrides an_o;
  std::string an_out = "out", an_signal, an_idler;
  unsigned an_threads = 1;
  auto* an = app.add_subcommand("analyze", "correlate two external time-tag files");
  an->add_option("--signal", an_signal, "signal tag file (CSV or TTAG)")->required();
  an->add_option("--idler", an_idler, "idler tag file; may equal --signal for a two-channel file")->required();
  an->add_option("--out", an_out, "output directory");
  an->add_option("--threads", an_threads, "worker threads");
  an->add_option("--config", an_o.config_path, "config supplying the analysis settings");
  an->add_option("--bin-ps", an_o.bin_ps, "histogram bin width in ps");

  std::string validate_path;
  auto* val = app.add_subcommand("validate-config", "check a config file and print its hash");
  val->add_option("file", validate_path, "config file")->required();

  std::string print_path;
  auto* print = app.add_subcommand("print-config", "print the resolved config as canonical JSON");
  print->add_option("--config", print_path, "config file (defaults when omitted)");

  app.add_subcommand("list", "list registered scenarios");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      scenarios::Request req;
      req.scenario = scenario;
      req.config = resolve_config(sim_o);
      req.out_dir = sim_out;
      req.threads = sim_threads;
      req.signal_file = sim_signal;
      req.idler_file = sim_idler;
      req.export_tags = !no_tags;
      return report(scenarios::run(req), sim_out);
    }
    if (*an) {
      scenarios::Request req;
      req.scenario = "analyze";
      req.config = resolve_config(an_o);
      req.out_dir = an_out;
      req.threads = an_threads;
      req.signal_file = an_signal;
      req.idler_file = an_idler;
      return report(scenarios::run(req), an_out);
    }
    if (*val) {
      const auto c = config::load_config(validate_path);
      fmt::print("{}: valid (config hash {})\n", validate_path, config::config_hash(c));
      return 0;
    }
    if (*print) {
      const auto c = print_path.empty() ? config::default_config() : config::load_config(print_path);
      std::cout << config::serialize(c);
      return 0;
    }
    for (const auto& name : scenarios::registered()) fmt::print("{}\n", name);
    return 0;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error {} at '{}': {}\n", static_cast<int>(e.code()), e.key_path(), e.what());
    return exit_code_for(e);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code_for(e);
  }
}
