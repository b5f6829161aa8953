// vanet_cli: run PHY, analytic, simulation and comparison sweeps from a config file.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vanet/experiments.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_base;
  bool strict = false;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "experiment config file")->required();
  sub->add_option("--out", o.out, "output CSV path")->required();
  sub->add_option("--seed-base", o.seed_base, "first seed of the run");
  sub->add_flag("--strict", o.strict, "exit with code 2 when the analytic solver does not converge");
}

int execute(vanet::exp::Mode mode, const Options& o) {
  using namespace vanet;
  exp::ExperimentSpec spec = exp::ExperimentSpec::from_config(ConfigFile::load(o.config));
  spec.mode = mode;
  if (o.seed_base) spec.seed_base = *o.seed_base;
  spec.validate();
  const exp::MetricsReport report = exp::run_experiment(spec);
  exp::write_outputs(spec, report, o.out);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cerr << spec.name << ": " << report.rows.size() << " rows -> " << o.out << "\n";
  if (report.nonconverged && o.strict) return 2;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VANET MAC sensing, analysis and simulation sweeps"};
  app.require_subcommand(1);
  Options opts;
  std::optional<vanet::exp::Mode> chosen;

  struct Sub {
    const char* name;
    const char* help;
    vanet::exp::Mode mode;
  };
  const Sub subs[] = {
      {"phy", "energy-detection curves", vanet::exp::Mode::Phy},
      {"analytic", "closed-form MAC metrics over density", vanet::exp::Mode::Analytic},
      {"simulate", "slot-level simulation over density", vanet::exp::Mode::Simulate},
      {"compare", "theory against simulation", vanet::exp::Mode::Compare},
  };
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, opts);
    const vanet::exp::Mode m = s.mode;
    sub->callback([&chosen, m] { chosen = m; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    return execute(*chosen, opts);
  } catch (const vanet::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
