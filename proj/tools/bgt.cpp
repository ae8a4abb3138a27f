// Command-line front-end: simulate / fit / predict <config>.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bgt/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  bool dump_resolved = false;
};

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("config", opt.config, "Experiment config (JSON)")->required();
  sub->add_option("--out", opt.out, "Output directory (overrides config and $BGT_OUT_DIR)");
  sub->add_option("--workers", opt.workers, "Concurrent sweep cells")->check(CLI::PositiveNumber);
  sub->add_flag("--dump-resolved-config", opt.dump_resolved,
                "Write resolved_config.json with every default filled in");
}

int run(bgt::Mode mode, const Options& opt) {
  return bgt::guarded([&] {
    bgt::ExperimentSpec spec = bgt::parse_config(opt.config, mode);
    if (opt.workers) spec.workers = *opt.workers;
    const std::string out_dir = bgt::resolve_output_dir(spec, opt.out);
    if (opt.dump_resolved) {
      bgt::fs::create_directories(out_dir);
      bgt::write_file_atomic(bgt::fs::path(out_dir) / "resolved_config.json", bgt::dump_resolved(spec).dump(2) + "\n");
    }
    switch (mode) {
      case bgt::Mode::Simulate: return bgt::run_simulate(spec, out_dir);
      case bgt::Mode::Fit: return bgt::run_fit(spec, out_dir);
      case bgt::Mode::Predict: return bgt::run_predict(spec);
    }
    return bgt::kExitRuntime;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavioral game models, fog pricing negotiation and likelihood fitting"};
  app.require_subcommand(1);
  Options opt;
  auto* sim = app.add_subcommand("simulate", "Run the seeded negotiation sweep");
  auto* fit = app.add_subcommand("fit", "Fit a behavioral model family to a dataset");
  auto* pred = app.add_subcommand("predict", "Print each player's predicted mixed strategy");
  for (auto* s : {sim, fit, pred}) add_common(s, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bgt::kExitValidation;
  }
  if (sim->parsed()) return run(bgt::Mode::Simulate, opt);
  if (fit->parsed()) return run(bgt::Mode::Fit, opt);
  return run(bgt::Mode::Predict, opt);
}
