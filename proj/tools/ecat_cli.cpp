// ecat command-line driver: generate | train | ablate | report.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecat/config.hpp"
#include "ecat/datagen.hpp"
#include "ecat/harness.hpp"

namespace {

constexpr int kUsageError = 2;

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = "out";
  std::string suite;
  std::string in;
  std::vector<std::string> overrides;
};

ecat::RunConfig resolve(const Options& opt) {
  ecat::RunConfig config = ecat::load_config(opt.config_path);
  std::vector<std::pair<std::string, std::string>> assignments;
  for (const auto& o : opt.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ecat::ConfigError("override must be key=value, got '" + o + "'");
    assignments.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }
  ecat::apply_assignments(config, assignments);
  if (opt.seed_given) {
    config.train.seed = opt.seed;
    config.suite.seeds = {opt.seed};
  }
  config.train.validate();
  return config;
}

void write_file(const std::filesystem::path& path, const auto& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ecat::IoError("cannot write " + path.string());
  writer(out);
  out.flush();
  if (!out) throw ecat::IoError("write failed for " + path.string());
}

int cmd_generate(const Options& opt) {
  const auto config = resolve(opt);
  const auto world = ecat::generate_world(config.train.data, config.train.seed);
  std::filesystem::create_directories(opt.out);
  // One window past the last training window is the final evaluation set.
  for (std::uint32_t w = 0; w <= config.train.window_count; ++w) {
    const auto data = ecat::sample_window(world, w);
    const std::string tag = "window" + std::to_string(w);
    const std::filesystem::path dir(opt.out);
    write_file(dir / (tag + "_source_records.tsv"), [&](std::ostream& o) { ecat::write_records(o, data.source_records); });
    write_file(dir / (tag + "_target_records.tsv"), [&](std::ostream& o) { ecat::write_records(o, data.target_records); });
    write_file(dir / (tag + "_source_events.tsv"), [&](std::ostream& o) { ecat::write_events(o, data.source_events); });
    write_file(dir / (tag + "_target_events.tsv"), [&](std::ostream& o) { ecat::write_events(o, data.target_events); });
    std::cout << tag << ": " << data.source_records.size() << " source, " << data.target_records.size()
              << " target records\n";
  }
  return 0;
}

int cmd_train(const Options& opt) {
  const auto config = resolve(opt);
  ecat::ExperimentSpec spec{"train", {}, {config.train.seed}, true};
  const auto rows = ecat::run_spec(spec, config);
  ecat::emit(rows, opt.out, "train_seed" + std::to_string(config.train.seed));
  std::cout << ecat::render_table(rows);
  return 0;
}

int cmd_ablate(const Options& opt) {
  const auto config = resolve(opt);
  const auto kind = ecat::parse_suite_kind(opt.suite);
  const auto rows = ecat::run_suite(kind, config);
  ecat::emit(rows, opt.out, ecat::to_string(kind));
  std::cout << ecat::render_table(rows);
  return 0;
}

int cmd_report(const Options& opt) {
  std::cout << ecat::render_table(ecat::read_metrics_file(opt.in));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecat: cross-domain continual transfer experiments on synthetic data"};
  app.require_subcommand(0, 1);
  bool reference = false;
  bool defaults = false;
  app.add_flag("--config-reference", reference, "Print the configuration key reference (markdown) and exit");
  app.add_flag("--print-defaults", defaults, "Print a config file holding every default value and exit");

  Options opt;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Seed; overrides train.seed and suite.seeds")
        ->each([&](const std::string&) { opt.seed_given = true; });
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("overrides", opt.overrides, "Config overrides as section.key=value");
  };
  auto* generate = app.add_subcommand("generate", "Write the synthetic datasets of every window");
  add_run_flags(generate);
  auto* train = app.add_subcommand("train", "Run one experiment and emit its metrics");
  add_run_flags(train);
  auto* ablate = app.add_subcommand("ablate", "Run a suite over the configured seeds");
  add_run_flags(ablate);
  ablate->add_option("--suite", opt.suite, "sample_transfer | adaptive_ablation | transfer_setting")->required();
  auto* report = app.add_subcommand("report", "Render a metrics CSV or JSON file as a text table");
  report->add_option("--in", opt.in, "Metrics file (.csv or .json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kUsageError;
  }
  if (reference) {
    std::cout << ecat::config_reference();
    return 0;
  }
  if (defaults) {
    ecat::write_config(std::cout, ecat::RunConfig{});
    return 0;
  }

  try {
    if (*generate) return cmd_generate(opt);
    if (*train) return cmd_train(opt);
    if (*ablate) return cmd_ablate(opt);
    if (*report) return cmd_report(opt);
  } catch (const ecat::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: a subcommand is required\n" << app.help();
  return kUsageError;
}
