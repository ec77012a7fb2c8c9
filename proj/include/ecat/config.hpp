#pragma once

// Plain-text configuration: "[section]" headers followed by "key = value"
// lines, '#' comments. Every key is addressable as "section.key", which is
// also the form accepted by command-line overrides.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ecat/trainer.hpp"

namespace ecat {

/// Suite-level settings that are not part of a single run's TrainConfig.
struct SuiteSettings {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  /// Emit measured wall-clock seconds; 0 is written otherwise so that
  /// reruns are byte-identical.
  bool record_timing = false;
};

struct RunConfig {
  TrainConfig train;
  SuiteSettings suite;
};

/// One documented configuration key.
struct ConfigKey {
  std::string name;  // "section.key"
  std::string type;
  std::string description;
};

/// All recognised keys in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form. Throws ConfigError naming the key on an
/// unknown key or unparseable value.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
/// Current value of one key in the same text form.
std::string get_config_value(const RunConfig& config, const std::string& key);

/// Parses a config file; `origin` is used in error messages.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in, const std::string& origin);
RunConfig load_config(const std::string& path);
/// Applies parsed assignments in order.
void apply_assignments(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& assignments);

/// Writes every key with its current value, grouped by section.
void write_config(std::ostream& out, const RunConfig& config);
/// Markdown reference of every key with type, default and description.
std::string config_reference();

}  // namespace ecat
