#pragma once

// Experiment suites, metrics rows and their CSV/JSON files.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ecat/config.hpp"
#include "ecat/metrics.hpp"
#include "ecat/trainer.hpp"

namespace ecat {

inline constexpr const char* kMetricsVersion = "ecat-metrics-v1";

enum class SuiteKind { sample_transfer, adaptive_ablation, transfer_setting };
const char* to_string(SuiteKind k);
SuiteKind parse_suite_kind(const std::string& s);

/// One named run configuration inside a suite.
struct ExperimentSpec {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;  // dotted config keys
  std::vector<std::uint64_t> seeds;
  /// Emit every checkpoint (true) or only the last one.
  bool all_checkpoints = false;
};

/// One line of a metrics file. Aggregate rows average the run rows of one
/// (experiment, checkpoint) cell; their seed is 0.
struct MetricsRow {
  std::string version = kMetricsVersion;
  std::string kind = "run";  // "run" or "aggregate"
  std::string experiment;
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string sample_mode;
  std::string transfer_mode;
  bool disable_gate = false;
  bool disable_intensity = false;
  bool disable_fusion = false;
  double drift_angle = 0.0;
  double auc = 0.0;
  double auc_stderr = 0.0;
  std::uint64_t n_seeds = 1;
  double l_y = 0.0;
  double l_di = 0.0;
  double l_da = 0.0;
  double mean_gate = 0.0;
  double mean_w_da = 0.0;
  double source_auc = 0.0;
  double wall_seconds = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

/// Column order of CSV files and key order of JSON objects.
const std::vector<std::string>& metrics_columns();

/// The experiments of a suite, in emission order.
std::vector<ExperimentSpec> suite_experiments(SuiteKind kind, const std::vector<std::uint64_t>& seeds);

/// Runs one spec over its seeds; rows are ordered by seed then checkpoint.
std::vector<MetricsRow> run_spec(const ExperimentSpec& spec, const RunConfig& base, SourceCache* cache = nullptr);

/// Runs every experiment of the suite and appends one aggregate row per
/// (experiment, checkpoint) after that experiment's run rows.
std::vector<MetricsRow> run_suite(SuiteKind kind, const RunConfig& base);

/// Mean and standard error (sample sd / sqrt(n); 0 for n = 1) per cell.
std::vector<MetricsRow> aggregate(const std::vector<MetricsRow>& runs);

void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_json(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_csv(std::istream& in);
std::vector<MetricsRow> read_json(std::istream& in);
/// Chooses the format from the extension (.csv or .json).
std::vector<MetricsRow> read_metrics_file(const std::string& path);
/// Writes <stem>.csv and <stem>.json into `dir`. Throws IoError when the
/// files cannot be written and ContractError on an empty row set.
void emit(const std::vector<MetricsRow>& rows, const std::string& dir, const std::string& stem);

/// Aligned text table of the rows.
std::string render_table(const std::vector<MetricsRow>& rows);

/// %.17g text of a finite value; reads back to the same double.
std::string format_metric(double v);

}  // namespace ecat
