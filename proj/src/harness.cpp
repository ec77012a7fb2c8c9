#include "ecat/harness.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace ecat {

namespace {

using Getter = std::function<std::string(const MetricsRow&)>;
using Setter = std::function<void(MetricsRow&, const std::string&)>;

struct Column {
  std::string name;
  Getter get;
  Setter set;
  bool numeric;  // emitted unquoted in JSON
};

double to_double(const std::string& col, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw DataError("metrics column " + col + ": bad number '" + v + "'");
  return d;
}

std::uint64_t to_u64(const std::string& col, const std::string& v) {
  char* end = nullptr;
  const auto x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) throw DataError("metrics column " + col + ": bad integer '" + v + "'");
  return x;
}

bool to_bool(const std::string& col, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw DataError("metrics column " + col + ": bad flag '" + v + "'");
}

#define ECAT_STR(field) \
  Column { #field, [](const MetricsRow& r) { return r.field; }, [](MetricsRow& r, const std::string& v) { r.field = v; }, false }
#define ECAT_REAL(field)                                                                          \
  Column {                                                                                        \
    #field, [](const MetricsRow& r) { return format_metric(r.field); },                           \
        [](MetricsRow& r, const std::string& v) { r.field = to_double(#field, v); }, true          \
  }
#define ECAT_U64(field)                                                                           \
  Column {                                                                                        \
    #field, [](const MetricsRow& r) { return std::to_string(r.field); },                          \
        [](MetricsRow& r, const std::string& v) { r.field = to_u64(#field, v); }, true             \
  }
#define ECAT_FLAG(field)                                                                          \
  Column {                                                                                        \
    #field, [](const MetricsRow& r) { return std::string(r.field ? "true" : "false"); },          \
        [](MetricsRow& r, const std::string& v) { r.field = to_bool(#field, v); }, true           \
  }

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      ECAT_STR(version),       ECAT_STR(kind),           ECAT_STR(experiment),    ECAT_U64(seed),
      ECAT_STR(checkpoint),    ECAT_STR(sample_mode),    ECAT_STR(transfer_mode), ECAT_FLAG(disable_gate),
      ECAT_FLAG(disable_intensity), ECAT_FLAG(disable_fusion), ECAT_REAL(drift_angle), ECAT_REAL(auc),
      ECAT_REAL(auc_stderr),   ECAT_U64(n_seeds),        ECAT_REAL(l_y),          ECAT_REAL(l_di),
      ECAT_REAL(l_da),         ECAT_REAL(mean_gate),     ECAT_REAL(mean_w_da),    ECAT_REAL(source_auc),
      ECAT_REAL(wall_seconds),
  };
  return cols;
}

#undef ECAT_STR
#undef ECAT_REAL
#undef ECAT_U64
#undef ECAT_FLAG

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void check_row(const MetricsRow& r) {
  if (r.version != kMetricsVersion) throw DataError("unsupported metrics version '" + r.version + "'");
  if (r.kind != "run" && r.kind != "aggregate") throw DataError("metrics row kind must be run or aggregate");
  if (!(r.auc >= 0.0 && r.auc <= 1.0)) throw DataError("metrics row auc outside [0,1]");
  for (const std::string* s : {&r.experiment, &r.checkpoint, &r.sample_mode, &r.transfer_mode}) {
    if (s->find_first_of(",\"\n") != std::string::npos) throw DataError("metrics text field contains a separator");
  }
}

MetricsRow row_from(const ExperimentSpec& spec, const TrainConfig& c, const CheckpointResult& r, bool timing) {
  MetricsRow row;
  row.experiment = spec.name;
  row.seed = c.seed;
  row.checkpoint = r.label;
  row.sample_mode = to_string(c.sample_mode);
  row.transfer_mode = to_string(c.transfer_mode);
  row.disable_gate = c.disable_gate;
  row.disable_intensity = c.disable_intensity;
  row.disable_fusion = c.disable_fusion;
  row.drift_angle = c.data.drift_angle;
  row.auc = r.auc;
  row.l_y = r.losses.l_y;
  row.l_di = r.losses.l_di;
  row.l_da = r.losses.l_da;
  row.mean_gate = r.losses.mean_gate;
  row.mean_w_da = r.losses.mean_w_da;
  row.source_auc = r.source_auc;
  row.wall_seconds = timing ? r.wall_seconds : 0.0;
  return row;
}

}  // namespace

std::string format_metric(double v) {
  if (!std::isfinite(v)) throw NumericError("metrics value is not finite");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* to_string(SuiteKind k) {
  switch (k) {
    case SuiteKind::sample_transfer: return "sample_transfer";
    case SuiteKind::adaptive_ablation: return "adaptive_ablation";
    case SuiteKind::transfer_setting: return "transfer_setting";
  }
  return "?";
}

SuiteKind parse_suite_kind(const std::string& s) {
  for (auto k : {SuiteKind::sample_transfer, SuiteKind::adaptive_ablation, SuiteKind::transfer_setting}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown suite '" + s + "' (expected sample_transfer, adaptive_ablation or transfer_setting)");
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& c : columns()) n.push_back(c.name);
    return n;
  }();
  return names;
}

std::vector<ExperimentSpec> suite_experiments(SuiteKind kind, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("suite seed list is empty");
  std::vector<ExperimentSpec> specs;
  switch (kind) {
    case SuiteKind::sample_transfer:
      for (const char* mode : {"only_target", "merge_all", "gst_only", "gst_and_da"}) {
        specs.push_back({mode, {{"train.sample_mode", mode}}, seeds, false});
      }
      break;
    case SuiteKind::adaptive_ablation:
      specs.push_back({"full", {}, seeds, false});
      specs.push_back({"disable_gate", {{"train.disable_gate", "true"}}, seeds, false});
      specs.push_back({"disable_intensity", {{"train.disable_intensity", "true"}}, seeds, false});
      break;
    case SuiteKind::transfer_setting:
      specs.push_back({"one_time", {{"train.transfer_mode", "one_time"}}, seeds, true});
      specs.push_back({"continual", {{"train.transfer_mode", "continual"}}, seeds, true});
      break;
  }
  return specs;
}

std::vector<MetricsRow> run_spec(const ExperimentSpec& spec, const RunConfig& base, SourceCache* cache) {
  if (spec.seeds.empty()) throw ConfigError("experiment " + spec.name + " has no seeds");
  RunConfig config = base;
  apply_assignments(config, spec.overrides);
  std::vector<MetricsRow> rows;
  for (auto seed : spec.seeds) {
    TrainConfig c = config.train;
    c.seed = seed;
    auto results = run_experiment(c, cache);
    if (!spec.all_checkpoints) results.erase(results.begin(), results.end() - 1);
    for (const auto& r : results) rows.push_back(row_from(spec, c, r, config.suite.record_timing));
  }
  return rows;
}

std::vector<MetricsRow> aggregate(const std::vector<MetricsRow>& runs) {
  // Cells keep their first-appearance order.
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const MetricsRow*>> cells;
  for (const auto& r : runs) {
    if (r.kind != "run") continue;
    auto key = std::make_pair(r.experiment, r.checkpoint);
    if (!cells.count(key)) order.push_back(key);
    cells[key].push_back(&r);
  }
  std::vector<MetricsRow> out;
  for (const auto& key : order) {
    const auto& members = cells[key];
    const double n = static_cast<double>(members.size());
    MetricsRow a = *members.front();
    a.kind = "aggregate";
    a.seed = 0;
    a.n_seeds = members.size();
    auto mean_of = [&](double MetricsRow::*f) {
      double s = 0.0;
      for (const auto* m : members) s += m->*f;
      return s / n;
    };
    a.auc = mean_of(&MetricsRow::auc);
    a.l_y = mean_of(&MetricsRow::l_y);
    a.l_di = mean_of(&MetricsRow::l_di);
    a.l_da = mean_of(&MetricsRow::l_da);
    a.mean_gate = mean_of(&MetricsRow::mean_gate);
    a.mean_w_da = mean_of(&MetricsRow::mean_w_da);
    a.source_auc = mean_of(&MetricsRow::source_auc);
    a.wall_seconds = mean_of(&MetricsRow::wall_seconds);
    double ss = 0.0;
    for (const auto* m : members) ss += (m->auc - a.auc) * (m->auc - a.auc);
    a.auc_stderr = members.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<MetricsRow> run_suite(SuiteKind kind, const RunConfig& base) {
  SourceCache cache;
  std::vector<MetricsRow> rows;
  for (const auto& spec : suite_experiments(kind, base.suite.seeds)) {
    auto runs = run_spec(spec, base, &cache);
    auto agg = aggregate(runs);
    rows.insert(rows.end(), runs.begin(), runs.end());
    rows.insert(rows.end(), agg.begin(), agg.end());
  }
  return rows;
}

void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  const auto& cols = columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c].name;
  out << '\n';
  for (const auto& r : rows) {
    check_row(r);
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c].get(r);
    out << '\n';
  }
}

void write_json(std::ostream& out, const std::vector<MetricsRow>& rows) {
  // Written by hand so numbers carry exactly the CSV digits.
  const auto& cols = columns();
  out << "[\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check_row(rows[i]);
    out << "  {";
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string v = cols[c].get(rows[i]);
      out << (c ? ", " : "") << '"' << cols[c].name << "\": ";
      if (cols[c].numeric) {
        out << v;
      } else {
        out << '"' << v << '"';
      }
    }
    out << '}' << (i + 1 < rows.size() ? "," : "") << '\n';
  }
  out << "]\n";
}

std::vector<MetricsRow> read_csv(std::istream& in) {
  const auto& cols = columns();
  std::string line;
  if (!std::getline(in, line)) throw DataError("metrics CSV is empty");
  if (split_csv_line(line) != metrics_columns()) throw DataError("metrics CSV header does not match");
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != cols.size()) {
      throw DataError("metrics CSV line " + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) +
                      " fields, got " + std::to_string(cells.size()));
    }
    MetricsRow r;
    for (std::size_t c = 0; c < cols.size(); ++c) cols[c].set(r, cells[c]);
    check_row(r);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricsRow> read_json(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics JSON: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("metrics JSON must be an array of objects");
  std::vector<MetricsRow> rows;
  for (const auto& obj : doc) {
    MetricsRow r;
    for (const auto& c : columns()) {
      if (!obj.contains(c.name)) throw DataError("metrics JSON object lacks '" + c.name + "'");
      const auto& v = obj.at(c.name);
      std::string text;
      if (v.is_string()) {
        text = v.get<std::string>();
      } else if (v.is_boolean()) {
        text = v.get<bool>() ? "true" : "false";
      } else if (v.is_number_unsigned()) {
        text = std::to_string(v.get<std::uint64_t>());
      } else if (v.is_number()) {
        text = format_metric(v.get<double>());
      } else {
        throw DataError("metrics JSON field '" + c.name + "' has an unexpected type");
      }
      c.set(r, text);
    }
    check_row(r);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics file " + path);
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".csv") return read_csv(in);
  if (ext == ".json") return read_json(in);
  throw ConfigError("metrics file must end in .csv or .json: " + path);
}

void emit(const std::vector<MetricsRow>& rows, const std::string& dir, const std::string& stem) {
  if (rows.empty()) throw ContractError("no metrics rows to emit");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  for (const char* ext : {".csv", ".json"}) {
    const auto path = std::filesystem::path(dir) / (stem + ext);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    if (std::string(ext) == ".csv") {
      write_csv(out, rows);
    } else {
      write_json(out, rows);
    }
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
  }
}

std::string render_table(const std::vector<MetricsRow>& rows) {
  const std::vector<std::string> head = {"experiment", "kind", "seed", "checkpoint", "sample_mode", "transfer_mode",
                                         "flags", "auc", "stderr", "n"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::string flags;
    if (r.disable_gate) flags += "no_gate ";
    if (r.disable_intensity) flags += "no_intensity ";
    if (r.disable_fusion) flags += "no_fusion ";
    if (flags.empty()) flags = "-";
    else flags.pop_back();
    std::ostringstream auc, se;
    auc << std::fixed << std::setprecision(4) << r.auc;
    se << std::fixed << std::setprecision(4) << r.auc_stderr;
    cells.push_back({r.experiment, r.kind, r.kind == "aggregate" ? "-" : std::to_string(r.seed), r.checkpoint,
                     r.sample_mode, r.transfer_mode, flags, auc.str(), r.kind == "aggregate" ? se.str() : "-",
                     std::to_string(r.n_seeds)});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << row[c];
    }
    out << '\n';
  };
  line(head);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  line(rule);
  for (const auto& row : cells) line(row);
  return out.str();
}

}  // namespace ecat
