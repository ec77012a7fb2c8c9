#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecat/config.hpp"
#include "ecat/harness.hpp"

using namespace ecat;

namespace {

MetricsRow sample_row(const std::string& name, std::uint64_t seed, double auc) {
  MetricsRow r;
  r.experiment = name;
  r.seed = seed;
  r.checkpoint = "t+2dt";
  r.sample_mode = "gst_and_da";
  r.transfer_mode = "continual";
  r.disable_gate = seed % 2 == 0;
  r.drift_angle = 0.15;
  r.auc = auc;
  r.l_y = 0.1 + 1.0 / 3.0;
  r.l_di = 1e-17;
  r.l_da = 0.6931471805599453;
  r.mean_gate = 0.018;
  r.mean_w_da = 2.0 / 3.0;
  r.source_auc = 0.61;
  return r;
}

RunConfig tiny_run() {
  RunConfig rc;
  auto& d = rc.train.data;
  d.num_users = 200;
  d.num_items = 100;
  d.target_records_per_window = 200;
  d.source_ratio = 4;
  rc.train.batch_size = 64;
  rc.train.window_count = 3;
  rc.train.delta_t_windows = 1;
  rc.train.source_pretrain_epochs = 1;
  rc.suite.seeds = {1, 2, 3};
  return rc;
}

std::size_t count_kind(const std::vector<MetricsRow>& rows, const std::string& kind) {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.kind == kind;
  return n;
}

}  // namespace

TEST_CASE("config text round-trips every key") {
  RunConfig rc;
  rc.train.data.drift_angle = 0.1 + 0.2;
  rc.train.model.mlp_hidden = {8, 4, 2};
  rc.train.sample_mode = SampleMode::merge_all;
  rc.suite.seeds = {7, 9};
  rc.train.checkpoint_dir = "ckpt";
  std::stringstream text;
  write_config(text, rc);
  RunConfig back;
  apply_assignments(back, parse_config_text(text, "mem"));
  for (const auto& k : config_keys()) CHECK_MESSAGE(get_config_value(back, k.name) == get_config_value(rc, k.name), k.name);
  CHECK(back.train.data.drift_angle == rc.train.data.drift_angle);
}

TEST_CASE("config errors name the key or location") {
  RunConfig rc;
  CHECK_THROWS_WITH_AS(set_config_value(rc, "train.lerning_rate", "0.1"), doctest::Contains("train.lerning_rate"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(set_config_value(rc, "train.batch_size", "-3"), doctest::Contains("train.batch_size"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(set_config_value(rc, "train.sample_mode", "both"), doctest::Contains("gst_and_da"),
                       ConfigError);
  std::stringstream bad("[train]\nlearning_rate 0.1\n");
  CHECK_THROWS_WITH_AS(parse_config_text(bad, "x.conf"), doctest::Contains("x.conf:2"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/ecat.conf"), IoError);
}

TEST_CASE("config reference documents every key") {
  const auto ref = config_reference();
  for (const auto& k : config_keys()) CHECK_MESSAGE(ref.find("`" + k.name + "`") != std::string::npos, k.name);
}

TEST_CASE("suite experiment lists") {
  const std::vector<std::uint64_t> seeds = {1, 2};
  auto st = suite_experiments(SuiteKind::sample_transfer, seeds);
  REQUIRE(st.size() == 4);
  CHECK(st[0].name == "only_target");
  CHECK(st[3].name == "gst_and_da");
  auto ab = suite_experiments(SuiteKind::adaptive_ablation, seeds);
  REQUIRE(ab.size() == 3);
  CHECK(ab[1].overrides == std::vector<std::pair<std::string, std::string>>{{"train.disable_gate", "true"}});
  auto ts = suite_experiments(SuiteKind::transfer_setting, seeds);
  REQUIRE(ts.size() == 2);
  CHECK(ts[0].all_checkpoints);
  CHECK_THROWS_AS(suite_experiments(SuiteKind::sample_transfer, {}), ConfigError);
  CHECK(parse_suite_kind("adaptive_ablation") == SuiteKind::adaptive_ablation);
  CHECK_THROWS_AS(parse_suite_kind("table2"), ConfigError);
}

TEST_CASE("aggregate mean and standard error") {
  std::vector<MetricsRow> runs = {sample_row("a", 1, 0.60), sample_row("a", 2, 0.62), sample_row("a", 3, 0.67),
                                  sample_row("b", 1, 0.5)};
  auto agg = aggregate(runs);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].kind == "aggregate");
  CHECK(agg[0].n_seeds == 3);
  CHECK(agg[0].auc == doctest::Approx((0.60 + 0.62 + 0.67) / 3.0).epsilon(1e-15));
  const double m = (0.60 + 0.62 + 0.67) / 3.0;
  const double sd = std::sqrt(((0.60 - m) * (0.60 - m) + (0.62 - m) * (0.62 - m) + (0.67 - m) * (0.67 - m)) / 2.0);
  CHECK(agg[0].auc_stderr == doctest::Approx(sd / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(agg[1].auc_stderr == 0.0);
}

TEST_CASE("CSV and JSON emission") {
  std::vector<MetricsRow> rows = {sample_row("full", 1, 0.1 + 0.2)};
  std::stringstream csv;
  write_csv(csv, rows);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.rfind("version,kind,experiment", 0) == 0);

  rows.push_back(sample_row("full", 2, 0.7071067811865476));
  rows.push_back(aggregate(rows)[0]);
  std::stringstream c2, j2;
  write_csv(c2, rows);
  write_json(j2, rows);
  CHECK(read_csv(c2) == rows);
  CHECK(read_json(j2) == rows);

  const std::string digits = format_metric(rows[0].auc);
  CHECK(digits == "0.30000000000000004");
  CHECK(c2.str().find("," + digits + ",") != std::string::npos);
  CHECK(j2.str().find("\"auc\": " + digits + ",") != std::string::npos);
}

TEST_CASE("emit writes both files and reports failures") {
  const auto dir = std::filesystem::temp_directory_path() / "ecat_emit_test";
  std::filesystem::remove_all(dir);
  std::vector<MetricsRow> rows = {sample_row("x", 1, 0.5)};
  emit(rows, dir.string(), "m");
  CHECK(read_metrics_file((dir / "m.csv").string()) == rows);
  CHECK(read_metrics_file((dir / "m.json").string()) == rows);
  CHECK_THROWS_AS(emit({}, dir.string(), "m"), ContractError);
  CHECK_THROWS_AS(emit(rows, "/proc/ecat-no-such-dir", "m"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed metrics files are rejected") {
  std::stringstream bad_header("version,kind\n");
  CHECK_THROWS_AS(read_csv(bad_header), DataError);
  MetricsRow r = sample_row("x", 1, 0.5);
  r.version = "ecat-metrics-v0";
  std::stringstream out;
  CHECK_THROWS_AS(write_csv(out, {r}), DataError);
  std::stringstream not_array("{\"a\": 1}");
  CHECK_THROWS_AS(read_json(not_array), DataError);
  MetricsRow out_of_range = sample_row("x", 1, 1.5);
  CHECK_THROWS_AS(write_json(out, {out_of_range}), DataError);
}

TEST_CASE("render_table lists every row") {
  std::vector<MetricsRow> rows = {sample_row("only_target", 1, 0.6), sample_row("merge_all", 1, 0.61)};
  const auto table = render_table(rows);
  CHECK(table.find("only_target") != std::string::npos);
  CHECK(table.find("merge_all") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);
}

TEST_CASE("suite shapes") {
  RunConfig rc = tiny_run();
  auto ablation = run_suite(SuiteKind::adaptive_ablation, rc);
  CHECK(count_kind(ablation, "run") == 9);
  CHECK(count_kind(ablation, "aggregate") == 3);
  for (const auto& r : ablation) CHECK(r.checkpoint == "t+2dt");
  for (const auto& r : ablation) CHECK(r.wall_seconds == 0.0);

  rc.suite.seeds = {1, 2};
  auto setting = run_suite(SuiteKind::transfer_setting, rc);
  CHECK(count_kind(setting, "run") == 12);
  std::vector<std::pair<std::string, std::string>> cells;
  for (const auto& r : setting) {
    if (r.kind == "aggregate") cells.emplace_back(r.experiment, r.checkpoint);
  }
  const std::vector<std::pair<std::string, std::string>> want = {
      {"one_time", "t"}, {"one_time", "t+dt"}, {"one_time", "t+2dt"},
      {"continual", "t"}, {"continual", "t+dt"}, {"continual", "t+2dt"}};
  CHECK(cells == want);
}
