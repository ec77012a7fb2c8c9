#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ecat/datagen.hpp"
#include "ecat/metrics.hpp"

using namespace ecat;

namespace {
DataConfig small_config() {
  DataConfig c;
  c.num_users = 300;
  c.num_items = 200;
  c.target_records_per_window = 500;
  c.source_ratio = 10;
  return c;
}

bool same_record(const SampleRecord& a, const SampleRecord& b) {
  return a.user_id == b.user_id && a.item_id == b.item_id && a.behavior_seq == b.behavior_seq &&
         a.numeric == b.numeric && a.label == b.label && a.domain == b.domain && a.window == b.window &&
         a.channel == b.channel;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

TEST_CASE("world is a pure function of config and seed") {
  const auto c = small_config();
  World a = generate_world(c, 42), b = generate_world(c, 42), d = generate_world(c, 43);
  CHECK(a.user_latents == b.user_latents);
  CHECK(a.item_latents == b.item_latents);
  CHECK(a.target_item_ids == b.target_item_ids);
  CHECK(a.regular_mix == b.regular_mix);
  CHECK_FALSE(a.item_latents == d.item_latents);
  const auto wa = sample_window(a, 3), wb = sample_window(b, 3);
  REQUIRE(wa.source_records.size() == wb.source_records.size());
  for (std::size_t i = 0; i < wa.source_records.size(); ++i) CHECK(same_record(wa.source_records[i], wb.source_records[i]));
}

TEST_CASE("target subsets have exact sizes and no duplicates") {
  DataConfig c = small_config();
  c.num_items = 1000;
  c.target_item_fraction = 0.1;
  World w = generate_world(c, 1);
  CHECK(w.target_item_ids.size() == 100);
  CHECK(std::set<std::uint32_t>(w.target_item_ids.begin(), w.target_item_ids.end()).size() == 100);
  CHECK(std::is_sorted(w.target_user_ids.begin(), w.target_user_ids.end()));
  CHECK(w.target_item_ids.back() < 1000);
}

TEST_CASE("invalid fractions are config errors") {
  DataConfig c = small_config();
  c.target_item_fraction = 1.0;
  CHECK_THROWS_AS(generate_world(c, 1), ConfigError);
  c.target_item_fraction = 0.0;
  CHECK_THROWS_AS(generate_world(c, 1), ConfigError);
}

TEST_CASE("record invariants and sub-channel property") {
  const auto c = small_config();
  World w = generate_world(c, 5);
  const auto win = sample_window(w, 2);
  CHECK(win.target_records.size() == c.target_records_per_window);
  for (const auto* set : {&win.source_records, &win.target_records}) {
    for (const auto& r : *set) {
      CHECK(r.behavior_seq.size() == c.seq_len);
      CHECK(r.label <= 1);
      CHECK(r.window == 2);
      for (auto id : r.behavior_seq) CHECK((id == kPadItem || (id >= 0 && id < static_cast<int>(c.num_items))));
      if (r.domain == Domain::target) {
        CHECK(w.is_target_user(r.user_id));
        CHECK(w.is_target_item(r.item_id));
      }
    }
  }
}

TEST_CASE("every pay event has a matching click") {
  World w = generate_world(small_config(), 8);
  const auto win = sample_window(w, 1);
  for (const auto* events : {&win.source_events, &win.target_events}) {
    std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> clicks;
    for (const auto& e : *events) {
      if (e.kind == EventKind::click) clicks.insert({e.user_id, e.item_id, e.window});
    }
    for (const auto& e : *events) {
      if (e.kind == EventKind::pay) CHECK(clicks.count({e.user_id, e.item_id, e.window}) == 1);
    }
  }
}

TEST_CASE("source volume concentrates around ratio times target count") {
  DataConfig c = small_config();
  c.target_records_per_window = 1000;
  c.source_ratio = 100;
  World w = generate_world(c, 3);
  for (std::uint32_t win = 0; win < 3; ++win) {
    const auto n = sample_window(w, win).source_records.size();
    CHECK(n >= 95'000);
    CHECK(n <= 105'000);
  }
}

TEST_CASE("target positive rate matches the generator's own mean probability") {
  DataConfig c = small_config();
  c.target_bias = -2.0;
  c.target_records_per_window = 20000;
  c.source_ratio = 0;
  World w = generate_world(c, 13);
  const auto win = sample_window(w, 0);
  double pos = 0.0, mean_p = 0.0;
  for (const auto& r : win.target_records) {
    pos += r.label;
    mean_p += sigmoid(w.logit(r.user_id, r.item_id, 0, r.domain, r.channel));
  }
  const double n = static_cast<double>(win.target_records.size());
  CHECK(std::abs(pos / n - mean_p / n) < 0.02);
}

TEST_CASE("zero drift keeps the label function fixed across windows") {
  DataConfig c = small_config();
  c.drift_angle = 0.0;
  World w = generate_world(c, 2);
  CHECK(w.rotated_items(0) == w.rotated_items(5));
  for (std::uint32_t u = 0; u < 20; ++u) {
    for (std::uint32_t i = 0; i < 20; ++i) {
      CHECK(w.logit(u, i, 0, Domain::target, Channel::discount) == w.logit(u, i, 5, Domain::target, Channel::discount));
    }
  }
  c.drift_angle = 0.15;
  World d = generate_world(c, 2);
  CHECK_FALSE(d.rotated_items(0) == d.rotated_items(5));
}

TEST_CASE("a window-0 scorer loses AUC as windows drift away") {
  // Oracle scorer: the true window-0 logit. Averaged over seeds it must not
  // improve on later windows.
  DataConfig c = small_config();
  c.target_records_per_window = 4000;
  c.source_ratio = 0;
  c.drift_angle = 0.3;
  const std::vector<std::uint32_t> windows = {0, 2, 4, 6};
  std::vector<double> mean_auc(windows.size(), 0.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    World w = generate_world(c, seed);
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto win = sample_window(w, windows[k]);
      std::vector<double> s, y;
      for (const auto& r : win.target_records) {
        s.push_back(w.logit(r.user_id, r.item_id, 0, r.domain, r.channel));
        y.push_back(r.label);
      }
      mean_auc[k] += auc(s, y) / 5.0;
    }
  }
  for (std::size_t k = 1; k < windows.size(); ++k) CHECK(mean_auc[k] <= mean_auc[k - 1]);
}

TEST_CASE("phi ignores the domain tag and is order insensitive") {
  World w = generate_world(small_config(), 4);
  SampleRecord r;
  r.user_id = 1;
  r.item_id = 2;
  r.behavior_seq = {5, 9, 17, kPadItem, kPadItem, kPadItem, kPadItem, kPadItem, kPadItem, kPadItem};
  r.numeric = {0.5, -1.0, 2.0, 0.25};
  SampleRecord other = r;
  other.domain = Domain::target;
  other.channel = Channel::regular;
  other.user_id = 200;
  other.item_id = 150;
  CHECK(phi_features(w, r) == phi_features(w, other));
  auto phi = phi_features(w, r);
  CHECK(phi.size() == kPhiFeatures);
  // Hand-computed summaries over the three real positions.
  CHECK(phi[kNumericFeatures] == doctest::Approx(0.3));
  const double mean_rank =
      (w.item_popularity_rank[5] + w.item_popularity_rank[9] + w.item_popularity_rank[17]) / 3.0;
  CHECK(phi[kNumericFeatures + 1] == doctest::Approx(mean_rank).epsilon(1e-14));
  SampleRecord permuted = r;
  std::swap(permuted.behavior_seq[0], permuted.behavior_seq[2]);
  auto phi_p = phi_features(w, permuted);
  for (std::size_t k = 0; k < kPhiFeatures; ++k) CHECK(phi_p[k] == doctest::Approx(phi[k]).epsilon(1e-15));
}

TEST_CASE("dataset files round-trip") {
  World w = generate_world(small_config(), 6);
  const auto win = sample_window(w, 1);
  std::stringstream rec, ev;
  write_records(rec, win.target_records);
  write_events(ev, win.source_events);
  CHECK(rec.str().rfind(kRecordsVersion, 0) == 0);
  const auto back = read_records(rec);
  REQUIRE(back.size() == win.target_records.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(same_record(back[i], win.target_records[i]));
  const auto events = read_events(ev);
  REQUIRE(events.size() == win.source_events.size());
  CHECK(events.back().item_id == win.source_events.back().item_id);
  std::stringstream bad("ecat-records v0\n");
  CHECK_THROWS_AS(read_records(bad), DataError);
}
