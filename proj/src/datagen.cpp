#include "ecat/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace ecat {

namespace {

constexpr std::uint64_t kTagWorld = 0x574f524cULL;
constexpr std::uint64_t kTagWindow = 0x57494e44ULL;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  for (auto& x : v) x = normal(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void orthonormalize_against(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    const double p = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
  }
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
}

std::size_t fraction_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

void rotate_in_plane(std::span<double> v, const std::array<std::vector<double>, 2>& plane, double angle) {
  if (angle == 0.0) return;
  const double a = dot(v, plane[0]);
  const double b = dot(v, plane[1]);
  const double c = std::cos(angle), s = std::sin(angle);
  const double da = a * c - b * s - a;
  const double db = a * s + b * c - b;
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += da * plane[0][k] + db * plane[1][k];
}

}  // namespace

const char* to_string(Domain d) { return d == Domain::target ? "target" : "source"; }
const char* to_string(EventKind k) { return k == EventKind::pay ? "pay" : "click"; }

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index);
}

void DataConfig::validate() const {
  if (num_users == 0 || num_items == 0 || latent_dim < 2 || seq_len == 0) {
    throw ConfigError("data: num_users, num_items, seq_len must be > 0 and latent_dim >= 2");
  }
  auto open_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!open_unit(target_user_fraction) || !open_unit(target_item_fraction)) {
    throw ConfigError("data: target fractions must lie in (0, 1)");
  }
  if (fraction_count(num_users, target_user_fraction) == 0 || fraction_count(num_items, target_item_fraction) == 0) {
    throw ConfigError("data: target fractions select no users or items");
  }
  if (!(source_ratio >= 0.0) || !(source_discount_share >= 0.0 && source_discount_share <= 1.0) ||
      !(source_conditional_shift >= 0.0 && source_conditional_shift <= 1.0)) {
    throw ConfigError("data: source_ratio >= 0, source_discount_share and source_conditional_shift in [0, 1]");
  }
  if (target_records_per_window == 0 || click_candidates == 0 || !(latent_scale > 0.0) || !(channel_noise >= 0.0)) {
    throw ConfigError("data: target_records_per_window, click_candidates, latent_scale must be positive");
  }
  if (!std::isfinite(drift_angle) || !std::isfinite(target_bias) || !std::isfinite(source_bias)) {
    throw ConfigError("data: non-finite drift_angle or bias");
  }
}

bool World::is_target_user(std::uint32_t u) const {
  return std::binary_search(target_user_ids.begin(), target_user_ids.end(), u);
}

bool World::is_target_item(std::uint32_t i) const {
  return std::binary_search(target_item_ids.begin(), target_item_ids.end(), i);
}

Tensor World::rotated_items(std::size_t window) const {
  Tensor out = item_latents;
  const double angle = drift_angle * static_cast<double>(window);
  for (std::size_t i = 0; i < out.rows(); ++i) rotate_in_plane(out.row(i), drift_plane, angle);
  return out;
}

double World::logit(std::uint32_t user, std::uint32_t item, std::size_t window, Domain domain,
                    Channel channel) const {
  const std::size_t d = config.latent_dim;
  std::vector<double> v(item_latents.row(item).begin(), item_latents.row(item).end());
  rotate_in_plane(v, drift_plane, drift_angle * static_cast<double>(window));
  auto u = user_latents.row(user);
  if (domain == Domain::source && channel == Channel::regular) {
    const double shift = config.source_conditional_shift;
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      double mixed = 0.0;
      for (std::size_t c = 0; c < d; ++c) mixed += regular_mix(r, c) * v[c];
      s += u[r] * ((1.0 - shift) * v[r] + shift * mixed);
    }
    return s + config.source_bias;
  }
  return dot(u, v) + (domain == Domain::target ? config.target_bias : config.source_bias);
}

World generate_world(const DataConfig& config, std::uint64_t seed) {
  config.validate();
  World w;
  w.config = config;
  w.seed = seed;
  w.drift_angle = config.drift_angle;
  std::mt19937_64 rng(stream_seed(seed, kTagWorld, 0));
  std::normal_distribution<double> latent(0.0, config.latent_scale);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t d = config.latent_dim;
  w.user_latents = Tensor::zeros(config.num_users, d);
  for (auto& x : w.user_latents.data()) x = latent(rng);
  w.item_latents = Tensor::zeros(config.num_items, d);
  for (auto& x : w.item_latents.data()) x = latent(rng);

  w.target_user_ids =
      sample_without_replacement(config.num_users, fraction_count(config.num_users, config.target_user_fraction), rng);
  w.target_item_ids =
      sample_without_replacement(config.num_items, fraction_count(config.num_items, config.target_item_fraction), rng);

  // Zipf-like popularity over a random item order.
  std::vector<std::uint32_t> order(config.num_items);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), rng);
  w.item_popularity.assign(config.num_items, 0.0);
  w.item_popularity_rank.assign(config.num_items, 0.0);
  const double denom = config.num_items > 1 ? static_cast<double>(config.num_items - 1) : 1.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    w.item_popularity[order[r]] = std::pow(static_cast<double>(r + 1), -config.popularity_exponent);
    w.item_popularity_rank[order[r]] = static_cast<double>(r) / denom;
  }
  w.item_price.resize(config.num_items);
  for (auto& x : w.item_price) x = normal(rng);
  w.user_activity.resize(config.num_users);
  for (auto& x : w.user_activity) x = normal(rng);

  std::vector<std::vector<double>> basis;
  for (std::size_t k = 0; k < 2; ++k) {
    auto v = random_unit(d, rng);
    orthonormalize_against(v, basis);
    basis.push_back(v);
  }
  w.drift_plane = {basis[0], basis[1]};

  // Random orthogonal matrix by Gram-Schmidt on Gaussian rows.
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < d; ++k) {
    auto v = random_unit(d, rng);
    orthonormalize_against(v, rows);
    rows.push_back(v);
  }
  w.regular_mix = Tensor::zeros(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) w.regular_mix(r, c) = rows[r][c];
  }
  return w;
}

WindowData sample_window(const World& world, std::uint32_t window) {
  const DataConfig& cfg = world.config;
  std::mt19937_64 rng(stream_seed(world.seed, kTagWindow, window));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Tensor items = world.rotated_items(window);
  auto affinity = [&](std::uint32_t u, std::uint32_t i) { return dot(world.user_latents.row(u), items.row(i)); };

  std::discrete_distribution<std::uint32_t> any_item(world.item_popularity.begin(), world.item_popularity.end());
  std::vector<double> target_weights;
  for (auto i : world.target_item_ids) target_weights.push_back(world.item_popularity[i]);
  std::discrete_distribution<std::size_t> target_item_pick(target_weights.begin(), target_weights.end());
  std::uniform_int_distribution<std::size_t> any_user(0, cfg.num_users - 1);
  std::uniform_int_distribution<std::size_t> target_user_pick(0, world.target_user_ids.size() - 1);

  std::vector<double> cand_weight(cfg.click_candidates);
  std::vector<std::uint32_t> cand(cfg.click_candidates);
  auto choose_click = [&](std::uint32_t u, bool target_only) {
    double max_a = -INFINITY;
    for (std::size_t k = 0; k < cfg.click_candidates; ++k) {
      cand[k] = target_only ? world.target_item_ids[target_item_pick(rng)] : any_item(rng);
      cand_weight[k] = affinity(u, cand[k]);
      max_a = std::max(max_a, cand_weight[k]);
    }
    for (auto& x : cand_weight) x = std::exp(x - max_a);
    std::discrete_distribution<std::size_t> pick(cand_weight.begin(), cand_weight.end());
    return cand[pick(rng)];
  };

  // Each user enters the window with a random-length click history.
  std::vector<std::vector<std::int32_t>> history(cfg.num_users);
  std::uniform_int_distribution<std::size_t> initial_len(0, cfg.seq_len);
  for (std::uint32_t u = 0; u < cfg.num_users; ++u) {
    const std::size_t n = initial_len(rng);
    for (std::size_t k = 0; k < n; ++k) history[u].push_back(static_cast<std::int32_t>(choose_click(u, false)));
  }

  WindowData out;
  out.window = window;
  const std::size_t n_target = cfg.target_records_per_window;
  std::poisson_distribution<std::size_t> source_volume(static_cast<double>(n_target) * cfg.source_ratio);
  const std::size_t n_source = cfg.source_ratio > 0.0 ? source_volume(rng) : 0;

  std::vector<std::uint8_t> slots(n_target + n_source, 0);
  std::fill(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(n_target), 1);
  std::shuffle(slots.begin(), slots.end(), rng);
  out.target_records.reserve(n_target);
  out.source_records.reserve(n_source);

  for (std::uint8_t is_target : slots) {
    SampleRecord r;
    r.window = window;
    r.domain = is_target ? Domain::target : Domain::source;
    if (is_target) {
      r.channel = Channel::discount;
      r.user_id = world.target_user_ids[target_user_pick(rng)];
    } else {
      r.channel = unit(rng) < cfg.source_discount_share ? Channel::discount : Channel::regular;
      r.user_id = static_cast<std::uint32_t>(any_user(rng));
    }
    r.item_id = choose_click(r.user_id, r.channel == Channel::discount);

    auto& h = history[r.user_id];
    const std::size_t start = h.size() > cfg.seq_len ? h.size() - cfg.seq_len : 0;
    r.behavior_seq.assign(h.begin() + static_cast<std::ptrdiff_t>(start), h.end());
    r.behavior_seq.resize(cfg.seq_len, kPadItem);

    const double sign = r.channel == Channel::discount ? 1.0 : -1.0;
    r.numeric[0] = sign * cfg.channel_signal + cfg.channel_noise * normal(rng);
    r.numeric[1] = world.item_price[r.item_id];
    r.numeric[2] = world.user_activity[r.user_id];
    r.numeric[3] = normal(rng);

    const double p = sigmoid(world.logit(r.user_id, r.item_id, window, r.domain, r.channel));
    r.label = unit(rng) < p ? 1 : 0;

    h.push_back(static_cast<std::int32_t>(r.item_id));
    if (h.size() > 4 * cfg.seq_len) h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(cfg.seq_len));

    auto& events = is_target ? out.target_events : out.source_events;
    events.push_back({r.user_id, r.item_id, EventKind::click, r.domain, window});
    if (r.label) events.push_back({r.user_id, r.item_id, EventKind::pay, r.domain, window});
    (is_target ? out.target_records : out.source_records).push_back(std::move(r));
  }
  return out;
}

std::array<double, kPhiFeatures> phi_features(const World& world, const SampleRecord& record) {
  std::array<double, kPhiFeatures> phi{};
  std::copy(record.numeric.begin(), record.numeric.end(), phi.begin());
  std::size_t real = 0;
  double rank_sum = 0.0;
  for (auto id : record.behavior_seq) {
    if (id == kPadItem) continue;
    ++real;
    rank_sum += world.item_popularity_rank.at(static_cast<std::size_t>(id));
  }
  const double len = record.behavior_seq.empty() ? 1.0 : static_cast<double>(record.behavior_seq.size());
  phi[kNumericFeatures] = static_cast<double>(real) / len;
  phi[kNumericFeatures + 1] = real ? rank_sum / static_cast<double>(real) : 0.0;
  return phi;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("malformed number '" + std::string(s) + "'");
  }
  return v;
}

long long parse_int(std::string_view s) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("malformed integer '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw DataError("unknown domain '" + std::string(s) + "'");
}

constexpr const char* kRecordHeader = "user_id\titem_id\tdomain\twindow\tlabel\tchannel\tbehavior_seq\tnumeric";
constexpr const char* kEventHeader = "user_id\titem_id\tkind\tdomain\twindow";

void expect_line(std::istream& in, const char* expected) {
  std::string line;
  if (!std::getline(in, line) || line != expected) {
    throw DataError(std::string("expected '") + expected + "', got '" + line + "'");
  }
}

}  // namespace

void write_records(std::ostream& out, std::span<const SampleRecord> records) {
  out << kRecordsVersion << '\n' << kRecordHeader << '\n';
  for (const auto& r : records) {
    out << r.user_id << '\t' << r.item_id << '\t' << to_string(r.domain) << '\t' << r.window << '\t'
        << static_cast<int>(r.label) << '\t' << (r.channel == Channel::discount ? "discount" : "regular") << '\t';
    for (std::size_t k = 0; k < r.behavior_seq.size(); ++k) out << (k ? "," : "") << r.behavior_seq[k];
    out << '\t';
    for (std::size_t k = 0; k < r.numeric.size(); ++k) out << (k ? "," : "") << format_double(r.numeric[k]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing records");
}

std::vector<SampleRecord> read_records(std::istream& in) {
  expect_line(in, kRecordsVersion);
  expect_line(in, kRecordHeader);
  std::vector<SampleRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 8) throw DataError("record line has " + std::to_string(f.size()) + " fields");
    SampleRecord r;
    r.user_id = static_cast<std::uint32_t>(parse_int(f[0]));
    r.item_id = static_cast<std::uint32_t>(parse_int(f[1]));
    r.domain = parse_domain(f[2]);
    r.window = static_cast<std::uint32_t>(parse_int(f[3]));
    r.label = static_cast<std::uint8_t>(parse_int(f[4]));
    if (r.label > 1) throw DataError("label must be 0 or 1");
    if (f[5] == "discount") {
      r.channel = Channel::discount;
    } else if (f[5] == "regular") {
      r.channel = Channel::regular;
    } else {
      throw DataError("unknown channel '" + std::string(f[5]) + "'");
    }
    for (auto s : split(f[6], ',')) r.behavior_seq.push_back(static_cast<std::int32_t>(parse_int(s)));
    auto nums = split(f[7], ',');
    if (nums.size() != kNumericFeatures) throw DataError("record has wrong numeric feature count");
    for (std::size_t k = 0; k < kNumericFeatures; ++k) r.numeric[k] = parse_double(nums[k]);
    records.push_back(std::move(r));
  }
  return records;
}

void write_events(std::ostream& out, std::span<const InteractionEvent> events) {
  out << kEventsVersion << '\n' << kEventHeader << '\n';
  for (const auto& e : events) {
    out << e.user_id << '\t' << e.item_id << '\t' << to_string(e.kind) << '\t' << to_string(e.domain) << '\t'
        << e.window << '\n';
  }
  if (!out) throw IoError("failed writing events");
}

std::vector<InteractionEvent> read_events(std::istream& in) {
  expect_line(in, kEventsVersion);
  expect_line(in, kEventHeader);
  std::vector<InteractionEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 5) throw DataError("event line has " + std::to_string(f.size()) + " fields");
    InteractionEvent e;
    e.user_id = static_cast<std::uint32_t>(parse_int(f[0]));
    e.item_id = static_cast<std::uint32_t>(parse_int(f[1]));
    if (f[2] == "click") {
      e.kind = EventKind::click;
    } else if (f[2] == "pay") {
      e.kind = EventKind::pay;
    } else {
      throw DataError("unknown event kind '" + std::string(f[2]) + "'");
    }
    e.domain = parse_domain(f[3]);
    e.window = static_cast<std::uint32_t>(parse_int(f[4]));
    events.push_back(e);
  }
  return events;
}

}  // namespace ecat
