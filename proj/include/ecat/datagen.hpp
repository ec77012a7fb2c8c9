#pragma once

// Synthetic "entire space" source domain plus a sparse sub-channel target
// domain with temporal drift.
//
// Purchase probability for a (user, item) pair in window w is
//   sigmoid(u^T R(w * drift_angle) i + bias)
// where R rotates item latents inside a fixed random 2-D plane. Target
// records use target_bias and come from the discounted item subset. Source
// records come from two channels: a discount channel that shares the target
// conditional, and a regular channel whose interaction is partly remixed by
// a fixed random rotation Q:
//   u^T ((1 - shift) I + shift Q) R i + source_bias.
// Numeric feature 0 carries a noisy channel signal, which is what lets a
// domain discriminator tell the channels apart.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ecat/tensor.hpp"

namespace ecat {

inline constexpr std::size_t kNumericFeatures = 4;
inline constexpr std::size_t kPhiFeatures = kNumericFeatures + 2;
inline constexpr std::int32_t kPadItem = -1;

enum class Domain : std::uint8_t { source = 0, target = 1 };
enum class Channel : std::uint8_t { discount = 0, regular = 1 };
enum class EventKind : std::uint8_t { click = 0, pay = 1 };

const char* to_string(Domain d);
const char* to_string(EventKind k);

struct DataConfig {
  std::size_t num_users = 2000;
  std::size_t num_items = 1000;
  std::size_t latent_dim = 8;
  std::size_t seq_len = 10;
  double target_user_fraction = 0.2;
  double target_item_fraction = 0.1;
  double drift_angle = 0.15;
  std::size_t target_records_per_window = 10000;
  double source_ratio = 100.0;
  double target_bias = -2.0;
  double source_bias = -1.5;
  double latent_scale = 0.85;
  double popularity_exponent = 0.8;
  /// Share of source records drawn from the target-like discount channel.
  double source_discount_share = 0.3;
  /// Mixing weight of the remixed interaction in the regular channel.
  double source_conditional_shift = 0.7;
  double channel_signal = 1.0;
  double channel_noise = 0.8;
  /// Popularity-drawn candidates per click; the clicked one is sampled by
  /// softmax of affinity.
  std::size_t click_candidates = 4;

  void validate() const;
};

struct World {
  DataConfig config;
  std::uint64_t seed = 0;
  Tensor user_latents;  // [num_users, latent_dim]
  Tensor item_latents;  // [num_items, latent_dim]
  std::vector<std::uint32_t> target_user_ids;  // sorted
  std::vector<std::uint32_t> target_item_ids;  // sorted
  std::vector<double> item_popularity;         // sampling weight
  std::vector<double> item_popularity_rank;    // 0 = most popular, scaled to [0,1]
  std::vector<double> item_price;
  std::vector<double> user_activity;
  std::array<std::vector<double>, 2> drift_plane;  // orthonormal basis
  Tensor regular_mix;                              // [latent_dim, latent_dim]
  double drift_angle = 0.0;

  bool is_target_user(std::uint32_t u) const;
  bool is_target_item(std::uint32_t i) const;
  /// Item latents rotated for `window`.
  Tensor rotated_items(std::size_t window) const;
  /// Label logit for a pair in a given window and channel.
  double logit(std::uint32_t user, std::uint32_t item, std::size_t window, Domain domain, Channel channel) const;
};

struct SampleRecord {
  std::uint32_t user_id = 0;
  std::uint32_t item_id = 0;
  std::vector<std::int32_t> behavior_seq;  // exactly seq_len, oldest first, kPadItem tail
  std::array<double, kNumericFeatures> numeric{};
  std::uint8_t label = 0;
  Domain domain = Domain::source;
  std::uint32_t window = 0;
  /// Generator ground truth, for diagnostics only; never a model input.
  Channel channel = Channel::discount;
};

struct InteractionEvent {
  std::uint32_t user_id = 0;
  std::uint32_t item_id = 0;
  EventKind kind = EventKind::click;
  Domain domain = Domain::source;
  std::uint32_t window = 0;
};

struct WindowData {
  std::uint32_t window = 0;
  std::vector<SampleRecord> source_records;
  std::vector<SampleRecord> target_records;
  std::vector<InteractionEvent> source_events;
  std::vector<InteractionEvent> target_events;
};

/// Deterministic in (config, seed). Throws ConfigError on invalid settings.
World generate_world(const DataConfig& config, std::uint64_t seed);

/// Deterministic in (world, window); each window draws from its own stream.
WindowData sample_window(const World& world, std::uint32_t window);

/// Domain-independent view of a record: numeric features, the fraction of
/// real (non-pad) sequence positions, and the mean popularity rank of the
/// sequence items. Never reads ids or the domain tag.
std::array<double, kPhiFeatures> phi_features(const World& world, const SampleRecord& record);

/// Derived per-window RNG seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index);

// Newline-delimited dataset files. First line is the version tag, second is
// the tab-separated header; one record/event per following line.
inline constexpr const char* kRecordsVersion = "ecat-records v1";
inline constexpr const char* kEventsVersion = "ecat-events v1";
void write_records(std::ostream& out, std::span<const SampleRecord> records);
std::vector<SampleRecord> read_records(std::istream& in);
void write_events(std::ostream& out, std::span<const InteractionEvent> events);
std::vector<InteractionEvent> read_events(std::istream& in);

}  // namespace ecat
