#include "ecat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ecat/metrics.hpp"

namespace ecat {

namespace {

constexpr std::uint64_t kTagSourceModel = 0x53524355ULL;
constexpr std::uint64_t kTagTargetModel = 0x54475455ULL;
constexpr std::uint64_t kTagTransfer = 0x5452414eULL;
constexpr std::uint64_t kTagShuffle = 0x53485546ULL;
constexpr std::uint64_t kTagSourceShuffle = 0x53534846ULL;
constexpr std::size_t kEvalChunk = 4096;
constexpr double kFixedMix = 0.5;

AdagradConfig optimizer_config(const TrainConfig& c) {
  AdagradConfig a;
  a.learning_rate = c.learning_rate;
  a.accumulator_decay = c.accumulator_decay;
  a.epsilon = c.adagrad_epsilon;
  a.initial_accumulator = c.initial_accumulator;
  return a;
}

ParamList concat_params(ParamList a, const ParamList& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

bool is_checkpoint(std::size_t window, std::size_t delta_t) { return window % delta_t == 0; }

std::vector<const SampleRecord*> pointers(std::span<const SampleRecord> records) {
  std::vector<const SampleRecord*> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(&r);
  return out;
}

std::string describe(const BatchLossBreakdown& b) {
  std::ostringstream s;
  s << "l_y=" << b.l_y << " l_di=" << b.l_di << " l_da=" << b.l_da << " total=" << b.l_total;
  return s.str();
}

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> values, const char* what) {
  for (E v : values) {
    if (s == to_string(v)) return v;
  }
  std::string allowed;
  for (E v : values) allowed += std::string(allowed.empty() ? "" : ", ") + to_string(v);
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + allowed + ")");
}

}  // namespace

const char* to_string(TransferMode m) { return m == TransferMode::one_time ? "one_time" : "continual"; }

const char* to_string(SampleMode m) {
  switch (m) {
    case SampleMode::only_target: return "only_target";
    case SampleMode::merge_all: return "merge_all";
    case SampleMode::gst_only: return "gst_only";
    case SampleMode::gst_and_da: return "gst_and_da";
  }
  return "?";
}

const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::gated: return "gated";
    case FusionMode::fixed_mix: return "fixed_mix";
    case FusionMode::off: return "off";
  }
  return "?";
}

TransferMode parse_transfer_mode(const std::string& s) {
  return parse_enum(s, {TransferMode::one_time, TransferMode::continual}, "transfer_mode");
}
SampleMode parse_sample_mode(const std::string& s) {
  return parse_enum(s, {SampleMode::only_target, SampleMode::merge_all, SampleMode::gst_only, SampleMode::gst_and_da},
                    "sample_mode");
}
FusionMode parse_fusion_mode(const std::string& s) {
  return parse_enum(s, {FusionMode::gated, FusionMode::fixed_mix, FusionMode::off}, "fusion_mode");
}

FusionMode TrainConfig::fusion_mode() const {
  if (disable_fusion) return FusionMode::off;
  return disable_gate ? FusionMode::fixed_mix : FusionMode::gated;
}

void TrainConfig::validate() const {
  data.validate();
  gst.validate();
  model.validate();
  weights.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(accumulator_decay > 0.0 && accumulator_decay <= 1.0)) throw ConfigError("accumulator_decay must be in (0,1]");
  if (!(adagrad_epsilon > 0.0)) throw ConfigError("adagrad_epsilon must be > 0");
  if (!(initial_accumulator >= 0.0)) throw ConfigError("initial_accumulator must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (sample_mode == SampleMode::gst_and_da && batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 when the discriminator is trained");
  }
  if (window_count < 1) throw ConfigError("window_count must be >= 1");
  if (delta_t_windows < 1) throw ConfigError("delta_t_windows must be >= 1");
}

TrainState::TrainState(const TrainConfig& config, const World& world)
    : target(world.config.num_users, world.config.num_items, world.config.seq_len, config.model,
             stream_seed(config.seed, kTagTargetModel, 0)),
      source(world.config.num_users, world.config.num_items, world.config.seq_len, config.model,
             stream_seed(config.seed, kTagSourceModel, 0)),
      adapter(config.model.embed_dim, config.model.adapter_hidden, stream_seed(config.seed, kTagTransfer, 1)),
      gate(config.model.embed_dim, config.model.gate_init_bias, stream_seed(config.seed, kTagTransfer, 2)),
      discriminator(kPhiFeatures, config.model.discriminator_hidden, stream_seed(config.seed, kTagTransfer, 3)),
      target_opt(target.parameters(), optimizer_config(config)),
      transfer_opt(concat_params(adapter.parameters(), gate.parameters()), optimizer_config(config)),
      disc_opt(discriminator.parameters(), optimizer_config(config)),
      source_opt(source.parameters(), optimizer_config(config)) {}

void warm_up_from_source(CtrModel& target, const CtrModel& source) { target.copy_values_from(source); }

std::vector<double> train_source_window(CtrModel& source, Adagrad& optimizer, const World& world,
                                        std::span<const SampleRecord> records, std::size_t epochs,
                                        std::size_t batch_size, std::uint64_t shuffle_seed) {
  std::vector<double> curve;
  if (records.empty() || epochs == 0) return curve;
  TrainingStream stream;
  stream.records = pointers(records);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double total = 0.0;
    std::size_t steps = 0;
    for (const auto& chunk : make_batches(stream, batch_size, stream_seed(shuffle_seed, kTagSourceShuffle, epoch))) {
      Batch batch = make_batch(world, chunk);
      Var loss = mean(binary_cross_entropy(source.forward(batch), batch.labels));
      if (!std::isfinite(loss.value().item())) throw NumericError("source training produced a non-finite loss");
      backward(loss);
      optimizer.step();
      total += loss.value().item();
      ++steps;
    }
    curve.push_back(total / static_cast<double>(steps));
  }
  return curve;
}

TrainingStream build_training_stream(const WindowData& window, SampleMode mode, const GstConfig& gst,
                                     std::size_t num_users, std::size_t num_items) {
  TrainingStream stream;
  stream.records = pointers(window.target_records);
  stream.target_count = window.target_records.size();
  switch (mode) {
    case SampleMode::only_target:
      break;
    case SampleMode::merge_all:
      for (const auto& r : window.source_records) stream.records.push_back(&r);
      stream.source_count = window.source_records.size();
      break;
    case SampleMode::gst_only:
    case SampleMode::gst_and_da: {
      InteractionGraph graph = build_graph(window.source_events, num_users, num_items);
      NodeSet seeds = seed_nodes(graph, vocabulary_of(window.target_records));
      GstSelection sel = gst_select(graph, seeds, gst, window.source_records);
      for (std::size_t i : sel.record_indices) stream.records.push_back(&window.source_records[i]);
      stream.source_count = sel.record_indices.size();
      stream.use_discriminator = mode == SampleMode::gst_and_da;
      break;
    }
  }
  if (stream.records.empty()) {
    throw DataError("training stream for window " + std::to_string(window.window) + " is empty");
  }
  return stream;
}

std::vector<std::vector<const SampleRecord*>> make_batches(const TrainingStream& stream, std::size_t batch_size,
                                                           std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<const SampleRecord*> order = stream.records;
  // Fisher-Yates with explicit draws so the order does not depend on the
  // standard library's shuffle.
  std::mt19937_64 rng(shuffle_seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<const SampleRecord*>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

StepReport train_step(TrainState& state, const TrainConfig& config, const Batch& batch, bool use_discriminator) {
  const std::size_t n = batch.size;
  const FusionMode fusion = config.fusion_mode();

  // 1. S forward, no graph.
  SourceOutput s_out = forward_source(state.source, batch);

  // 2. T encoding; the entropy pass reuses it without building a graph.
  Encoded enc = state.target.encode(batch);
  std::vector<double> entropy;
  {
    NoGradGuard no_grad;
    entropy = entropy_of_target(state.target.head(enc, enc.e_seq, batch).value());
  }

  // 3. Adapter, gate, fusion.
  StepReport report;
  Var adapted;
  Var seq_repr = enc.e_seq;
  if (fusion != FusionMode::off) {
    adapted = state.adapter.forward(enc.e_seq);
    if (fusion == FusionMode::gated) {
      GateOutput g = state.gate.fuse(adapted, enc.e_seq, entropy);
      seq_repr = g.fused;
      report.gate_values.assign(g.gate.value().data().begin(), g.gate.value().data().end());
    } else {
      seq_repr = fixed_fuse(adapted, enc.e_seq, kFixedMix);
      report.gate_values.assign(n, kFixedMix);
    }
  }

  // 4. Main pass.
  Var pred = state.target.head(enc, seq_repr, batch);

  // 5. Losses.
  std::vector<double> w_da(n, 1.0);
  Var l_da;
  if (use_discriminator) {
    Var domain_prob = state.discriminator.forward(batch.phi);
    w_da = da_sample_weights(domain_prob.value(), batch.domains);
    std::vector<double> domain_labels(n);
    for (std::size_t i = 0; i < n; ++i) domain_labels[i] = batch.domains[i] == Domain::target ? 1.0 : 0.0;
    l_da = loss_da(domain_prob, domain_labels);
  }
  Var l_y = loss_y(pred, batch.labels, w_da);

  std::vector<double> w_pow;
  Var l_di;
  if (fusion != FusionMode::off) {
    w_pow = config.disable_intensity ? std::vector<double>(n, 1.0) : distill_intensity(adapted.value(), s_out.e_seq);
    l_di = loss_di(adapted, Var::constant(s_out.e_seq), w_pow);
  }
  ComposedLoss loss = loss_ecat(l_y, l_di, l_da, config.weights, std::move(w_da), std::move(w_pow));
  report.losses = loss.breakdown;
  if (!std::isfinite(report.losses.l_total)) {
    throw NumericError("non-finite loss at window " + std::to_string(state.window) + ": " + describe(report.losses));
  }

  // 6-7. One backward, three updates.
  backward(loss.total);
  state.target_opt.step();
  state.transfer_opt.step();
  state.disc_opt.step();
  return report;
}

Tensor predict_target(const TrainState& state, const TrainConfig& config, const Batch& batch) {
  NoGradGuard no_grad;
  Encoded enc = state.target.encode(batch);
  switch (config.fusion_mode()) {
    case FusionMode::off:
      return state.target.head(enc, enc.e_seq, batch).value();
    case FusionMode::fixed_mix: {
      Var adapted = state.adapter.forward(enc.e_seq);
      return state.target.head(enc, fixed_fuse(adapted, enc.e_seq, kFixedMix), batch).value();
    }
    case FusionMode::gated: {
      std::vector<double> entropy = entropy_of_target(state.target.head(enc, enc.e_seq, batch).value());
      Var adapted = state.adapter.forward(enc.e_seq);
      return state.target.head(enc, state.gate.fuse(adapted, enc.e_seq, entropy).fused, batch).value();
    }
  }
  throw ContractError("unknown fusion mode");
}

namespace {

// Snapshot layout: S's parameter values, then S's optimizer accumulators.
std::vector<Tensor> snapshot_of(const TrainState& state) {
  std::vector<Tensor> v;
  for (const auto& p : state.source.parameters()) v.push_back(p.var.value());
  for (const auto& a : state.source_opt.accumulators()) v.push_back(a);
  return v;
}

void restore_snapshot(TrainState& state, const std::vector<Tensor>& snap) {
  auto params = state.source.parameters();
  auto& acc = state.source_opt.accumulators();
  if (snap.size() != params.size() + acc.size()) throw ContractError("cached source snapshot does not match the model");
  for (std::size_t k = 0; k < params.size(); ++k) params[k].var.mutable_value() = snap[k];
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] = snap[params.size() + k];
}

// One S training phase, served from the cache when possible.
void source_phase(TrainState& state, const TrainConfig& config, const World& world,
                  std::span<const SampleRecord> records, std::size_t epochs, std::size_t phase, SourceCache* cache) {
  const std::string key = cache ? SourceCache::key(config) : std::string();
  std::vector<Tensor> cached;
  if (cache && cache->lookup(key, phase, cached)) {
    restore_snapshot(state, cached);
  } else {
    train_source_window(state.source, state.source_opt, world, records, epochs, config.batch_size,
                        stream_seed(config.seed, kTagSourceShuffle, phase == 0 ? 0 : state.window));
    if (cache) cache->store(key, phase, snapshot_of(state));
  }
  ++state.source_training_phases;
}

}  // namespace

std::string SourceCache::key(const TrainConfig& c) {
    std::ostringstream k;
  k.precision(17);
  const auto& d = c.data;
  k << d.num_users << ' ' << d.num_items << ' ' << d.latent_dim << ' ' << d.seq_len << ' ' << d.target_user_fraction
    << ' ' << d.target_item_fraction << ' ' << d.drift_angle << ' ' << d.target_records_per_window << ' '
    << d.source_ratio << ' ' << d.target_bias << ' ' << d.source_bias << ' ' << d.latent_scale << ' '
    << d.popularity_exponent << ' ' << d.source_discount_share << ' ' << d.source_conditional_shift << ' '
    << d.channel_signal << ' ' << d.channel_noise << ' ' << d.click_candidates << '|';
  const auto& m = c.model;
  k << m.embed_dim << ' ' << m.embedding_init_std;
  for (auto h : m.mlp_hidden) k << ' ' << h;
  k << '|' << c.learning_rate << ' ' << c.accumulator_decay << ' ' << c.adagrad_epsilon << ' ' << c.initial_accumulator
    << ' ' << c.batch_size << ' ' << c.delta_t_windows << ' ' << to_string(c.transfer_mode) << ' '
    << c.source_pretrain_epochs << ' ' << c.source_refresh_epochs << ' ' << c.seed;
  return k.str();
}

bool SourceCache::lookup(const std::string& key, std::size_t phase, std::vector<Tensor>& values) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = snapshots_.find({key, phase});
  if (it == snapshots_.end()) return false;
  values = it->second;
  return true;
}

void SourceCache::store(const std::string& key, std::size_t phase, std::vector<Tensor> values) {
  std::lock_guard<std::mutex> lock(mutex_);
  snapshots_.emplace(std::make_pair(key, phase), std::move(values));
}

std::size_t SourceCache::phases(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::size_t n = 0;
  for (const auto& [k, v] : snapshots_) n += k.first == key;
  return n;
}

TrainState initialise(const TrainConfig& config, const World& world, const WindowData& window0) {
  TrainState state(config, world);
  source_phase(state, config, world, window0.source_records, config.source_pretrain_epochs, 0, nullptr);
  warm_up_from_source(state.target, state.source);
  return state;
}

std::string checkpoint_label(std::size_t index) {
  if (index == 0) return "t";
  if (index == 1) return "t+dt";
  return "t+" + std::to_string(index) + "dt";
}

namespace {

template <typename Predict>
double evaluate(const World& world, std::span<const SampleRecord> records, Predict predict) {
  std::vector<double> scores;
  std::vector<double> labels;
  scores.reserve(records.size());
  labels.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += kEvalChunk) {
    auto chunk = records.subspan(start, std::min(kEvalChunk, records.size() - start));
    Batch batch = make_batch(world, chunk);
    Tensor p = predict(batch);
    scores.insert(scores.end(), p.data().begin(), p.data().end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
  }
  return auc(scores, labels);
}

void save_target(const TrainState& state, const TrainConfig& config, const std::string& label) {
  std::filesystem::create_directories(config.checkpoint_dir);
  const auto path = std::filesystem::path(config.checkpoint_dir) /
                    ("target_seed" + std::to_string(config.seed) + "_" + label + ".ckpt");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  ParamList params = concat_params(concat_params(state.target.parameters(), state.adapter.parameters()),
                                   state.gate.parameters());
  save_checkpoint(out, params, config.seed, state.window);
}

}  // namespace

std::vector<CheckpointResult> run_experiment(const TrainConfig& config, SourceCache* cache) {
  config.validate();
  const World world = generate_world(config.data, config.seed);
  WindowData current = sample_window(world, 0);
  TrainState state(config, world);
  source_phase(state, config, world, current.source_records, config.source_pretrain_epochs, 0, cache);
  warm_up_from_source(state.target, state.source);

  std::vector<CheckpointResult> results;
  std::vector<WindowData> pending_source;  // source windows not yet seen by S
  for (std::size_t w = 0; w < config.window_count; ++w) {
    const auto started = std::chrono::steady_clock::now();
    state.window = static_cast<std::uint32_t>(w);
    if (w > 0) current = sample_window(world, static_cast<std::uint32_t>(w));

    if (config.transfer_mode == TransferMode::continual && w > 0) {
      if (is_checkpoint(w, config.delta_t_windows)) {
        std::vector<SampleRecord> refresh;
        for (const auto& past : pending_source) {
          refresh.insert(refresh.end(), past.source_records.begin(), past.source_records.end());
        }
        refresh.insert(refresh.end(), current.source_records.begin(), current.source_records.end());
        source_phase(state, config, world, refresh, config.source_refresh_epochs, state.source_training_phases,
                     cache);
        pending_source.clear();
      } else {
        WindowData kept;
        kept.source_records = current.source_records;
        pending_source.push_back(std::move(kept));
      }
    }

    TrainingStream stream = build_training_stream(current, config.sample_mode, config.gst, world.config.num_users,
                                                  world.config.num_items);
    WindowLosses losses;
    double w_da_sum = 0.0;
    std::size_t w_da_count = 0;
    double gate_sum = 0.0;
    std::size_t gate_count = 0;
    for (std::size_t epoch = 0; epoch < config.target_epochs; ++epoch) {
      const auto batches = make_batches(stream, config.batch_size, stream_seed(config.seed, kTagShuffle, w * 1000 + epoch));
      for (const auto& chunk : batches) {
        Batch batch = make_batch(world, chunk);
        StepReport r = train_step(state, config, batch, stream.use_discriminator);
        losses.l_y += r.losses.l_y;
        losses.l_di += r.losses.l_di;
        losses.l_da += r.losses.l_da;
        for (std::size_t i = 0; i < batch.size; ++i) {
          if (batch.domains[i] == Domain::source) {
            w_da_sum += r.losses.w_da[i];
            ++w_da_count;
          }
        }
        for (double g : r.gate_values) gate_sum += g;
        gate_count += r.gate_values.size();
        ++losses.steps;
      }
    }
    if (losses.steps > 0) {
      const double steps = static_cast<double>(losses.steps);
      losses.l_y /= steps;
      losses.l_di /= steps;
      losses.l_da /= steps;
    }
    losses.mean_w_da = w_da_count ? w_da_sum / static_cast<double>(w_da_count) : 1.0;
    losses.mean_gate = gate_count ? gate_sum / static_cast<double>(gate_count) : 0.0;

    if (is_checkpoint(w, config.delta_t_windows)) {
      const WindowData next = sample_window(world, static_cast<std::uint32_t>(w + 1));
      CheckpointResult res;
      res.label = checkpoint_label(w / config.delta_t_windows);
      res.window = static_cast<std::uint32_t>(w);
      res.auc = evaluate(world, next.target_records, [&](const Batch& b) { return predict_target(state, config, b); });
      res.source_auc = evaluate(world, next.target_records, [&](const Batch& b) {
        NoGradGuard no_grad;
        return state.source.forward(b).value();
      });
      res.losses = losses;
      res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (!config.checkpoint_dir.empty()) save_target(state, config, res.label);
      results.push_back(std::move(res));
    }
  }
  return results;
}

}  // namespace ecat
