#pragma once

// Warm-up, windowed continual training of the source and target models, the
// sample-transfer settings and the adaptive-transfer ablations.
//
// One training step runs, in this order:
//   1. S forward (no graph)
//   2. T sequence encoding, then a fusion-free auxiliary head pass whose
//      prediction entropy feeds the gate (no graph)
//   3. adapter over stop(e_t), gate, fusion
//   4. T head over the fused representation
//   5. L_y, L_di, L_da and their composition
//   6. one backward pass
//   7. three Adagrad updates: T backbone, adapter+gate, discriminator

#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "ecat/adagrad.hpp"
#include "ecat/datagen.hpp"
#include "ecat/graph.hpp"
#include "ecat/losses.hpp"
#include "ecat/models.hpp"

namespace ecat {

enum class TransferMode { one_time, continual };
enum class SampleMode { only_target, merge_all, gst_only, gst_and_da };
/// gated: learned gate; fixed_mix: constant 0.5 mix (gate ablation);
/// off: no fusion at all (plain target model).
enum class FusionMode { gated, fixed_mix, off };

const char* to_string(TransferMode m);
const char* to_string(SampleMode m);
const char* to_string(FusionMode m);
TransferMode parse_transfer_mode(const std::string& s);
SampleMode parse_sample_mode(const std::string& s);
FusionMode parse_fusion_mode(const std::string& s);

struct TrainConfig {
  DataConfig data;
  GstConfig gst;
  ModelConfig model;
  LossWeights weights;

  double learning_rate = 0.01;
  double accumulator_decay = 0.9999;
  double adagrad_epsilon = 1e-8;
  double initial_accumulator = 0.0;
  std::size_t batch_size = 256;

  /// Number of target training windows; checkpoints fall every
  /// delta_t_windows windows starting at window 0.
  std::size_t window_count = 5;
  std::size_t delta_t_windows = 2;
  TransferMode transfer_mode = TransferMode::continual;
  SampleMode sample_mode = SampleMode::gst_and_da;
  bool disable_gate = false;
  bool disable_intensity = false;
  /// Drops fusion entirely; used for the plain-model equivalence check.
  bool disable_fusion = false;

  std::size_t source_pretrain_epochs = 2;
  std::size_t source_refresh_epochs = 1;
  std::size_t target_epochs = 1;

  std::uint64_t seed = 1;
  /// When non-empty, T's parameters are saved here at every checkpoint.
  std::string checkpoint_dir;

  FusionMode fusion_mode() const;
  void validate() const;
};

/// Loss statistics averaged over the steps of one window.
struct WindowLosses {
  double l_y = 0.0;
  double l_di = 0.0;
  double l_da = 0.0;
  double mean_gate = 0.0;
  double mean_w_da = 0.0;
  std::size_t steps = 0;
};

struct CheckpointResult {
  std::string label;  // "t", "t+dt", "t+2dt", ...
  std::uint32_t window = 0;
  double auc = 0.0;
  /// S evaluated on the same held-out records (diagnostic).
  double source_auc = 0.0;
  WindowLosses losses;
  double wall_seconds = 0.0;
};

/// Everything the trainer owns for one experiment.
struct TrainState {
  TrainState(const TrainConfig& config, const World& world);

  CtrModel target;
  CtrModel source;
  Adapter adapter;
  Gate gate;
  Discriminator discriminator;
  Adagrad target_opt;
  Adagrad transfer_opt;  // adapter + gate
  Adagrad disc_opt;
  Adagrad source_opt;
  std::uint32_t window = 0;
  std::size_t source_training_phases = 0;
};

/// Copies every S parameter into T. Throws ContractError on a shape mismatch.
void warm_up_from_source(CtrModel& target, const CtrModel& source);

/// Plain BCE training of S over `records` for `epochs`, deterministic in
/// `shuffle_seed`. Returns the mean loss of each epoch.
std::vector<double> train_source_window(CtrModel& source, Adagrad& optimizer, const World& world,
                                        std::span<const SampleRecord> records, std::size_t epochs,
                                        std::size_t batch_size, std::uint64_t shuffle_seed);

/// One window's training stream: target records and the admitted source
/// records.
struct TrainingStream {
  std::vector<const SampleRecord*> records;
  std::size_t target_count = 0;
  std::size_t source_count = 0;
  /// Whether transferred records are weighted by the live discriminator.
  bool use_discriminator = false;
};

TrainingStream build_training_stream(const WindowData& window, SampleMode mode, const GstConfig& gst,
                                     std::size_t num_users, std::size_t num_items);

/// Deterministic batch order for one epoch.
std::vector<std::vector<const SampleRecord*>> make_batches(const TrainingStream& stream, std::size_t batch_size,
                                                           std::uint64_t shuffle_seed);

struct StepReport {
  BatchLossBreakdown losses;
  std::vector<double> gate_values;
};

/// Executes one optimisation step. Throws NumericError with the loss
/// breakdown on a non-finite loss.
StepReport train_step(TrainState& state, const TrainConfig& config, const Batch& batch, bool use_discriminator);

/// Inference through the full target path (adapter and gate included unless
/// fusion is off).
Tensor predict_target(const TrainState& state, const TrainConfig& config, const Batch& batch);

/// Builds the initial state: S pretrained on window 0's source data, T warmed
/// up from S, fresh transfer components.
TrainState initialise(const TrainConfig& config, const World& world, const WindowData& window0);

/// S's parameters and optimizer state after each training phase. S never depends
/// on T-side settings (sample mode, fusion, loss weights, GST), so runs that
/// share the S-relevant part of their config can share one trajectory.
class SourceCache {
 public:
  /// Key over every setting that influences S's training.
  static std::string key(const TrainConfig& config);
  bool lookup(const std::string& key, std::size_t phase, std::vector<Tensor>& values) const;
  void store(const std::string& key, std::size_t phase, std::vector<Tensor> values);
  /// Number of phases stored under `key`.
  std::size_t phases(const std::string& key) const;

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::size_t>, std::vector<Tensor>> snapshots_;
};

/// Runs the windowed schedule and evaluates on the next window's target
/// records at every checkpoint.
std::vector<CheckpointResult> run_experiment(const TrainConfig& config, SourceCache* cache = nullptr);

std::string checkpoint_label(std::size_t index);

}  // namespace ecat
