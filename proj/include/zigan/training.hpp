#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zigan/glyph_data.hpp"
#include "zigan/losses.hpp"
#include "zigan/networks.hpp"

namespace zigan {

enum class KernelPolicy { Median, Fixed };

struct TrainConfig {
  int epochs = 1500;
  double lr0 = 3e-4;
  int halve_every = 500;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 8;
  int resolution = 256;
  int shots = 100;
  std::uint64_t seed = 0;
  LossWeights weights;
  KernelPolicy kernel_policy = KernelPolicy::Median;
  std::vector<double> kernel_sigmas;  // used when kernel_policy == Fixed
  MmdEstimator estimator = MmdEstimator::Biased;
  int width_divisor = 1;
  bool skip_connections = true;
  /// Adds a shallower local discriminator next to each global one.
  bool local_global = false;
  int checkpoint_every = 100;

  /// Throws Error(Config) on any invalid field.
  void validate() const;

  /// key=value form shared with the command-line config file.
  std::map<std::string, std::string> to_map() const;
  /// Applies recognized keys; returns the keys it did not recognize.
  std::vector<std::string> apply(const std::map<std::string, std::string>& values);
  std::string serialize() const;
  std::uint64_t hash() const;

  GeneratorOptions generator_options() const { return {resolution, width_divisor, skip_connections}; }
};

/// lr0 · 0.5^floor(epoch / halve_every)
double lr_at(const TrainConfig& config, int epoch);

/// Adam with PyTorch's update rule, holding its moments explicitly so they
/// can be checkpointed and inspected.
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, double beta1, double beta2, double eps = 1e-8);

  void zero_grad();
  /// Applies one update. Throws NonFiniteLoss (leaving parameters untouched)
  /// if any gradient is non-finite.
  void step(double lr);

  std::vector<torch::Tensor>& params() { return params_; }
  std::vector<torch::Tensor>& first_moments() { return m_; }
  std::vector<torch::Tensor>& second_moments() { return v_; }
  int64_t steps() const { return steps_; }
  void set_steps(int64_t s) { steps_ = s; }
  double last_lr() const { return last_lr_; }

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> m_;
  std::vector<torch::Tensor> v_;
  double beta1_, beta2_, eps_;
  int64_t steps_ = 0;
  double last_lr_ = 0.0;
};

/// The six networks: E_s/G_s (source→target), E_t/G_t (target→source) and
/// the discriminators of each domain (one global, optionally one local).
struct ZiGanModel {
  Generator gen_s{nullptr};
  Generator gen_t{nullptr};
  std::vector<Discriminator> disc_t;
  std::vector<Discriminator> disc_s;

  static ZiGanModel create(const TrainConfig& config);

  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;
  /// Parameters then buffers, prefixed by network (gen_s., disc_t0., ...).
  std::vector<std::pair<std::string, torch::Tensor>> named_state() const;
  std::vector<std::string> generator_parameter_names() const;
  std::vector<std::string> discriminator_parameter_names() const;
  void train(bool on);
};

enum class BatchKind { Paired, Unpaired };

/// Indices of one batch. Paired: both index train pairs (same items).
/// Unpaired: sources index the pool, targets index train pairs.
struct BatchPlan {
  BatchKind kind = BatchKind::Paired;
  std::vector<std::size_t> sources;
  std::vector<std::size_t> targets;
};

/// Strictly alternating paired/unpaired batches, reshuffled per epoch from
/// (seed, epoch). Each epoch has ceil(train/batch) batches of each kind.
class BatchScheduler {
 public:
  BatchScheduler(std::size_t train_size, std::size_t pool_size, int batch_size, std::uint64_t seed);

  int steps_per_epoch() const { return 2 * paired_per_epoch_; }
  std::vector<BatchPlan> epoch(int epoch) const;

 private:
  std::size_t train_size_, pool_size_;
  int batch_size_;
  std::uint64_t seed_;
  int paired_per_epoch_;
};

struct TrainingBatch {
  BatchKind kind = BatchKind::Paired;
  torch::Tensor source;  // x_p or x_r, N×3×H×W
  torch::Tensor target;  // y (aligned with source when paired)
};

/// Train pairs in memory plus the unpaired pool. The pool either arrives
/// rendered or is rendered on first use from a font.
class TrainingData {
 public:
  TrainingData(std::vector<PairedSample> train, std::vector<GlyphImage> pool);
  TrainingData(std::vector<PairedSample> train, const std::filesystem::path& font, std::vector<char32_t> pool,
               int canvas);

  std::size_t train_size() const { return train_.size(); }
  std::size_t pool_size() const { return pool_size_; }
  const std::vector<PairedSample>& train() const { return train_; }

  TrainingBatch materialize(const BatchPlan& plan);

 private:
  torch::Tensor pool_image(std::size_t i);

  std::vector<PairedSample> train_;
  std::vector<torch::Tensor> pool_cache_;  // 3×H×W float, or H×W uint8 filled lazily from a font
  std::optional<FontFace> font_;
  std::vector<char32_t> pool_codepoints_;
  std::size_t pool_size_ = 0;
  int canvas_ = 0;
};

/// Forward products shared by both optimization phases of a step.
struct Translation {
  LatentCode latent_x;  // E_s(x)
  LatentCode latent_y;  // E_t(y)
  torch::Tensor fake_y;  // G_s(E_s(x))
  torch::Tensor fake_x;  // G_t(E_t(y))
};

struct Checkpoint;

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  /// Phase 1 (discriminators, generators frozen) then phase 2 (encoders and
  /// decoders, discriminators frozen) at lr_at(epoch()).
  LossReport train_step(const TrainingBatch& batch);

  Translation translate(const TrainingBatch& batch);
  double discriminator_phase(const TrainingBatch& batch, const Translation& t);
  LossReport generator_phase(const TrainingBatch& batch, const Translation& t);

  int epoch() const { return epoch_; }
  void set_epoch(int e) { epoch_ = e; }
  long global_step() const { return global_step_; }

  ZiGanModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  Adam& discriminator_optimizer() { return opt_d_; }
  Adam& generator_optimizer() { return opt_g_; }
  at::Generator& dropout_rng() { return dropout_rng_; }

  Checkpoint snapshot();
  /// Throws CorruptCheckpoint if any tensor is missing or mis-shaped.
  void restore(const Checkpoint& checkpoint);

 private:
  KernelBank kernel_bank(const torch::Tensor& real, const torch::Tensor& fake) const;

  TrainConfig config_;
  ZiGanModel model_;
  Adam opt_d_;
  Adam opt_g_;
  at::Generator dropout_rng_;
  int epoch_ = 0;
  long global_step_ = 0;
};

struct Checkpoint {
  TrainConfig config;
  int epoch = 0;  // epochs completed
  long global_step = 0;
  std::vector<std::pair<std::string, torch::Tensor>> model;
  std::vector<std::pair<std::string, torch::Tensor>> optimizer;
  int64_t generator_steps = 0;
  int64_t discriminator_steps = 0;
  torch::Tensor rng_state;
};

/// Directory layout: manifest.tsv, params/*.bin, optimizer/*.bin,
/// optimizer/state.txt, rng.bin, meta.txt. Written to a sibling temp
/// directory and renamed into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Rebuilds the generators in eval mode from a checkpoint.
ZiGanModel model_from_checkpoint(const Checkpoint& checkpoint);

struct RunOptions {
  std::filesystem::path checkpoint_dir;
  std::filesystem::path loss_log;  // CSV; empty to skip
  std::optional<std::filesystem::path> resume_from;
  std::function<void(int epoch, const LossReport& last, double mean_total)> on_epoch;
};

struct TrainingRun {
  Checkpoint final_checkpoint;
  std::vector<LossReport> log;  // steps run by this call
  std::filesystem::path final_dir;
};

TrainingRun run_training(const TrainConfig& config, TrainingData& data, const RunOptions& options);

/// Name of the checkpoint directory written after `epoch` epochs.
std::string checkpoint_name(int epoch);

}  // namespace zigan
