#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lapcs/image.hpp"
#include "lapcs/model.hpp"
#include "lapcs/optim.hpp"

namespace lapcs {

struct TrainConfig {
  double ratio = 0.1;
  std::size_t depth = 2;
  std::size_t block_size = kDefaultBlockSize;
  std::size_t batch_size = 64;
  std::size_t patch = kDefaultPatch;
  std::size_t epochs = 200;
  std::size_t iters_per_epoch = 1000;
  double lr0 = 1e-6;
  std::size_t lr_halving_period = 50;  // epochs
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double eps = 1e-3;
  bool pixel_mean = false;  // average rather than sum the penalty over pixels
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::filesystem::path data_dir;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path log_path;        // empty: stdout only
  std::size_t log_interval = 100;
  bool quiet = false;  // suppress stdout log lines

  void validate(const ModelConfig& model) const;
};

// Images loaded from a directory of .pgm/.png files, sorted by file name.
struct Dataset {
  std::vector<std::string> names;
  std::vector<ImagePlane> images;

  bool empty() const { return images.empty(); }
  std::size_t size() const { return images.size(); }
};

// Unreadable files are skipped with a warning on stderr.
Dataset load_dataset(const std::filesystem::path& dir);

// Ground truth at every level, coarsest first: y_l = bicubic(y_L, patch / 2^(L-l)).
std::vector<ImagePlane> make_pyramid(const ImagePlane& patch, std::size_t levels);

template <typename T>
struct Batch {
  Tensor<T> input;                 // N x 1 x patch x patch
  std::vector<Tensor<T>> targets;  // per level, N x 1 x h_l x w_l
};

// Draws images uniformly with replacement, augments each one, and builds the
// pyramid targets. Images too small for a patch are redrawn.
Batch<float> make_batch(const Dataset& dataset, Rng& rng, const TrainConfig& config,
                        std::size_t levels);

template <typename T>
Batch<T> batch_from_patches(const std::vector<ImagePlane>& patches, std::size_t levels);

// (1/N) sum_i sum_l rho(y_hat_l - y_l), penalty summed (or averaged) over pixels.
template <typename T>
Var<T> pyramid_loss(const std::vector<Var<T>>& outputs, const std::vector<Tensor<T>>& targets,
                    T eps = T(1e-3), bool pixel_mean = false);

// lr0 * 2^-floor(epoch / halving_period)
double lr_at(std::size_t epoch, const TrainConfig& config);

struct TrainState {
  LapCSModel model;
  std::uint64_t step = 0;  // completed optimization steps
  double loss_ema = 0.0;
  bool ema_initialized = false;
};

struct StepReport {
  std::size_t epoch = 0;
  std::size_t iter = 0;  // 1-based within the epoch
  double lr = 0.0;
  double loss = 0.0;
  double loss_ema = 0.0;
};

// Drives the joint optimization of sampling and reconstruction parameters.
class Trainer {
 public:
  Trainer(TrainConfig config, Dataset dataset);
  Trainer(TrainConfig config, Dataset dataset, TrainState resume_from);

  // One forward/backward/update on the batch for the current step.
  StepReport step();
  // Runs to config.epochs, checkpointing after each epoch and logging every
  // log_interval iterations.
  void run(const std::function<void(const StepReport&)>& on_step = {});

  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t total_steps() const {
    return static_cast<std::uint64_t>(config_.epochs) * config_.iters_per_epoch;
  }

 private:
  void write_checkpoint(std::size_t epoch) const;
  void log_line(const StepReport& r);

  TrainConfig config_;
  Dataset dataset_;
  TrainState state_;
};

static constexpr double kLossEmaDecay = 0.98;

// Checkpoint path for a completed epoch: <dir>/epoch{N}.lpcs.
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch);

// Optimizer state stored next to a checkpoint (<checkpoint>.state): step,
// loss EMA and the momentum buffers in canonical parameter order.
void save_train_state(const TrainState& state, const std::filesystem::path& checkpoint);
TrainState load_train_state(const std::filesystem::path& checkpoint);

LapCSModel train(const TrainConfig& config);

}  // namespace lapcs
