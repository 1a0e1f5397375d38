#include "lapcs/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lapcs/binary_io.hpp"
#include "lapcs/ops.hpp"
#include "lapcs/runtime.hpp"

namespace lapcs {

void TrainConfig::validate(const ModelConfig& model) const {
  if (batch_size == 0 || epochs == 0 || iters_per_epoch == 0 || lr_halving_period == 0)
    throw ConfigError("batch size, epochs, iterations and halving period must be positive");
  if (!(lr0 > 0.0) || !(eps > 0.0) || momentum < 0.0 || weight_decay < 0.0)
    throw ConfigError("learning rate and eps must be positive; momentum and decay nonnegative");
  if (patch == 0 || patch % model.sampling.block_size != 0)
    throw ConfigError("patch size " + std::to_string(patch) + " is not a multiple of block size " +
                      std::to_string(model.sampling.block_size));
  if (log_interval == 0) throw ConfigError("log interval must be positive");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  Dataset ds;
  for (const auto& f : files) {
    try {
      ds.images.push_back(load_image(f));
      ds.names.push_back(f.filename().string());
    } catch (const IoError& e) {
      std::cerr << "warning: skipping " << e.what() << "\n";
    }
  }
  return ds;
}

std::vector<ImagePlane> make_pyramid(const ImagePlane& patch, std::size_t levels) {
  std::vector<ImagePlane> pyramid(levels);
  for (std::size_t l = 1; l <= levels; ++l) {
    const std::size_t shrink = std::size_t{1} << (levels - l);
    if (patch.width % shrink != 0 || patch.height % shrink != 0)
      throw ShapeError("patch size is not divisible by the pyramid scale");
    pyramid[l - 1] = shrink == 1 ? patch
                                 : bicubic_resize(patch, patch.width / shrink, patch.height / shrink);
  }
  return pyramid;
}

template <typename T>
Batch<T> batch_from_patches(const std::vector<ImagePlane>& patches, std::size_t levels) {
  Batch<T> batch;
  batch.input = planes_to_tensor<T>(patches);
  std::vector<std::vector<ImagePlane>> per_level(levels);
  for (const auto& p : patches) {
    auto pyramid = make_pyramid(p, levels);
    for (std::size_t l = 0; l < levels; ++l) per_level[l].push_back(std::move(pyramid[l]));
  }
  for (auto& planes : per_level) batch.targets.push_back(planes_to_tensor<T>(planes));
  return batch;
}

Batch<float> make_batch(const Dataset& dataset, Rng& rng, const TrainConfig& config,
                        std::size_t levels) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  constexpr int kMaxDraws = 1000;
  std::vector<ImagePlane> patches;
  patches.reserve(config.batch_size);
  int failures = 0;
  while (patches.size() < config.batch_size) {
    const auto& image = dataset.images[rng.below(dataset.size())];
    try {
      patches.push_back(augment(image, rng, config.patch));
    } catch (const DataError&) {
      if (++failures >= kMaxDraws)
        throw DataError("no dataset image is large enough for " + std::to_string(config.patch) +
                        "x" + std::to_string(config.patch) + " patches");
    }
  }
  return batch_from_patches<float>(patches, levels);
}

template <typename T>
Var<T> pyramid_loss(const std::vector<Var<T>>& outputs, const std::vector<Tensor<T>>& targets,
                    T eps, bool pixel_mean) {
  if (outputs.size() != targets.size() || outputs.empty())
    throw ShapeError("loss: " + std::to_string(outputs.size()) + " level outputs but " +
                     std::to_string(targets.size()) + " targets");
  Var<T> total;
  for (std::size_t l = 0; l < outputs.size(); ++l) {
    const auto& dims = outputs[l].dims();
    if (dims != targets[l].dims())
      throw ShapeError("loss: level " + std::to_string(l + 1) + " output " + to_string(dims) +
                       " does not match target " + to_string(targets[l].dims()));
    double norm = static_cast<double>(dims[0]);
    if (pixel_mean) norm *= static_cast<double>(product(dims) / dims[0]);
    Var<T> term = scale(charbonnier(outputs[l], Var<T>(targets[l]), eps), static_cast<T>(1.0 / norm));
    total = l == 0 ? term : add(total, term);
  }
  return total;
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  return std::ldexp(config.lr0, -static_cast<int>(epoch / config.lr_halving_period));
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch) {
  return dir / ("epoch" + std::to_string(epoch) + ".lpcs");
}

namespace {

constexpr std::uint32_t kStateVersion = 1;

std::filesystem::path state_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".state";
  return p;
}

ModelConfig model_config_for(const TrainConfig& c) {
  ModelConfig m;
  m.sampling = SamplingConfig::from_ratio(c.ratio, c.block_size);
  m.depth = c.depth;
  m.seed = c.seed;
  return m;
}

bool all_finite(const Tensor<float>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](float v) { return std::isfinite(v); });
}

[[noreturn]] void abort_non_finite(const LapCSModel& model, std::uint64_t step, double loss) {
  std::ostringstream msg;
  msg << "non-finite loss " << loss << " at step " << step + 1;
  for (const auto* p : model.parameters()) {
    if (!all_finite(p->value())) {
      msg << "; first non-finite parameter: " << p->name();
      throw TrainingError(msg.str());
    }
    if (p->var().has_grad() && !all_finite(p->var().grad())) {
      msg << "; first non-finite gradient: " << p->name();
      throw TrainingError(msg.str());
    }
  }
  throw TrainingError(msg.str());
}

}  // namespace

void save_train_state(const TrainState& state, const std::filesystem::path& checkpoint) {
  save_model(state.model, checkpoint);
  binary::Writer w;
  w.raw("LPST");
  w.u32(kStateVersion);
  w.u64(state.step);
  w.f64(state.loss_ema);
  w.u32(state.ema_initialized ? 1 : 0);
  const auto params = state.model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params)
    for (float v : p->momentum().values()) w.f32(v);
  binary::write_file(state_path(checkpoint), w.bytes());
}

TrainState load_train_state(const std::filesystem::path& checkpoint) {
  TrainState state;
  state.model = load_model(checkpoint);
  const auto bytes = binary::read_file(state_path(checkpoint));
  binary::Reader r(bytes);
  if (r.raw(4, "state magic") != "LPST") throw FormatError("bad magic in optimizer state file");
  if (r.u32("state version") != kStateVersion) throw FormatError("unsupported optimizer state version");
  state.step = r.u64("step");
  state.loss_ema = r.f64("loss EMA");
  state.ema_initialized = r.u32("EMA flag") != 0;
  auto params = state.model.parameters();
  if (r.u32("parameter count") != params.size())
    throw FormatError("optimizer state parameter count does not match the model");
  for (auto* p : params)
    for (auto& v : p->mutable_momentum().values()) v = r.f32(p->name() + " momentum");
  if (r.remaining() != 0) throw FormatError("trailing bytes in optimizer state file");
  return state;
}

Trainer::Trainer(TrainConfig config, Dataset dataset)
    : config_(std::move(config)), dataset_(std::move(dataset)) {
  const ModelConfig mc = model_config_for(config_);
  config_.validate(mc);
  if (dataset_.empty()) throw ConfigError("training dataset is empty");
  state_.model = build_model<float>(mc);
}

Trainer::Trainer(TrainConfig config, Dataset dataset, TrainState resume_from)
    : config_(std::move(config)), dataset_(std::move(dataset)), state_(std::move(resume_from)) {
  const ModelConfig mc = model_config_for(config_);
  config_.validate(mc);
  if (dataset_.empty()) throw ConfigError("training dataset is empty");
  const auto& have = state_.model.config;
  if (have.sampling.block_size != mc.sampling.block_size ||
      have.sampling.measurements != mc.sampling.measurements ||
      have.sampling.scale_factor != mc.sampling.scale_factor || have.depth != mc.depth)
    throw ConfigError("checkpoint configuration does not match the training configuration");
}

StepReport Trainer::step() {
  StepReport r;
  const std::uint64_t s = state_.step;
  r.epoch = static_cast<std::size_t>(s / config_.iters_per_epoch);
  r.iter = static_cast<std::size_t>(s % config_.iters_per_epoch) + 1;
  r.lr = lr_at(r.epoch, config_);

  auto& model = state_.model;
  Rng rng(config_.seed, s + 1);
  Batch<float> batch = make_batch(dataset_, rng, config_, model.config.sampling.levels);
  const auto outputs = forward(model, Var<float>(std::move(batch.input)));
  const Var<float> loss = pyramid_loss(outputs, batch.targets, static_cast<float>(config_.eps),
                                       config_.pixel_mean);
  r.loss = static_cast<double>(loss.value()[0]);
  auto params = model.parameters();
  if (!std::isfinite(r.loss)) abort_non_finite(model, s, r.loss);
  zero_grad<float>(params);
  backward(loss);
  for (const auto* p : params)
    if (!all_finite(p->var().grad())) abort_non_finite(model, s, r.loss);
  sgd_step<float>(params, {r.lr, config_.momentum, config_.weight_decay});

  state_.loss_ema = state_.ema_initialized
                        ? kLossEmaDecay * state_.loss_ema + (1.0 - kLossEmaDecay) * r.loss
                        : r.loss;
  state_.ema_initialized = true;
  state_.step = s + 1;
  r.loss_ema = state_.loss_ema;
  return r;
}

void Trainer::log_line(const StepReport& r) {
  std::ostringstream line;
  line << r.epoch + 1 << "," << r.iter << "," << r.lr << "," << r.loss_ema << "\n";
  if (!config_.quiet) std::cout << line.str() << std::flush;
  if (!config_.log_path.empty()) {
    std::ofstream log(config_.log_path, std::ios::app);
    if (!log) throw IoError(config_.log_path.string() + ": cannot open log file");
    log << line.str();
  }
}

void Trainer::write_checkpoint(std::size_t epoch) const {
  if (config_.checkpoint_dir.empty()) return;
  std::filesystem::create_directories(config_.checkpoint_dir);
  save_train_state(state_, checkpoint_path(config_.checkpoint_dir, epoch));
}

void Trainer::run(const std::function<void(const StepReport&)>& on_step) {
  configure_threads(config_.deterministic);
  while (state_.step < total_steps()) {
    const StepReport r = step();
    if (on_step) on_step(r);
    if (r.iter % config_.log_interval == 0) log_line(r);
    if (r.iter == config_.iters_per_epoch) write_checkpoint(r.epoch + 1);
  }
}

LapCSModel train(const TrainConfig& config) {
  Trainer trainer(config, load_dataset(config.data_dir));
  trainer.run();
  return trainer.state().model;
}

template Batch<float> batch_from_patches(const std::vector<ImagePlane>&, std::size_t);
template Batch<double> batch_from_patches(const std::vector<ImagePlane>&, std::size_t);
template Var<float> pyramid_loss(const std::vector<Var<float>>&, const std::vector<Tensor<float>>&,
                                 float, bool);
template Var<double> pyramid_loss(const std::vector<Var<double>>&,
                                  const std::vector<Tensor<double>>&, double, bool);

}  // namespace lapcs
