// lapcs: command-line front end for training, sampling, reconstruction,
// evaluation and model inspection.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "lapcs/image.hpp"
#include "lapcs/metrics.hpp"
#include "lapcs/model.hpp"
#include "lapcs/runtime.hpp"
#include "lapcs/sampling.hpp"
#include "lapcs/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct TrainArgs {
  lapcs::TrainConfig config;
  fs::path out;
  fs::path resume;
};

int cmd_train(TrainArgs& args) {
  auto& c = args.config;
  if (c.checkpoint_dir.empty()) {
    const fs::path parent = args.out.parent_path();
    c.checkpoint_dir = (parent.empty() ? fs::path(".") : parent) / "checkpoints";
  }
  lapcs::Dataset data = lapcs::load_dataset(c.data_dir);
  std::optional<lapcs::Trainer> trainer;
  if (!args.resume.empty())
    trainer.emplace(c, std::move(data), lapcs::load_train_state(args.resume));
  else
    trainer.emplace(c, std::move(data));
  trainer->run();
  lapcs::save_model(trainer->state().model, args.out);
  return kExitOk;
}

lapcs::ImagePlane load_cropped(const lapcs::LapCSModel& model, const fs::path& path,
                               lapcs::ImagePlane* original = nullptr) {
  lapcs::ImagePlane img = lapcs::load_image(path);
  if (original) *original = img;
  return lapcs::crop_to_multiple(img, model.config.sampling.block_size);
}

int cmd_sample(const fs::path& model_path, const fs::path& image_path, const fs::path& out) {
  const auto model = lapcs::load_model(model_path);
  lapcs::ImagePlane original;
  const auto cropped = load_cropped(model, image_path, &original);
  lapcs::MeasurementBlob blob;
  blob.block_size = static_cast<std::uint32_t>(model.config.sampling.block_size);
  blob.orig_h = static_cast<std::uint32_t>(original.height);
  blob.orig_w = static_cast<std::uint32_t>(original.width);
  blob.grid = lapcs::measure_image(model, cropped);
  lapcs::write_lpm(blob, out);
  return kExitOk;
}

int cmd_reconstruct(const fs::path& model_path, const fs::path& meas, const fs::path& image,
                    const fs::path& out) {
  const auto model = lapcs::load_model(model_path);
  lapcs::ImagePlane result;
  if (!meas.empty()) {
    const auto blob = lapcs::read_lpm(meas);
    const auto& s = model.config.sampling;
    if (blob.block_size != s.block_size || blob.grid.measurements != s.measurements)
      throw lapcs::ShapeError(
          "measurement blob (B=" + std::to_string(blob.block_size) +
          ", n_B=" + std::to_string(blob.grid.measurements) + ") does not match model (B=" +
          std::to_string(s.block_size) + ", n_B=" + std::to_string(s.measurements) + ")");
    result = lapcs::reconstruct_measurements(model, blob.grid);
  } else {
    result = lapcs::reconstruct_image(model, load_cropped(model, image));
  }
  lapcs::save_image(result, out);
  return kExitOk;
}

int cmd_eval(const fs::path& model_path, const fs::path& data, const fs::path& csv) {
  const auto model = lapcs::load_model(model_path);
  const auto summary = lapcs::evaluate(model, data, csv);
  std::cout << "images=" << summary.records.size() << "\n"
            << "skipped=" << summary.skipped << "\n"
            << "mean_psnr_db=" << lapcs::format_metric(summary.mean_psnr) << "\n"
            << "mean_ssim=" << lapcs::format_metric(summary.mean_ssim) << "\n"
            << "mean_seconds=" << lapcs::format_metric(summary.mean_seconds) << "\n";
  return kExitOk;
}

int cmd_inspect(const fs::path& model_path) {
  const auto model = lapcs::load_model(model_path);
  std::cout << "format_version=" << lapcs::kModelFormatVersion << "\n"
            << lapcs::encode_config_text(model.config)
            << "layers=" << lapcs::layer_count(model.config) << "\n"
            << "parameters=" << lapcs::parameter_count(model) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LapCSNet block compressed sensing: train, sample, reconstruct, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();
  bool deterministic = false;
  app.add_flag("--deterministic", deterministic,
               "Single-threaded bitwise-reproducible execution");

  TrainArgs train;
  auto& tc = train.config;
  auto* train_cmd = app.add_subcommand("train", "Jointly train sampling and reconstruction");
  train_cmd->add_option("--data", tc.data_dir, "Directory of training images")
      ->required()
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--ratio", tc.ratio, "Sampling ratio M/N")->required();
  train_cmd->add_option("--d", tc.depth, "Feature convolutions per level")->required();
  train_cmd->add_option("--out", train.out, "Output model file (.lpcs)")->required();
  train_cmd->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--iters", tc.iters_per_epoch, "Iterations per epoch")
      ->capture_default_str();
  train_cmd->add_option("--batch", tc.batch_size, "Batch size")->capture_default_str();
  train_cmd->add_option("--lr0", tc.lr0, "Initial learning rate")->capture_default_str();
  train_cmd->add_option("--lr-halving", tc.lr_halving_period, "Epochs per learning-rate halving")
      ->capture_default_str();
  train_cmd->add_option("--patch", tc.patch, "Training patch side")->capture_default_str();
  train_cmd->add_option("--block", tc.block_size, "Block size B")->capture_default_str();
  train_cmd->add_option("--seed", tc.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--checkpoint-dir", tc.checkpoint_dir,
                        "Checkpoint directory (default: <out dir>/checkpoints)");
  train_cmd->add_option("--log", tc.log_path, "Also append log lines to this file");
  train_cmd->add_option("--log-interval", tc.log_interval, "Iterations between log lines")
      ->capture_default_str();
  train_cmd->add_flag("--pixel-mean", tc.pixel_mean, "Average the penalty over pixels");
  train_cmd->add_option("--resume", train.resume, "Resume from an epoch checkpoint")
      ->check(CLI::ExistingFile);

  fs::path model_path, image_path, meas_path, out_path, data_dir, csv_path;
  auto* sample_cmd = app.add_subcommand("sample", "Write block measurements of an image");
  sample_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--image", image_path)->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--out", out_path, "Measurement blob (.lpm)")->required();

  auto* recon_cmd = app.add_subcommand("reconstruct", "Reconstruct an image");
  recon_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  auto* meas_opt = recon_cmd->add_option("--meas", meas_path)->check(CLI::ExistingFile);
  auto* image_opt = recon_cmd->add_option("--image", image_path)->check(CLI::ExistingFile);
  meas_opt->excludes(image_opt);
  recon_cmd->add_option("--out", out_path, "Output image (.pgm or .png)")->required();

  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over a directory of images");
  eval_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_dir)->required();
  eval_cmd->add_option("--csv", csv_path)->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "Print model configuration");
  inspect_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
    if (recon_cmd->parsed() && meas_path.empty() && image_path.empty())
      throw CLI::RequiredError("reconstruct needs --meas or --image");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    lapcs::configure_threads(deterministic);
    tc.deterministic = deterministic;
    if (train_cmd->parsed()) return cmd_train(train);
    if (sample_cmd->parsed()) return cmd_sample(model_path, image_path, out_path);
    if (recon_cmd->parsed()) return cmd_reconstruct(model_path, meas_path, image_path, out_path);
    if (eval_cmd->parsed()) return cmd_eval(model_path, data_dir, csv_path);
    if (inspect_cmd->parsed()) return cmd_inspect(model_path);
  } catch (const lapcs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
