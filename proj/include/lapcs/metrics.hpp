#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lapcs/image.hpp"
#include "lapcs/model.hpp"

namespace lapcs {

// -10 log10(MSE) for samples in [0, 1]; +infinity for identical planes.
double psnr(const ImagePlane& a, const ImagePlane& b);

// Mean SSIM over every fully contained 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1. Needs both sides >= 11.
double ssim(const ImagePlane& a, const ImagePlane& b);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

struct MetricsRecord {
  std::string image_name;
  double ratio = 0.0;
  double psnr = 0.0;  // dB
  double ssim = 0.0;
  double seconds = 0.0;  // reconstruction wall time
};

struct EvalSummary {
  std::vector<MetricsRecord> records;  // dataset order
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_seconds = 0.0;
  std::size_t skipped = 0;
};

// Maps a ground-truth plane (already cropped to whole blocks) to its
// reconstruction.
using Reconstructor = std::function<ImagePlane(const ImagePlane&)>;

// For each image in the directory (sorted by name): load, crop top-left to
// multiples of block_size, reconstruct, compare. Writes the CSV when csv_path
// is non-empty. Throws DataError when no image could be evaluated.
EvalSummary evaluate(const Reconstructor& reconstruct, std::size_t block_size, double ratio,
                     const std::filesystem::path& dataset_dir,
                     const std::filesystem::path& csv_path);

EvalSummary evaluate(const LapCSModel& model, const std::filesystem::path& dataset_dir,
                     const std::filesystem::path& csv_path);

// Recomputes the means from the records.
void summarize(EvalSummary& summary);

std::string format_metric(double v);
std::string metrics_csv(const EvalSummary& summary);

}  // namespace lapcs
