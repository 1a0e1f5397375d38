#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "lapcs/random.hpp"
#include "lapcs/tensor.hpp"

namespace lapcs {

// Single-channel image with luminance samples in [0, 1], row-major.
struct ImagePlane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> samples;

  ImagePlane() = default;
  ImagePlane(std::size_t w, std::size_t h, double fill = 0.0);
  ImagePlane(std::size_t w, std::size_t h, std::vector<double> values);

  double& at(std::size_t x, std::size_t y) { return samples[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return samples[y * width + x]; }

  bool operator==(const ImagePlane&) const = default;
};

// Reads 8-bit binary PGM (P5) or 8-bit PNG. RGB is reduced to luminance
// with Y = 0.299 R + 0.587 G + 0.114 B; values are divided by 255.
ImagePlane load_image(const std::filesystem::path& path);

// Clamps to [0, 1], quantizes with round(v * 255) (halves round up) and
// writes PGM or PNG according to the extension.
void save_image(const ImagePlane& plane, const std::filesystem::path& path);

// True for .pgm and .png (any case).
bool has_image_extension(const std::filesystem::path& path);

std::uint8_t quantize_sample(double v);

// Catmull-Rom (a = -0.5) resampling, kernel widened by the reduction factor
// when downscaling, clamped edges, output clamped to [0, 1].
ImagePlane bicubic_resize(const ImagePlane& plane, std::size_t out_w, std::size_t out_h);

double cubic_kernel(double x);

// Quarter turn clockwise.
ImagePlane rotate90(const ImagePlane& plane);
ImagePlane rotate(const ImagePlane& plane, int quarter_turns);
ImagePlane flip_horizontal(const ImagePlane& plane);
ImagePlane flip_vertical(const ImagePlane& plane);
ImagePlane crop(const ImagePlane& plane, std::size_t x0, std::size_t y0, std::size_t w,
                std::size_t h);
// Top-left crop to the largest multiple of `block` in each direction.
ImagePlane crop_to_multiple(const ImagePlane& plane, std::size_t block);

struct AugmentParams {
  double scale = 1.0;
  int quarter_turns = 0;  // 0..3
  bool hflip = false;
  bool vflip = false;
};

inline constexpr double kMinAugmentScale = 0.75;
inline constexpr double kMaxAugmentScale = 1.2;
inline constexpr std::size_t kDefaultPatch = 128;

AugmentParams draw_augment_params(Rng& rng);

// Scale, rotate, flip, then take a uniformly placed patch x patch crop.
// Throws DataError when the transformed image is smaller than the patch.
ImagePlane apply_augment(const ImagePlane& plane, const AugmentParams& params, Rng& crop_rng,
                         std::size_t patch = kDefaultPatch);

ImagePlane augment(const ImagePlane& plane, Rng& rng, std::size_t patch = kDefaultPatch);

// Packs equally sized planes into an N x 1 x H x W tensor.
template <typename T>
Tensor<T> planes_to_tensor(const std::vector<ImagePlane>& planes);

// Extracts sample n of an N x 1 x H x W tensor, clamped to [0, 1].
template <typename T>
ImagePlane plane_from_tensor(const Tensor<T>& t, std::size_t n = 0);

}  // namespace lapcs
