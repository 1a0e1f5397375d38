#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lapcs/autograd.hpp"
#include "lapcs/image.hpp"
#include "lapcs/sampling.hpp"

namespace lapcs {

inline constexpr std::size_t kFeatureChannels = 64;
inline constexpr double kLeakySlope = 0.2;
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelConfig {
  SamplingConfig sampling;
  std::size_t depth = 2;  // d: feature convolutions per level
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename T>
struct ConvParams {
  Parameter<T> weight;
  Parameter<T> bias;
};

// One pyramid level: d 3x3 feature convs and a 2x feature upsampler on the
// residual branch, a 3x3 conv producing the residual image, and a 2x
// upsampler carrying the previous estimate on the integration branch.
template <typename T>
struct LevelParams {
  std::vector<ConvParams<T>> feature_convs;
  ConvParams<T> feature_upsampler;
  ConvParams<T> residual_conv;
  ConvParams<T> integration_upsampler;
};

template <typename T>
class BasicModel {
 public:
  ModelConfig config;
  Parameter<T> sampling_weight;  // n_B x 1 x B x B, no bias
  ConvParams<T> recon;           // (B/S)^2 x n_B x 1 x 1
  std::vector<LevelParams<T>> levels;

  // Canonical order: sampling, recon, then per level feature convs,
  // feature upsampler, residual conv, integration upsampler (weight before bias).
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  template <typename U>
  BasicModel<U> cast() const;
};

using LapCSModel = BasicModel<float>;

// Zero-valued model with the canonical parameter names and shapes.
template <typename T>
BasicModel<T> make_model_skeleton(const ModelConfig& config);

// He-normal convs (slope 0.2), zero biases, bilinear integration upsamplers,
// Gaussian sampling weights with standard deviation 1/B. Deterministic in
// config.seed.
template <typename T>
BasicModel<T> build_model(const ModelConfig& config);

LapCSModel build_model(double ratio, std::size_t depth, std::uint64_t seed,
                       std::size_t block_size = kDefaultBlockSize);

// Level estimates y_1..y_L; y_L has the input's spatial size.
template <typename T>
std::vector<Var<T>> forward(const BasicModel<T>& model, const Var<T>& image);

// Same pipeline starting from an N x n_B x gh x gw measurement tensor.
template <typename T>
std::vector<Var<T>> forward_from_measurements(const BasicModel<T>& model,
                                              const Var<T>& measurements);

// Inference on one plane whose sides are multiples of B; output clamped to [0, 1].
ImagePlane reconstruct_image(const LapCSModel& model, const ImagePlane& image);
ImagePlane reconstruct_measurements(const LapCSModel& model, const MeasurementGrid& grid);
// Measurements of one plane whose sides are multiples of B.
MeasurementGrid measure_image(const LapCSModel& model, const ImagePlane& image);

// 2 + (d + 3) * log2(S).
std::size_t layer_count(double ratio, std::size_t depth);
std::size_t layer_count(const ModelConfig& config);

// Closed-form number of scalar parameters.
std::size_t parameter_count(const ModelConfig& config);

template <typename T>
std::size_t parameter_count(const BasicModel<T>& model);

// Fixed 4x4 kernel of 2x bilinear interpolation under stride 2, pad 1.
std::vector<double> bilinear_upsample_kernel();

std::string encode_config_text(const ModelConfig& config);
ModelConfig decode_config_text(const std::string& text);

std::vector<std::uint8_t> encode_model(const LapCSModel& model);
LapCSModel decode_model(const std::vector<std::uint8_t>& bytes);
void save_model(const LapCSModel& model, const std::filesystem::path& path);
LapCSModel load_model(const std::filesystem::path& path);

}  // namespace lapcs
