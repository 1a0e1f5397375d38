#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lapcs/autograd.hpp"

namespace lapcs {

inline constexpr std::size_t kDefaultBlockSize = 32;

// floor(ratio * B^2). Throws ConfigError when that is zero.
std::size_t measurement_count(double ratio, std::size_t block_size);

// Largest power of two S >= 2 with 1 / S^2 > ratio. Ratios of 0.25 and above
// admit no such S and are rejected with ConfigError.
std::size_t select_scale_factor(double ratio);

struct SamplingConfig {
  std::size_t block_size = kDefaultBlockSize;
  double ratio = 0.1;
  std::size_t measurements = 0;  // n_B
  std::size_t scale_factor = 0;  // S
  std::size_t levels = 0;        // log2(S)

  // Derives n_B and S from the ratio.
  static SamplingConfig from_ratio(double ratio, std::size_t block_size = kDefaultBlockSize);
  // Explicit n_B and S, e.g. for reduced test models.
  static SamplingConfig custom(double ratio, std::size_t block_size, std::size_t measurements,
                               std::size_t scale_factor);

  // Side length of the initially reconstructed block, B / S.
  std::size_t reduced_block() const { return block_size / scale_factor; }
  void validate() const;
};

// Strided B x B convolution without bias: one n_B-vector per block.
// Input H and W must be multiples of B.
template <typename T>
Var<T> sample(const Var<T>& image, const Var<T>& sampling_weight);

// 1x1 convolution to (B/S)^2 channels followed by reshape_concat.
template <typename T>
Var<T> initial_reconstruct(const Var<T>& measurements, const Var<T>& recon_weight,
                           const Var<T>& recon_bias);

// N x k^2 x gh x gw -> N x 1 x (gh*k) x (gw*k): channel c of cell (u, v) lands
// on pixel (u*k + c/k, v*k + c%k).
template <typename T>
Var<T> reshape_concat(const Var<T>& channels);

// Inverse permutation of reshape_concat for a given block side k.
template <typename T>
Tensor<T> split_blocks(const Tensor<T>& image, std::size_t k);

// Per-block measurement vectors of one image.
struct MeasurementGrid {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t measurements = 0;
  std::vector<float> data;  // block-row-major, channels fastest

  static MeasurementGrid from_tensor(const Tensor<float>& t);  // [1, n_B, gh, gw]
  Tensor<float> to_tensor() const;
};

// Contents of an ".lpm" measurement blob.
struct MeasurementBlob {
  std::uint32_t block_size = 0;
  std::uint32_t orig_h = 0;
  std::uint32_t orig_w = 0;
  MeasurementGrid grid;
};

inline constexpr std::uint32_t kLpmVersion = 1;
inline constexpr std::size_t kLpmHeaderBytes = 32;

std::vector<std::uint8_t> encode_lpm(const MeasurementBlob& blob);
MeasurementBlob decode_lpm(const std::vector<std::uint8_t>& bytes);
void write_lpm(const MeasurementBlob& blob, const std::filesystem::path& path);
MeasurementBlob read_lpm(const std::filesystem::path& path);

}  // namespace lapcs
