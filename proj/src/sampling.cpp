#include "lapcs/sampling.hpp"

#include <cmath>
#include <string>

#include "lapcs/binary_io.hpp"
#include "lapcs/ops.hpp"

namespace lapcs {

std::size_t measurement_count(double ratio, std::size_t block_size) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError("sampling ratio must lie in (0, 1), got " + std::to_string(ratio));
  if (block_size == 0) throw ConfigError("block size must be positive");
  const double b2 = static_cast<double>(block_size * block_size);
  // Small slack so ratios such as 2/64 entered in decimal do not floor one low.
  const auto n = static_cast<std::size_t>(std::floor(ratio * b2 + 1e-9));
  if (n == 0)
    throw ConfigError("sampling ratio " + std::to_string(ratio) + " yields no measurements for " +
                      std::to_string(block_size) + "x" + std::to_string(block_size) + " blocks");
  return n;
}

std::size_t select_scale_factor(double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw ConfigError("sampling ratio must lie in (0, 1], got " + std::to_string(ratio));
  if (ratio >= 0.25)
    throw ConfigError("unsupported sampling ratio " + std::to_string(ratio) +
                      ": ratios of 0.25 or more admit no pyramid scale factor");
  std::size_t s = 2;
  while (1.0 > ratio * static_cast<double>(4 * s * s)) s *= 2;
  return s;
}

namespace {
std::size_t log2_exact(std::size_t v) {
  std::size_t l = 0;
  while ((std::size_t{1} << l) < v) ++l;
  return l;
}
}  // namespace

SamplingConfig SamplingConfig::from_ratio(double ratio, std::size_t block_size) {
  const std::size_t n = measurement_count(ratio, block_size);
  return custom(ratio, block_size, n, select_scale_factor(ratio));
}

SamplingConfig SamplingConfig::custom(double ratio, std::size_t block_size,
                                      std::size_t measurements, std::size_t scale_factor) {
  SamplingConfig c;
  c.block_size = block_size;
  c.ratio = ratio;
  c.measurements = measurements;
  c.scale_factor = scale_factor;
  c.levels = log2_exact(scale_factor);
  c.validate();
  return c;
}

void SamplingConfig::validate() const {
  if (block_size == 0) throw ConfigError("block size must be positive");
  if (measurements == 0) throw ConfigError("n_B must be at least 1");
  if (measurements > block_size * block_size)
    throw ConfigError("n_B exceeds the number of pixels per block");
  if (scale_factor < 2 || (scale_factor & (scale_factor - 1)) != 0)
    throw ConfigError("scale factor must be a power of two >= 2, got " +
                      std::to_string(scale_factor));
  if (block_size % scale_factor != 0)
    throw ConfigError("block size " + std::to_string(block_size) +
                      " is not divisible by scale factor " + std::to_string(scale_factor));
  if ((std::size_t{1} << levels) != scale_factor)
    throw ConfigError("level count does not equal log2 of the scale factor");
}

template <typename T>
Var<T> sample(const Var<T>& image, const Var<T>& sampling_weight) {
  require_rank4(image.dims(), "sample input");
  require_rank4(sampling_weight.dims(), "sampling weight");
  const std::size_t b = sampling_weight.dims()[2];
  if (sampling_weight.dims()[3] != b || sampling_weight.dims()[1] != 1)
    throw ShapeError("sampling weight must be n_B x 1 x B x B, got " +
                     to_string(sampling_weight.dims()));
  if (image.dims()[1] != 1) throw ShapeError("sample expects single-channel images");
  if (image.dims()[2] % b != 0 || image.dims()[3] % b != 0)
    throw ShapeError("image " + to_string(image.dims()) + " is not a multiple of block size " +
                     std::to_string(b));
  return conv2d(image, sampling_weight, b, 0);
}

template <typename T>
Var<T> initial_reconstruct(const Var<T>& measurements, const Var<T>& recon_weight,
                           const Var<T>& recon_bias) {
  require_rank4(recon_weight.dims(), "reconstruction weight");
  if (recon_weight.dims()[2] != 1 || recon_weight.dims()[3] != 1)
    throw ShapeError("reconstruction weight must be 1x1, got " + to_string(recon_weight.dims()));
  return reshape_concat(conv2d(measurements, recon_weight, recon_bias, 1, 0));
}

namespace {
std::size_t exact_sqrt(std::size_t v) {
  auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(v))));
  if (k * k != v)
    throw ShapeError("channel count " + std::to_string(v) + " is not a perfect square");
  return k;
}

// Index of pixel (y, x) in the N x 1 x gh*k x gw*k image for channel c of cell (u, v).
inline std::size_t concat_index(std::size_t n, std::size_t c, std::size_t u, std::size_t v,
                                std::size_t k, std::size_t gh, std::size_t gw) {
  const std::size_t y = u * k + c / k, x = v * k + c % k;
  return (n * gh * k + y) * gw * k + x;
}
}  // namespace

template <typename T>
Var<T> reshape_concat(const Var<T>& channels) {
  require_rank4(channels.dims(), "reshape_concat input");
  const auto& d = channels.dims();
  const std::size_t nb = d[0], kk = d[1], gh = d[2], gw = d[3];
  const std::size_t k = exact_sqrt(kk);
  Tensor<T> out({nb, 1, gh * k, gw * k});
  const auto& in = channels.value();
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t c = 0; c < kk; ++c)
      for (std::size_t u = 0; u < gh; ++u)
        for (std::size_t v = 0; v < gw; ++v)
          out[concat_index(n, c, u, v, k, gh, gw)] = in.at(n, c, u, v);
  return Var<T>::make_result(std::move(out), {channels}, [nb, kk, gh, gw, k](Node<T>& node) {
    auto& g = node.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < nb; ++n)
      for (std::size_t c = 0; c < kk; ++c)
        for (std::size_t u = 0; u < gh; ++u)
          for (std::size_t v = 0; v < gw; ++v)
            g.at(n, c, u, v) += node.grad[concat_index(n, c, u, v, k, gh, gw)];
  });
}

template <typename T>
Tensor<T> split_blocks(const Tensor<T>& image, std::size_t k) {
  require_rank4(image.dims(), "split_blocks input");
  const auto& d = image.dims();
  if (k == 0 || d[1] != 1 || d[2] % k != 0 || d[3] % k != 0)
    throw ShapeError("split_blocks: image " + to_string(d) + " is not tiled by " +
                     std::to_string(k) + "x" + std::to_string(k) + " blocks");
  const std::size_t nb = d[0], gh = d[2] / k, gw = d[3] / k;
  Tensor<T> out({nb, k * k, gh, gw});
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t c = 0; c < k * k; ++c)
      for (std::size_t u = 0; u < gh; ++u)
        for (std::size_t v = 0; v < gw; ++v)
          out.at(n, c, u, v) = image[concat_index(n, c, u, v, k, gh, gw)];
  return out;
}

MeasurementGrid MeasurementGrid::from_tensor(const Tensor<float>& t) {
  require_rank4(t.dims(), "measurement tensor");
  if (t.dim(0) != 1) throw ShapeError("measurement grid holds a single image");
  MeasurementGrid g;
  g.measurements = t.dim(1);
  g.grid_h = t.dim(2);
  g.grid_w = t.dim(3);
  g.data.resize(t.size());
  for (std::size_t u = 0; u < g.grid_h; ++u)
    for (std::size_t v = 0; v < g.grid_w; ++v)
      for (std::size_t c = 0; c < g.measurements; ++c)
        g.data[(u * g.grid_w + v) * g.measurements + c] = t.at(0, c, u, v);
  return g;
}

Tensor<float> MeasurementGrid::to_tensor() const {
  if (data.size() != grid_h * grid_w * measurements)
    throw ShapeError("measurement grid data length does not match its dimensions");
  Tensor<float> t({1, measurements, grid_h, grid_w});
  for (std::size_t u = 0; u < grid_h; ++u)
    for (std::size_t v = 0; v < grid_w; ++v)
      for (std::size_t c = 0; c < measurements; ++c)
        t.at(0, c, u, v) = data[(u * grid_w + v) * measurements + c];
  return t;
}

std::vector<std::uint8_t> encode_lpm(const MeasurementBlob& blob) {
  const auto& g = blob.grid;
  if (g.data.size() != g.grid_h * g.grid_w * g.measurements)
    throw ShapeError("measurement grid data length does not match its dimensions");
  binary::Writer w;
  w.raw("LPM1");
  w.u32(kLpmVersion);
  w.u32(blob.block_size);
  w.u32(static_cast<std::uint32_t>(g.measurements));
  w.u32(static_cast<std::uint32_t>(g.grid_h));
  w.u32(static_cast<std::uint32_t>(g.grid_w));
  w.u32(blob.orig_h);
  w.u32(blob.orig_w);
  for (float v : g.data) w.f32(v);
  return w.take();
}

MeasurementBlob decode_lpm(const std::vector<std::uint8_t>& bytes) {
  binary::Reader r(bytes);
  if (r.raw(4, "magic") != "LPM1") throw FormatError("bad magic: not an LPM1 measurement blob");
  const auto version = r.u32("version");
  if (version != kLpmVersion)
    throw FormatError("unsupported measurement blob version " + std::to_string(version));
  MeasurementBlob blob;
  blob.block_size = r.u32("B");
  blob.grid.measurements = r.u32("n_B");
  blob.grid.grid_h = r.u32("grid_h");
  blob.grid.grid_w = r.u32("grid_w");
  blob.orig_h = r.u32("orig_h");
  blob.orig_w = r.u32("orig_w");
  const auto& g = blob.grid;
  if (blob.block_size == 0 || g.measurements == 0 || g.grid_h == 0 || g.grid_w == 0)
    throw FormatError("measurement blob header has a zero field");
  const std::size_t count = g.grid_h * g.grid_w * g.measurements;
  if (r.remaining() != 4 * count)
    throw FormatError("measurement payload holds " + std::to_string(r.remaining()) +
                      " bytes, expected " + std::to_string(4 * count));
  blob.grid.data.resize(count);
  for (auto& v : blob.grid.data) v = r.f32("measurements");
  return blob;
}

void write_lpm(const MeasurementBlob& blob, const std::filesystem::path& path) {
  binary::write_file(path, encode_lpm(blob));
}

MeasurementBlob read_lpm(const std::filesystem::path& path) {
  return decode_lpm(binary::read_file(path));
}

#define LAPCS_INSTANTIATE_SAMPLING(T)                                                \
  template Var<T> sample(const Var<T>&, const Var<T>&);                              \
  template Var<T> initial_reconstruct(const Var<T>&, const Var<T>&, const Var<T>&); \
  template Var<T> reshape_concat(const Var<T>&);                                     \
  template Tensor<T> split_blocks(const Tensor<T>&, std::size_t);

LAPCS_INSTANTIATE_SAMPLING(float)
LAPCS_INSTANTIATE_SAMPLING(double)

}  // namespace lapcs
