#include "lapcs/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace lapcs {

ImagePlane::ImagePlane(std::size_t w, std::size_t h, double fill)
    : width(w), height(h), samples(w * h, fill) {
  if (w == 0 || h == 0) throw ArgumentError("image dimensions must be positive");
}

ImagePlane::ImagePlane(std::size_t w, std::size_t h, std::vector<double> values)
    : width(w), height(h), samples(std::move(values)) {
  if (w == 0 || h == 0) throw ArgumentError("image dimensions must be positive");
  if (samples.size() != w * h) throw ShapeError("sample count does not match image size");
}

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

[[noreturn]] void io_fail(const std::filesystem::path& path, const std::string& reason) {
  throw IoError(path.string() + ": " + reason);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImagePlane decode_pgm(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  std::size_t pos = 2;
  auto next_token = [&]() -> std::size_t {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) io_fail(path, "malformed PGM header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (v > (1u << 24)) io_fail(path, "PGM header value out of range");
    }
    return v;
  };
  const std::size_t w = next_token();
  const std::size_t h = next_token();
  const std::size_t maxval = next_token();
  if (w == 0 || h == 0) io_fail(path, "PGM has zero size");
  if (maxval != 255) io_fail(path, "only 8-bit PGM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) io_fail(path, "malformed PGM header");
  ++pos;
  if (bytes.size() - pos < w * h) io_fail(path, "truncated PGM pixel data");
  ImagePlane plane(w, h);
  for (std::size_t i = 0; i < w * h; ++i) plane.samples[i] = bytes[pos + i] / 255.0;
  return plane;
}

ImagePlane decode_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) io_fail(path, image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    io_fail(path, msg);
  }
  ImagePlane plane(image.width, image.height);
  for (std::size_t i = 0; i < plane.samples.size(); ++i) {
    if (color) {
      const png_byte* px = &buffer[3 * i];
      plane.samples[i] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
    } else {
      plane.samples[i] = buffer[i] / 255.0;
    }
    plane.samples[i] = std::clamp(plane.samples[i], 0.0, 1.0);
  }
  return plane;
}

}  // namespace

bool has_image_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".pgm" || ext == ".png";
}

ImagePlane load_image(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  static constexpr std::array<unsigned char, 8> kPngMagic{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                                          '\n'};
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
  if (bytes.size() >= 8 && std::equal(kPngMagic.begin(), kPngMagic.end(), bytes.begin()))
    return decode_png(path);
  io_fail(path, "unsupported image format (expected binary PGM or PNG)");
}

std::uint8_t quantize_sample(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

void save_image(const ImagePlane& plane, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(plane.samples.size());
  std::transform(plane.samples.begin(), plane.samples.end(), bytes.begin(), quantize_sample);
  const std::string ext = lower_extension(path);
  if (ext == ".pgm") {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail(path, "cannot open for writing");
    out << "P5\n" << plane.width << " " << plane.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) io_fail(path, "write failed");
  } else if (ext == ".png") {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(plane.width);
    image.height = static_cast<png_uint_32>(plane.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
      io_fail(path, image.message);
  } else {
    io_fail(path, "unsupported output extension '" + ext + "' (use .pgm or .png)");
  }
}

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::size_t reference;  // source index nearest the sample center
  std::vector<std::size_t> index;
  std::vector<double> weight;  // normalized
};

std::vector<Taps> resample_taps(std::size_t in_n, std::size_t out_n) {
  const double scale = static_cast<double>(out_n) / static_cast<double>(in_n);
  const double widen = scale < 1.0 ? 1.0 / scale : 1.0;
  const double support = 2.0 * widen;
  std::vector<Taps> taps(out_n);
  const auto last = static_cast<std::ptrdiff_t>(in_n) - 1;
  for (std::size_t i = 0; i < out_n; ++i) {
    const double center = (static_cast<double>(i) + 0.5) / scale - 0.5;
    auto& t = taps[i];
    t.reference = static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(std::lround(center), 0, last));
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - support));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(center + support));
    double total = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double w = cubic_kernel((static_cast<double>(j) - center) / widen);
      if (w == 0.0) continue;
      t.index.push_back(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, last)));
      t.weight.push_back(w);
      total += w;
    }
    for (auto& w : t.weight) w /= total;
  }
  return taps;
}

// Weighted sum written as ref + sum w (v - ref) so constant rows stay exact.
template <typename Get>
double apply_taps(const Taps& t, Get get) {
  const double ref = get(t.reference);
  double acc = 0.0;
  for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * (get(t.index[k]) - ref);
  return ref + acc;
}

}  // namespace

ImagePlane bicubic_resize(const ImagePlane& plane, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) throw ArgumentError("bicubic_resize: output size must be positive");
  const auto xt = resample_taps(plane.width, out_w);
  const auto yt = resample_taps(plane.height, out_h);
  // Horizontal pass into an out_w x height buffer, then vertical.
  std::vector<double> mid(out_w * plane.height);
  for (std::size_t y = 0; y < plane.height; ++y) {
    const double* row = plane.samples.data() + y * plane.width;
    for (std::size_t x = 0; x < out_w; ++x)
      mid[y * out_w + x] = apply_taps(xt[x], [row](std::size_t i) { return row[i]; });
  }
  ImagePlane out(out_w, out_h);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      out.at(x, y) = std::clamp(
          apply_taps(yt[y], [&](std::size_t i) { return mid[i * out_w + x]; }), 0.0, 1.0);
  return out;
}

ImagePlane rotate90(const ImagePlane& plane) {
  ImagePlane out(plane.height, plane.width);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) out.at(x, y) = plane.at(y, plane.height - 1 - x);
  return out;
}

ImagePlane rotate(const ImagePlane& plane, int quarter_turns) {
  ImagePlane out = plane;
  for (int i = 0; i < ((quarter_turns % 4) + 4) % 4; ++i) out = rotate90(out);
  return out;
}

ImagePlane flip_horizontal(const ImagePlane& plane) {
  ImagePlane out = plane;
  for (std::size_t y = 0; y < plane.height; ++y) {
    auto row = out.samples.begin() + static_cast<std::ptrdiff_t>(y * plane.width);
    std::reverse(row, row + static_cast<std::ptrdiff_t>(plane.width));
  }
  return out;
}

ImagePlane flip_vertical(const ImagePlane& plane) {
  ImagePlane out(plane.width, plane.height);
  for (std::size_t y = 0; y < plane.height; ++y)
    std::copy_n(plane.samples.begin() + static_cast<std::ptrdiff_t>((plane.height - 1 - y) * plane.width),
                plane.width, out.samples.begin() + static_cast<std::ptrdiff_t>(y * plane.width));
  return out;
}

ImagePlane crop(const ImagePlane& plane, std::size_t x0, std::size_t y0, std::size_t w,
                std::size_t h) {
  if (x0 + w > plane.width || y0 + h > plane.height)
    throw ShapeError("crop window exceeds image bounds");
  ImagePlane out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(x, y) = plane.at(x0 + x, y0 + y);
  return out;
}

ImagePlane crop_to_multiple(const ImagePlane& plane, std::size_t block) {
  const std::size_t w = plane.width / block * block;
  const std::size_t h = plane.height / block * block;
  if (w == 0 || h == 0)
    throw ShapeError("image " + std::to_string(plane.width) + "x" + std::to_string(plane.height) +
                     " is smaller than one " + std::to_string(block) + "-pixel block");
  if (w == plane.width && h == plane.height) return plane;
  return crop(plane, 0, 0, w, h);
}

AugmentParams draw_augment_params(Rng& rng) {
  AugmentParams p;
  p.scale = rng.uniform(kMinAugmentScale, kMaxAugmentScale);
  p.quarter_turns = static_cast<int>(rng.below(4));
  p.hflip = rng.bernoulli(0.5);
  p.vflip = rng.bernoulli(0.5);
  return p;
}

ImagePlane apply_augment(const ImagePlane& plane, const AugmentParams& params, Rng& crop_rng,
                         std::size_t patch) {
  ImagePlane img = plane;
  if (params.scale != 1.0) {
    const auto w = static_cast<std::size_t>(std::lround(plane.width * params.scale));
    const auto h = static_cast<std::size_t>(std::lround(plane.height * params.scale));
    if (w < patch || h < patch)
      throw DataError("image too small for a " + std::to_string(patch) + "x" +
                      std::to_string(patch) + " patch after scaling");
    img = bicubic_resize(plane, w, h);
  }
  img = rotate(img, params.quarter_turns);
  if (params.hflip) img = flip_horizontal(img);
  if (params.vflip) img = flip_vertical(img);
  if (img.width < patch || img.height < patch)
    throw DataError("image too small for a " + std::to_string(patch) + "x" +
                    std::to_string(patch) + " patch");
  const std::size_t x0 = crop_rng.below(img.width - patch + 1);
  const std::size_t y0 = crop_rng.below(img.height - patch + 1);
  return crop(img, x0, y0, patch, patch);
}

ImagePlane augment(const ImagePlane& plane, Rng& rng, std::size_t patch) {
  const AugmentParams p = draw_augment_params(rng);
  return apply_augment(plane, p, rng, patch);
}

template <typename T>
Tensor<T> planes_to_tensor(const std::vector<ImagePlane>& planes) {
  if (planes.empty()) throw ArgumentError("planes_to_tensor: no planes");
  const std::size_t w = planes.front().width, h = planes.front().height;
  Tensor<T> t({planes.size(), 1, h, w});
  for (std::size_t n = 0; n < planes.size(); ++n) {
    if (planes[n].width != w || planes[n].height != h)
      throw ShapeError("planes_to_tensor: planes differ in size");
    std::transform(planes[n].samples.begin(), planes[n].samples.end(), t.data() + n * w * h,
                   [](double v) { return static_cast<T>(v); });
  }
  return t;
}

template <typename T>
ImagePlane plane_from_tensor(const Tensor<T>& t, std::size_t n) {
  require_rank4(t.dims(), "plane_from_tensor input");
  if (t.dim(1) != 1) throw ShapeError("plane_from_tensor expects a single channel");
  const std::size_t h = t.dim(2), w = t.dim(3);
  ImagePlane plane(w, h);
  for (std::size_t i = 0; i < w * h; ++i)
    plane.samples[i] = std::clamp(static_cast<double>(t[n * w * h + i]), 0.0, 1.0);
  return plane;
}

template Tensor<float> planes_to_tensor(const std::vector<ImagePlane>&);
template Tensor<double> planes_to_tensor(const std::vector<ImagePlane>&);
template ImagePlane plane_from_tensor(const Tensor<float>&, std::size_t);
template ImagePlane plane_from_tensor(const Tensor<double>&, std::size_t);

}  // namespace lapcs
