#include "lapcs/model.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "lapcs/binary_io.hpp"
#include "lapcs/ops.hpp"
#include "lapcs/random.hpp"

namespace lapcs {

void ModelConfig::validate() const {
  sampling.validate();
  if (depth == 0) throw ConfigError("depth d must be at least 1");
}

namespace {

template <typename T>
ConvParams<T> conv_params(const std::string& prefix, Dims weight_dims, std::size_t out_channels) {
  return {Parameter<T>(prefix + ".weight", Tensor<T>(std::move(weight_dims))),
          Parameter<T>(prefix + ".bias", Tensor<T>({out_channels}))};
}

template <typename T>
void push(std::vector<T*>& out, auto& conv) {
  out.push_back(&conv.weight);
  out.push_back(&conv.bias);
}

template <typename T>
void fill_from(Tensor<T>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
}

}  // namespace

template <typename T>
std::vector<Parameter<T>*> BasicModel<T>::parameters() {
  std::vector<Parameter<T>*> out{&sampling_weight};
  push(out, recon);
  for (auto& level : levels) {
    for (auto& conv : level.feature_convs) push(out, conv);
    push(out, level.feature_upsampler);
    push(out, level.residual_conv);
    push(out, level.integration_upsampler);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> BasicModel<T>::parameters() const {
  auto mut = const_cast<BasicModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
template <typename U>
BasicModel<U> BasicModel<T>::cast() const {
  BasicModel<U> out = make_model_skeleton<U>(config);
  auto src = parameters();
  auto dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->mutable_value() = src[i]->value().template cast<U>();
  return out;
}

template <typename T>
BasicModel<T> make_model_skeleton(const ModelConfig& config) {
  config.validate();
  const auto& s = config.sampling;
  const std::size_t b = s.block_size, nb = s.measurements, k = s.reduced_block();
  const std::size_t f = kFeatureChannels;
  BasicModel<T> m;
  m.config = config;
  m.sampling_weight = Parameter<T>("sampling.weight", Tensor<T>({nb, 1, b, b}));
  m.recon = conv_params<T>("recon", {k * k, nb, 1, 1}, k * k);
  for (std::size_t l = 1; l <= s.levels; ++l) {
    const std::string p = "level" + std::to_string(l) + ".";
    LevelParams<T> level;
    for (std::size_t i = 0; i < config.depth; ++i) {
      const std::size_t in = (l == 1 && i == 0) ? 1 : f;
      level.feature_convs.push_back(
          conv_params<T>(p + "feature" + std::to_string(i), {f, in, 3, 3}, f));
    }
    level.feature_upsampler = conv_params<T>(p + "feature_up", {f, f, 4, 4}, f);
    level.residual_conv = conv_params<T>(p + "residual", {1, f, 3, 3}, 1);
    level.integration_upsampler = conv_params<T>(p + "integration_up", {1, 1, 4, 4}, 1);
    m.levels.push_back(std::move(level));
  }
  return m;
}

std::vector<double> bilinear_upsample_kernel() {
  static constexpr double k1[4] = {0.25, 0.75, 0.75, 0.25};
  std::vector<double> k(16);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) k[i * 4 + j] = k1[i] * k1[j];
  return k;
}

template <typename T>
BasicModel<T> build_model(const ModelConfig& config) {
  BasicModel<T> m = make_model_skeleton<T>(config);
  Rng rng(config.seed);
  const auto& s = config.sampling;
  m.sampling_weight.mutable_value() = normal_tensor<T>(
      m.sampling_weight.value().dims(), 1.0 / static_cast<double>(s.block_size), rng);
  m.recon.weight.mutable_value() =
      he_init<T>(m.recon.weight.value().dims(), s.measurements, kLeakySlope, rng);
  const auto bilinear = bilinear_upsample_kernel();
  for (auto& level : m.levels) {
    for (auto& conv : level.feature_convs) {
      const auto& d = conv.weight.value().dims();
      conv.weight.mutable_value() = he_init<T>(d, d[1] * 9, kLeakySlope, rng);
    }
    // A stride-2 4x4 transposed conv feeds each output pixel from a 2x2
    // window per input channel.
    const auto& up = level.feature_upsampler.weight.value().dims();
    level.feature_upsampler.weight.mutable_value() = he_init<T>(up, up[0] * 4, kLeakySlope, rng);
    const auto& res = level.residual_conv.weight.value().dims();
    level.residual_conv.weight.mutable_value() = he_init<T>(res, res[1] * 9, kLeakySlope, rng);
    fill_from(level.integration_upsampler.weight.mutable_value(), bilinear);
  }
  return m;
}

LapCSModel build_model(double ratio, std::size_t depth, std::uint64_t seed,
                       std::size_t block_size) {
  ModelConfig c;
  c.sampling = SamplingConfig::from_ratio(ratio, block_size);
  c.depth = depth;
  c.seed = seed;
  return build_model<float>(c);
}

template <typename T>
std::vector<Var<T>> forward_from_measurements(const BasicModel<T>& model,
                                              const Var<T>& measurements) {
  const T slope = static_cast<T>(kLeakySlope);
  Var<T> estimate =
      initial_reconstruct(measurements, model.recon.weight.var(), model.recon.bias.var());
  Var<T> features = estimate;
  std::vector<Var<T>> outputs;
  outputs.reserve(model.levels.size());
  for (const auto& level : model.levels) {
    for (const auto& conv : level.feature_convs)
      features = leaky_relu(conv2d(features, conv.weight.var(), conv.bias.var(), 1, 1), slope);
    features = leaky_relu(conv_transpose2d(features, level.feature_upsampler.weight.var(),
                                           level.feature_upsampler.bias.var()),
                          slope);
    Var<T> residual =
        conv2d(features, level.residual_conv.weight.var(), level.residual_conv.bias.var(), 1, 1);
    Var<T> upsampled = conv_transpose2d(estimate, level.integration_upsampler.weight.var(),
                                        level.integration_upsampler.bias.var());
    estimate = add(upsampled, residual);
    outputs.push_back(estimate);
  }
  return outputs;
}

template <typename T>
std::vector<Var<T>> forward(const BasicModel<T>& model, const Var<T>& image) {
  return forward_from_measurements(model, sample(image, model.sampling_weight.var()));
}

MeasurementGrid measure_image(const LapCSModel& model, const ImagePlane& image) {
  NoGradGuard no_grad;
  const Var<float> input(planes_to_tensor<float>({image}));
  return MeasurementGrid::from_tensor(sample(input, model.sampling_weight.var()).value());
}

ImagePlane reconstruct_measurements(const LapCSModel& model, const MeasurementGrid& grid) {
  if (grid.measurements != model.config.sampling.measurements)
    throw ShapeError("measurement grid has n_B=" + std::to_string(grid.measurements) +
                     " but the model expects n_B=" +
                     std::to_string(model.config.sampling.measurements));
  NoGradGuard no_grad;
  const auto outputs = forward_from_measurements(model, Var<float>(grid.to_tensor()));
  return plane_from_tensor(outputs.back().value());
}

ImagePlane reconstruct_image(const LapCSModel& model, const ImagePlane& image) {
  return reconstruct_measurements(model, measure_image(model, image));
}

std::size_t layer_count(const ModelConfig& config) {
  return 2 + (config.depth + 3) * config.sampling.levels;
}

std::size_t layer_count(double ratio, std::size_t depth) {
  const std::size_t s = select_scale_factor(ratio);
  std::size_t levels = 0;
  while ((std::size_t{1} << levels) < s) ++levels;
  return 2 + (depth + 3) * levels;
}

std::size_t parameter_count(const ModelConfig& config) {
  const auto& s = config.sampling;
  const std::size_t b = s.block_size, nb = s.measurements, k2 = s.reduced_block() * s.reduced_block();
  const std::size_t f = kFeatureChannels;
  std::size_t total = nb * b * b + k2 * nb + k2;
  for (std::size_t l = 1; l <= s.levels; ++l) {
    const std::size_t first_in = l == 1 ? 1 : f;
    total += first_in * f * 9 + f;
    total += (config.depth - 1) * (f * f * 9 + f);
    total += f * f * 16 + f;  // feature upsampler
    total += f * 9 + 1;       // residual conv
    total += 16 + 1;          // integration upsampler
  }
  return total;
}

template <typename T>
std::size_t parameter_count(const BasicModel<T>& model) {
  std::size_t n = 0;
  for (const auto* p : model.parameters()) n += p->value().size();
  return n;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw FormatError("config field '" + key + "' has malformed value '" + text + "'");
  return v;
}

}  // namespace

std::string encode_config_text(const ModelConfig& c) {
  std::ostringstream out;
  out << "B=" << c.sampling.block_size << "\n"
      << "ratio=" << format_double(c.sampling.ratio) << "\n"
      << "n_B=" << c.sampling.measurements << "\n"
      << "S=" << c.sampling.scale_factor << "\n"
      << "d=" << c.depth << "\n"
      << "levels=" << c.sampling.levels << "\n"
      << "seed=" << c.seed << "\n"
      << "rng=" << Rng::kAlgorithm << "\n";
  return out.str();
}

ModelConfig decode_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("config is missing field '" + key + "'");
    return it->second;
  };
  if (field("rng") != Rng::kAlgorithm)
    throw FormatError("config field 'rng' names unknown generator '" + field("rng") + "'");
  ModelConfig c;
  c.depth = parse_number<std::size_t>("d", field("d"));
  c.seed = parse_number<std::uint64_t>("seed", field("seed"));
  const auto levels = parse_number<std::size_t>("levels", field("levels"));
  try {
    c.sampling = SamplingConfig::custom(parse_number<double>("ratio", field("ratio")),
                                        parse_number<std::size_t>("B", field("B")),
                                        parse_number<std::size_t>("n_B", field("n_B")),
                                        parse_number<std::size_t>("S", field("S")));
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent model config: ") + e.what());
  }
  if (levels != c.sampling.levels)
    throw FormatError("config field 'levels' disagrees with S");
  return c;
}

std::vector<std::uint8_t> encode_model(const LapCSModel& model) {
  binary::Writer w;
  w.raw("LPCS");
  w.u32(kModelFormatVersion);
  const std::string text = encode_config_text(model.config);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  for (const auto* p : model.parameters()) {
    w.u32(static_cast<std::uint32_t>(p->name().size()));
    w.raw(p->name());
    const auto& dims = p->value().dims();
    w.u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p->value().values()) w.f32(v);
  }
  return w.take();
}

LapCSModel decode_model(const std::vector<std::uint8_t>& bytes) {
  binary::Reader r(bytes);
  if (r.raw(4, "magic") != "LPCS") throw FormatError("bad magic: not an LPCS model file");
  const auto version = r.u32("version");
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(version));
  const auto text_len = r.u32("config length");
  if (text_len > r.remaining()) throw FormatError("truncated file while reading config text");
  LapCSModel model = make_model_skeleton<float>(decode_config_text(r.raw(text_len, "config text")));
  for (auto* p : model.parameters()) {
    const std::string& expected = p->name();
    const auto name_len = r.u32("parameter name length");
    if (name_len > 4096 || name_len > r.remaining())
      throw FormatError("parameter name length out of range while expecting '" + expected + "'");
    const std::string name = r.raw(name_len, "parameter name");
    if (name != expected)
      throw FormatError("parameter '" + name + "' found where '" + expected + "' was expected");
    const auto rank = r.u32(expected + " rank");
    const auto& dims = p->value().dims();
    if (rank != dims.size())
      throw FormatError("parameter '" + expected + "' has rank " + std::to_string(rank) +
                        ", expected " + std::to_string(dims.size()));
    for (std::size_t i = 0; i < rank; ++i) {
      const auto d = r.u32(expected + " dims");
      if (d != dims[i])
        throw FormatError("parameter '" + expected + "' has dims mismatching the config, expected " +
                          to_string(dims));
    }
    for (auto& v : p->mutable_value().values()) v = r.f32(expected + " values");
  }
  if (r.remaining() != 0)
    throw FormatError(std::to_string(r.remaining()) +
                      " trailing bytes after the last parameter (parameter count mismatch)");
  return model;
}

void save_model(const LapCSModel& model, const std::filesystem::path& path) {
  binary::write_file(path, encode_model(model));
}

LapCSModel load_model(const std::filesystem::path& path) {
  try {
    return decode_model(binary::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template class BasicModel<float>;
template class BasicModel<double>;
template BasicModel<double> BasicModel<float>::cast<double>() const;
template BasicModel<float> BasicModel<double>::cast<float>() const;
template BasicModel<float> make_model_skeleton(const ModelConfig&);
template BasicModel<double> make_model_skeleton(const ModelConfig&);
template BasicModel<float> build_model(const ModelConfig&);
template BasicModel<double> build_model(const ModelConfig&);
template std::vector<Var<float>> forward(const BasicModel<float>&, const Var<float>&);
template std::vector<Var<double>> forward(const BasicModel<double>&, const Var<double>&);
template std::vector<Var<float>> forward_from_measurements(const BasicModel<float>&,
                                                           const Var<float>&);
template std::vector<Var<double>> forward_from_measurements(const BasicModel<double>&,
                                                            const Var<double>&);
template std::size_t parameter_count(const BasicModel<float>&);
template std::size_t parameter_count(const BasicModel<double>&);

}  // namespace lapcs
