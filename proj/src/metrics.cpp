#include "lapcs/metrics.hpp"

#include <chrono>
#include <charconv>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "lapcs/binary_io.hpp"

namespace lapcs {

namespace {
void require_same_size(const ImagePlane& a, const ImagePlane& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError(std::string(what) + ": images differ in size (" + std::to_string(a.width) +
                     "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
}
}  // namespace

double psnr(const ImagePlane& a, const ImagePlane& b) {
  require_same_size(a, b, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d = a.samples[i] - b.samples[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.samples.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

namespace {

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  const double c = (kSsimWindow - 1) / 2.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double x = static_cast<double>(i) - c;
    w[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  return w;
}

// Separable valid-mode filtering of src (w x h) with the 1-D window.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t w, std::size_t h,
                                 const std::vector<double>& win) {
  const std::size_t n = win.size(), ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(ow * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += win[k] * src[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += win[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const ImagePlane& a, const ImagePlane& b) {
  require_same_size(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw ArgumentError("ssim needs images of at least 11x11 pixels");
  const auto win = gaussian_window();
  const std::size_t w = a.width, h = a.height, n = a.samples.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.samples[i] * a.samples[i];
    bb[i] = b.samples[i] * b.samples[i];
    ab[i] = a.samples[i] * b.samples[i];
  }
  const auto mu_a = filter_valid(a.samples, w, h, win);
  const auto mu_b = filter_valid(b.samples, w, h, win);
  const auto e_aa = filter_valid(aa, w, h, win);
  const auto e_bb = filter_valid(bb, w, h, win);
  const auto e_ab = filter_valid(ab, w, h, win);
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
    const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.size());
}

void summarize(EvalSummary& s) {
  const auto n = static_cast<double>(s.records.size());
  double p = 0.0, q = 0.0, t = 0.0;
  for (const auto& r : s.records) {
    p += r.psnr;
    q += r.ssim;
    t += r.seconds;
  }
  s.mean_psnr = n > 0 ? p / n : 0.0;
  s.mean_ssim = n > 0 ? q / n : 0.0;
  s.mean_seconds = n > 0 ? t / n : 0.0;
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

std::string metrics_csv(const EvalSummary& s) {
  std::ostringstream out;
  out << "# ssim: 11x11 gaussian window sigma 1.5, valid windows only; psnr: no border crop; "
         "skipped="
      << s.skipped << "\n";
  out << "image,ratio,psnr_db,ssim,seconds\n";
  auto row = [&](const std::string& name, double ratio, double p, double q, double t) {
    out << name << "," << format_metric(ratio) << "," << format_metric(p) << ","
        << format_metric(q) << "," << format_metric(t) << "\n";
  };
  for (const auto& r : s.records) row(r.image_name, r.ratio, r.psnr, r.ssim, r.seconds);
  const double ratio = s.records.empty() ? 0.0 : s.records.front().ratio;
  row("__mean__", ratio, s.mean_psnr, s.mean_ssim, s.mean_seconds);
  return out.str();
}

EvalSummary evaluate(const Reconstructor& reconstruct, std::size_t block_size, double ratio,
                     const std::filesystem::path& dataset_dir,
                     const std::filesystem::path& csv_path) {
  if (!std::filesystem::is_directory(dataset_dir))
    throw IoError(dataset_dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dataset_dir))
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  EvalSummary summary;
  for (const auto& f : files) {
    ImagePlane truth;
    try {
      truth = crop_to_multiple(load_image(f), block_size);
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
      ++summary.skipped;
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    const ImagePlane recon = reconstruct(truth);
    const auto stop = std::chrono::steady_clock::now();
    MetricsRecord r;
    r.image_name = f.filename().string();
    r.ratio = ratio;
    r.seconds = std::chrono::duration<double>(stop - start).count();
    r.psnr = psnr(truth, recon);
    r.ssim = ssim(truth, recon);
    summary.records.push_back(std::move(r));
  }
  if (summary.records.empty())
    throw DataError(dataset_dir.string() + ": no readable images to evaluate");
  summarize(summary);
  if (!csv_path.empty()) {
    const std::string text = metrics_csv(summary);
    binary::write_file(csv_path, {text.begin(), text.end()});
  }
  return summary;
}

EvalSummary evaluate(const LapCSModel& model, const std::filesystem::path& dataset_dir,
                     const std::filesystem::path& csv_path) {
  return evaluate([&model](const ImagePlane& p) { return reconstruct_image(model, p); },
                  model.config.sampling.block_size, model.config.sampling.ratio, dataset_dir,
                  csv_path);
}

}  // namespace lapcs
