#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lapcs/metrics.hpp"
#include "test_support.hpp"

using namespace lapcs;
using lapcs::testing::synthetic_image;
using lapcs::testing::temp_dir;

namespace {

// Direct 2-D windowed SSIM with an explicitly built 11x11 kernel.
double ssim_oracle(const ImagePlane& a, const ImagePlane& b) {
  const int r = 5;
  double kernel[11][11];
  double total = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) total += kernel[i + r][j + r] = std::exp(-(i * i + j * j) / 4.5);
  for (auto& row : kernel)
    for (auto& v : row) v /= total;
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + 11 <= a.height; ++y)
    for (std::size_t x = 0; x + 11 <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < 11; ++i)
        for (std::size_t j = 0; j < 11; ++j) {
          const double k = kernel[i][j], va = a.at(x + j, y + i), vb = b.at(x + j, y + i);
          ma += k * va;
          mb += k * vb;
          saa += k * va * va;
          sbb += k * vb * vb;
          sab += k * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

ImagePlane noisy_copy(const ImagePlane& p, double amount, std::uint64_t seed) {
  Rng rng(seed);
  ImagePlane out = p;
  for (auto& v : out.samples) v = std::clamp(v + amount * rng.normal(), 0.0, 1.0);
  return out;
}

}  // namespace

TEST_CASE("psnr") {
  const auto x = synthetic_image(24, 20, 1);
  CHECK(std::isinf(psnr(x, x)));
  CHECK(psnr(x, x) > 0);

  CHECK(psnr(ImagePlane(8, 8, 0.0), ImagePlane(8, 8, 0.1)) == doctest::Approx(20.0).epsilon(1e-11));

  const auto y = noisy_copy(x, 0.05, 2);
  double mse = 0.0;
  for (std::size_t i = 0; i < x.samples.size(); ++i)
    mse += (x.samples[i] - y.samples[i]) * (x.samples[i] - y.samples[i]);
  mse /= static_cast<double>(x.samples.size());
  CHECK(psnr(x, y) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));
  CHECK(psnr(x, y) == psnr(y, x));
  CHECK_THROWS_AS(psnr(x, ImagePlane(24, 21)), ShapeError);
}

TEST_CASE("ssim") {
  const auto x = synthetic_image(31, 23, 3);
  CHECK(ssim(x, x) == 1.0);

  ImagePlane inverted = x;
  for (auto& v : inverted.samples) v = 1.0 - v;
  CHECK(ssim(x, inverted) < 1.0);

  const double constant = ssim(ImagePlane(16, 16, 0.4), ImagePlane(16, 16, 0.5));
  CHECK(constant == doctest::Approx((2 * 0.4 * 0.5 + 1e-4) / (0.16 + 0.25 + 1e-4)).epsilon(1e-12));

  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto y = noisy_copy(x, 0.03 * static_cast<double>(seed), seed);
    const double s = ssim(x, y);
    CHECK(std::abs(s - ssim_oracle(x, y)) < 1e-12);
    CHECK(s == doctest::Approx(ssim(y, x)).epsilon(1e-14));
    CHECK(std::abs(s) <= 1.0);
    CHECK(s < 1.0);
  }

  const ImagePlane exact(11, 11, 0.3);
  CHECK(ssim(exact, exact) == 1.0);
  CHECK_THROWS_AS(ssim(ImagePlane(10, 40), ImagePlane(10, 40)), ArgumentError);
  CHECK_THROWS_AS(ssim(ImagePlane(40, 10), ImagePlane(40, 10)), ArgumentError);
}

TEST_CASE("format_metric") {
  CHECK(format_metric(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_metric(0.5) == "0.5");
  CHECK(std::stod(format_metric(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("evaluate with a custom reconstructor") {
  const auto dir = temp_dir("eval");
  save_image(synthetic_image(70, 40, 1), dir / "one.pgm");
  const auto csv = dir / "out.csv";
  const Reconstructor identity = [](const ImagePlane& p) { return p; };

  auto summary = evaluate(identity, 32, 0.1, dir, csv);
  REQUIRE(summary.records.size() == 1);
  CHECK(std::isinf(summary.records[0].psnr));
  CHECK(summary.records[0].ssim == 1.0);
  CHECK(summary.records[0].image_name == "one.pgm");

  std::ifstream in(csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0].rfind("#", 0) == 0);
  CHECK(lines[1] == "image,ratio,psnr_db,ssim,seconds");
  CHECK(lines[2].rfind("one.pgm,0.1,inf,1,", 0) == 0);
  CHECK(lines[3].rfind("__mean__,0.1,inf,1,", 0) == 0);

  save_image(synthetic_image(64, 64, 2), dir / "two.png");
  std::ofstream(dir / "broken.pgm") << "P5\n";
  const Reconstructor blur = [](const ImagePlane& p) { return noisy_copy(p, 0.02, p.width); };
  summary = evaluate(blur, 32, 0.1, dir, "");
  REQUIRE(summary.records.size() == 2);
  CHECK(summary.skipped == 1);
  CHECK(summary.records[0].image_name == "one.pgm");
  CHECK(summary.records[1].image_name == "two.png");
  const double mp = (summary.records[0].psnr + summary.records[1].psnr) / 2;
  const double ms = (summary.records[0].ssim + summary.records[1].ssim) / 2;
  CHECK(std::abs(summary.mean_psnr - mp) < 1e-9);
  CHECK(std::abs(summary.mean_ssim - ms) < 1e-9);

  CHECK_THROWS_AS(evaluate(identity, 32, 0.1, temp_dir("eval_empty"), ""), DataError);
}

TEST_CASE("evaluate a model") {
  const auto dir = temp_dir("eval_model");
  save_image(synthetic_image(64, 64, 5), dir / "img.pgm");
  const auto model = build_model(0.1, 1, 7);
  const auto summary = evaluate(model, dir, "");
  REQUIRE(summary.records.size() == 1);
  const auto truth = crop_to_multiple(load_image(dir / "img.pgm"), 32);
  const auto recon = reconstruct_image(model, truth);
  CHECK(summary.records[0].psnr == psnr(truth, recon));
  CHECK(summary.records[0].ssim == ssim(truth, recon));
  CHECK(summary.records[0].ratio == 0.1);
}
