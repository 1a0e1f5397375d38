// Acceptance suite: one PASS/FAIL line per criterion, with wall time.
//
//   lapcs_acceptance [--only N ...] [--steps S] [--work-dir DIR]

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "lapcs/binary_io.hpp"
#include "lapcs/metrics.hpp"
#include "lapcs/model.hpp"
#include "lapcs/ops.hpp"
#include "lapcs/sampling.hpp"
#include "lapcs/train.hpp"
#include "test_support.hpp"

using namespace lapcs;
using lapcs::testing::grad_check;
using lapcs::testing::random_tensor;
using lapcs::testing::synthetic_image;
using lapcs::testing::weighted_sum;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::size_t overfit_steps = 2000;
  fs::path work_dir = fs::temp_directory_path() / "lapcs_acceptance";
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

// ---------------------------------------------------------------- 1

Verdict layer_counts() {
  struct Row {
    double ratio;
    std::size_t d, layers;
  };
  const Row rows[] = {{0.01, 2, 17}, {0.02, 2, 12}, {0.1, 2, 7},
                      {0.01, 4, 23}, {0.02, 4, 16}, {0.1, 4, 9}};
  Verdict v{true, ""};
  for (const auto& r : rows) {
    const std::size_t got = layer_count(r.ratio, r.d);
    v.detail += fmt(r.ratio) + "/d" + std::to_string(r.d) + "=" + std::to_string(got) + " ";
    if (got != r.layers) v.pass = false;
  }
  return v;
}

// ---------------------------------------------------------------- 2

Tensor<double> away_from_zero(Tensor<double> t, Rng& rng) {
  for (auto& x : t.values())
    if (std::abs(x) < 0.05) x = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.05, 1.0);
  return t;
}

Verdict gradient_checks() {
  double worst = 0.0;
  std::size_t instances = 0, entries = 0;
  auto take = [&](const lapcs::testing::GradCheckResult& r) {
    worst = std::max(worst, r.max_rel_error);
    entries += r.checked;
    ++instances;
  };
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    {
      Var<double> x(random_tensor({2, 2, 6, 5}, rng), true);
      Var<double> w(random_tensor({3, 2, 3, 3}, rng), true);
      Var<double> b(random_tensor({3}, rng), true);
      const std::size_t stride = 1 + seed % 2;
      const auto proj = random_tensor(conv2d(x, w, b, stride, 1).dims(), rng);
      take(grad_check([&] { return weighted_sum(conv2d(x, w, b, stride, 1), proj); }, {x, w, b}));
    }
    {
      Var<double> x(random_tensor({2, 3, 3, 2}, rng), true);
      Var<double> w(random_tensor({3, 2, 4, 4}, rng), true);
      Var<double> b(random_tensor({2}, rng), true);
      const auto proj = random_tensor({2, 2, 6, 4}, rng);
      take(grad_check([&] { return weighted_sum(conv_transpose2d(x, w, b), proj); }, {x, w, b}));
    }
    {
      Var<double> x(away_from_zero(random_tensor({3, 7}, rng), rng), true);
      const auto proj = random_tensor({3, 7}, rng);
      take(grad_check([&] { return weighted_sum(leaky_relu(x, 0.2), proj); }, {x}));
    }
    {
      Var<double> a(random_tensor({3, 4}, rng), true), b(random_tensor({3, 4}, rng), true);
      const auto proj = random_tensor({3, 4}, rng);
      take(grad_check([&] { return weighted_sum(add(a, b), proj); }, {a, b}));
      take(grad_check([&] { return sum(scale(a, -1.7)); }, {a}));
    }
    {
      Var<double> p(random_tensor({2, 1, 3, 4}, rng), true), t(random_tensor({2, 1, 3, 4}, rng), true);
      take(grad_check([&] { return charbonnier(p, t, 1e-3); }, {p, t}));
    }
    {
      Var<double> img(random_tensor({1, 1, 16, 8}, rng), true);
      Var<double> phi(random_tensor({3, 1, 8, 8}, rng), true);
      Var<double> rw(random_tensor({4, 3, 1, 1}, rng), true), rb(random_tensor({4}, rng), true);
      const auto proj = random_tensor({1, 1, 4, 2}, rng);
      take(grad_check(
          [&] { return weighted_sum(initial_reconstruct(sample(img, phi), rw, rb), proj); },
          {img, phi, rw, rb}));
    }
    {
      Var<double> c(random_tensor({2, 4, 2, 3}, rng), true);
      const auto proj = random_tensor({2, 1, 4, 6}, rng);
      take(grad_check([&] { return weighted_sum(reshape_concat(c), proj); }, {c}));
    }
  }

  ModelConfig tiny;
  tiny.sampling = SamplingConfig::custom(2.0 / 64, 8, 2, 2);
  tiny.depth = 1;
  tiny.seed = 5;
  auto m = build_model<double>(tiny);
  Rng rng(19);
  const Var<double> img(random_tensor({1, 1, 16, 16}, rng, 0.0, 1.0));
  const auto batch = batch_from_patches<double>(
      {plane_from_tensor(random_tensor({1, 1, 16, 16}, rng, 0.0, 1.0))}, tiny.sampling.levels);
  std::vector<Var<double>> leaves;
  for (auto* p : m.parameters()) leaves.push_back(p->var());
  const auto pipe = grad_check([&] { return pyramid_loss(forward(m, img), batch.targets, 1e-3); },
                               leaves, 1e-5, 12, 77);

  Verdict v;
  v.pass = worst < 1e-4 && pipe.max_rel_error < 1e-3 && instances >= 20;
  v.detail = "ops: " + std::to_string(instances) + " instances, " + std::to_string(entries) +
             " entries, max rel " + fmt(worst) + "; tiny pipeline: " + std::to_string(pipe.checked) +
             " entries, max rel " + fmt(pipe.max_rel_error);
  return v;
}

// ---------------------------------------------------------------- 3

template <typename T>
std::vector<double> block_of(const Tensor<T>& img, std::size_t u, std::size_t v, std::size_t b) {
  std::vector<double> x;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) x.push_back(static_cast<double>(img.at(0, 0, u * b + i, v * b + j)));
  return x;
}

Verdict sampling_oracles() {
  Rng rng(5);
  const std::size_t b = 32, nb = measurement_count(0.1, b), gh = 2, gw = 3;
  const auto w = random_tensor({nb, 1, b, b}, rng, -1.0 / b, 1.0 / b);
  const auto img = random_tensor({1, 1, gh * b, gw * b}, rng, 0.0, 1.0);
  const auto w32 = w.cast<float>();
  const auto img32 = img.cast<float>();
  const auto y = sample(Var<double>(img), Var<double>(w)).value();
  const auto y32 = sample(Var<float>(img32), Var<float>(w32)).value();
  double e64 = 0.0, e32 = 0.0;
  for (std::size_t u = 0; u < gh; ++u)
    for (std::size_t v = 0; v < gw; ++v) {
      const auto x = block_of(img, u, v, b);
      const auto x32 = block_of(img32, u, v, b);
      for (std::size_t r = 0; r < nb; ++r) {
        double acc = 0.0, acc32 = 0.0;
        for (std::size_t p = 0; p < b * b; ++p) {
          acc += w[r * b * b + p] * x[p];
          acc32 += static_cast<double>(w32[r * b * b + p]) * x32[p];
        }
        e64 = std::max(e64, std::abs(y.at(0, r, u, v) - acc));
        e32 = std::max(e32, std::abs(static_cast<double>(y32.at(0, r, u, v)) - acc32));
      }
    }

  const std::size_t k = b / select_scale_factor(0.1);
  const auto rw = random_tensor({k * k, nb, 1, 1}, rng, -0.1, 0.1);
  const auto rb = random_tensor({k * k}, rng);
  const auto z = initial_reconstruct(Var<double>(y), Var<double>(rw), Var<double>(rb)).value();
  const auto z32 = initial_reconstruct(Var<float>(y.cast<float>()), Var<float>(rw.cast<float>()),
                                       Var<float>(rb.cast<float>()))
                       .value();
  double r64 = 0.0, r32 = 0.0;
  for (std::size_t u = 0; u < gh; ++u)
    for (std::size_t v = 0; v < gw; ++v)
      for (std::size_t r = 0; r < k * k; ++r) {
        double acc = rb[r];
        for (std::size_t c = 0; c < nb; ++c) acc += rw[r * nb + c] * y.at(0, c, u, v);
        r64 = std::max(r64, std::abs(z.at(0, 0, u * k + r / k, v * k + r % k) - acc));
        r32 = std::max(r32, std::abs(static_cast<double>(z32.at(0, 0, u * k + r / k, v * k + r % k)) - acc));
      }
  Verdict v;
  v.pass = e64 < 1e-12 && e32 < 1e-6 && r64 < 1e-12 && r32 < 1e-6;
  v.detail = "sample 64-bit " + fmt(e64) + ", 32-bit " + fmt(e32) + "; initial_reconstruct 64-bit " +
             fmt(r64) + ", 32-bit " + fmt(r32);
  return v;
}

// ---------------------------------------------------------------- 4

Verdict reshape_concat_permutation() {
  Rng rng(2);
  bool ok = true;
  for (std::size_t k : {1, 2, 4, 8}) {
    const std::size_t n = 2, h = 3, w = 2;
    const auto t = random_tensor({n, k * k, h, w}, rng);
    const auto out = reshape_concat(Var<double>(t)).value();
    ok = ok && out.dims() == Dims{n, 1, h * k, w * k};
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < k * k; ++c)
        for (std::size_t u = 0; u < h; ++u)
          for (std::size_t v = 0; v < w; ++v)
            ok = ok && out.at(b, 0, u * k + c / k, v * k + c % k) == t.at(b, c, u, v);
    ok = ok && split_blocks(out, k) == t;
  }
  return {ok, "k in {1,2,4,8}: explicit index map and split_blocks inverse"};
}

// ---------------------------------------------------------------- 5

Verdict charbonnier_forms() {
  const Var<double> zero(Tensor<double>({1}, {0.0}));
  const double rho0 = charbonnier(zero, zero, 1e-3).value()[0];
  const double rho3 = charbonnier(Var<double>(Tensor<double>({1}, {3e-3})), zero, 1e-3).value()[0];
  const double e0 = std::abs(rho0 - 1e-3), e3 = std::abs(rho3 - std::sqrt(1e-5));

  Rng rng(4);
  const std::size_t n = 3;
  std::vector<Tensor<double>> preds, targets;
  for (std::size_t side : {8, 16, 32}) {
    preds.push_back(random_tensor({n, 1, side, side}, rng, 0.0, 1.0));
    targets.push_back(random_tensor({n, 1, side, side}, rng, 0.0, 1.0));
  }
  double oracle = 0.0;
  for (std::size_t l = 0; l < preds.size(); ++l)
    for (std::size_t i = 0; i < preds[l].size(); ++i) {
      const double d = preds[l][i] - targets[l][i];
      oracle += std::sqrt(d * d + 1e-6);
    }
  oracle /= static_cast<double>(n);
  std::vector<Var<double>> outs(preds.begin(), preds.end());
  const double loss = pyramid_loss(outs, targets, 1e-3).value()[0];
  const double eb = std::abs(loss - oracle);
  return {e0 < 1e-12 && e3 < 1e-12 && eb < 1e-10,
          "|rho(0)-1e-3|=" + fmt(e0) + ", |rho(3e-3)-sqrt(1e-5)|=" + fmt(e3) + ", batch loss vs oracle " +
              fmt(eb)};
}

// ---------------------------------------------------------------- 6

double mean_psnr(const LapCSModel& model, const std::vector<ImagePlane>& images) {
  double acc = 0.0;
  for (const auto& img : images) acc += psnr(img, reconstruct_image(model, img));
  return acc / static_cast<double>(images.size());
}

Verdict overfit(const Options& opt) {
  Dataset ds;
  ds.names = {"synthetic-1", "synthetic-2"};
  ds.images = {synthetic_image(128, 128, 21), synthetic_image(128, 128, 22)};

  TrainConfig c;
  c.ratio = 0.1;
  c.depth = 2;
  c.batch_size = 8;
  c.patch = 64;
  c.epochs = 1;
  c.iters_per_epoch = opt.overfit_steps;
  c.lr0 = 1e-5;
  c.seed = 1;
  c.quiet = true;
  c.log_interval = opt.overfit_steps;

  // Fixed evaluation patches: the whole training images plus their four
  // 64x64 quadrants.
  std::vector<ImagePlane> patches;
  for (const auto& img : ds.images) {
    patches.push_back(img);
    for (std::size_t y : {0, 64})
      for (std::size_t x : {0, 64}) patches.push_back(crop(img, x, y, 64, 64));
  }

  Trainer trainer(c, ds);
  const double before = mean_psnr(trainer.state().model, patches);
  double ema100 = 0.0;
  trainer.run([&](const StepReport& r) {
    if (r.iter == 100) ema100 = r.loss_ema;
  });
  const double after = mean_psnr(trainer.state().model, patches);
  const double ema_end = trainer.state().loss_ema;
  Verdict v;
  v.pass = after >= before + 2.0 && ema_end < ema100 && opt.overfit_steps >= 100 &&
           opt.overfit_steps <= 20000;
  v.detail = std::to_string(opt.overfit_steps) + " steps; PSNR " + fmt(before) + " -> " + fmt(after) +
             " dB (gain " + fmt(after - before) + "); loss EMA step 100 " + fmt(ema100) + " -> end " +
             fmt(ema_end);
  return v;
}

// ---------------------------------------------------------------- 7

Verdict metric_sanity(const Options& opt) {
  const auto x = synthetic_image(48, 40, 7);
  const bool ssim_one = ssim(x, x) == 1.0;

  Rng rng(8);
  ImagePlane a(40, 30), b(40, 30);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    a.samples[i] = rng.uniform(0.0, 0.9);
    b.samples[i] = a.samples[i] + 0.1;
  }
  const double p01 = psnr(a, b);

  const auto dir = opt.work_dir / "metric_sanity";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (std::uint64_t s = 1; s <= 3; ++s)
    save_image(synthetic_image(64 + 8 * s, 64, s), dir / ("img" + std::to_string(s) + ".pgm"));
  const Reconstructor noisy = [](const ImagePlane& p) {
    Rng r(p.width);
    ImagePlane out = p;
    for (auto& v : out.samples) v = std::clamp(v + 0.05 * r.normal(), 0.0, 1.0);
    return out;
  };
  const auto csv = dir / "metrics.csv";
  const auto summary = evaluate(noisy, 32, 0.1, dir, csv);
  std::ifstream in(csv);
  std::string line;
  double sp = 0.0, ss = 0.0, mp = 0.0, ms = 0.0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("image,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.at(0) == "__mean__") {
      mp = std::stod(f.at(2));
      ms = std::stod(f.at(3));
    } else {
      sp += std::stod(f.at(2));
      ss += std::stod(f.at(3));
      ++rows;
    }
  }
  const double dp = std::abs(sp / rows - mp), ds = std::abs(ss / rows - ms);
  Verdict v;
  v.pass = ssim_one && std::abs(p01 - 20.0) < 1e-9 &&
           rows == summary.records.size() && rows == 3 && dp < 1e-9 && ds < 1e-9;
  v.detail = std::string("ssim(x,x)==1: ") + (ssim_one ? "yes" : "no") + "; psnr(0.1 offset)-20 = " +
             fmt(p01 - 20.0) + "; csv mean deltas " + fmt(dp) + ", " + fmt(ds) + " over " +
             std::to_string(rows) + " rows";
  return v;
}

// ---------------------------------------------------------------- 8

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict determinism(const Options& opt) {
  const auto dir = opt.work_dir / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir / "data");
  save_image(synthetic_image(128, 128, 21), dir / "data" / "a.pgm");
  save_image(synthetic_image(112, 128, 22), dir / "data" / "b.png");
  const std::string base = std::string(LAPCS_CLI_PATH) + " --deterministic train --data " +
                           (dir / "data").string() +
                           " --ratio 0.1 --d 2 --epochs 1 --iters 50 --batch 8 --patch 64 --seed 9";
  for (const char* run : {"a", "b"}) {
    const auto out = dir / run;
    if (run_command(base + " --out " + (out / "model.lpcs").string() + " > " + (out.string() + ".log") +
                    " 2>&1") != 0)
      return {false, std::string("training run ") + run + " failed"};
  }
  const bool ckpt = binary::read_file(dir / "a" / "checkpoints" / "epoch1.lpcs") ==
                    binary::read_file(dir / "b" / "checkpoints" / "epoch1.lpcs");
  const bool state = binary::read_file(dir / "a" / "checkpoints" / "epoch1.lpcs.state") ==
                     binary::read_file(dir / "b" / "checkpoints" / "epoch1.lpcs.state");
  const bool model = binary::read_file(dir / "a" / "model.lpcs") == binary::read_file(dir / "b" / "model.lpcs");
  return {ckpt && state && model, std::string("50 steps x2: checkpoint ") + (ckpt ? "identical" : "differs") +
                                      ", optimizer state " + (state ? "identical" : "differs") +
                                      ", model " + (model ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LapCS acceptance criteria"};
  Options opt;
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 8));
  app.add_option("--steps", opt.overfit_steps, "Training steps for the overfit criterion")
      ->capture_default_str();
  app.add_option("--work-dir", opt.work_dir, "Scratch directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());

  struct Criterion {
    int id;
    std::string name;
    double budget_seconds;  // 0 = no limit
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "layer counts", 1.0, layer_counts},
      {2, "gradient checks", 120.0, gradient_checks},
      {3, "sampling oracles", 10.0, sampling_oracles},
      {4, "reshape_concat permutation", 1.0, reshape_concat_permutation},
      {5, "charbonnier closed forms", 1.0, charbonnier_forms},
      {6, "overfit training", 1800.0, [&] { return overfit(opt); }},
      {7, "metric sanity", 0.0, [&] { return metric_sanity(opt); }},
      {8, "determinism", 0.0, [&] { return determinism(opt); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      v.pass = false;
      v.detail += "; over the " + fmt(c.budget_seconds) + " s budget";
    }
    if (!v.pass) ++failures;
    std::cout << "criterion " << c.id << " [" << c.name << "]: " << (v.pass ? "PASS" : "FAIL") << " ("
              << std::fixed << std::setprecision(2) << secs << " s) " << std::defaultfloat << v.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
