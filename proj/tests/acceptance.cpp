// Acceptance checks: one PASS / FAIL / SKIP line per criterion.
//   acceptance [--only NAME]...
// Exit status is 1 when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "deshadow/evaluation.hpp"
#include "deshadow/inference.hpp"
#include "deshadow/losses.hpp"
#include "deshadow/patches.hpp"
#include "deshadow/tensor_ops.hpp"
#include "deshadow/trainer.hpp"
#include "oracles.hpp"
#include "recovery.hpp"
#include "synthetic.hpp"

using namespace deshadow;
using namespace deshadow::testing;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double rel_err(double got, double want) {
  const double scale = std::max(std::fabs(want), 1e-12);
  return std::fabs(got - want) / scale;
}

torch::Tensor as_batch(const ShadowMask& m) { return to_tensor(m).to(torch::kFloat64).unsqueeze(0); }
torch::Tensor as_batch(const MatteLayer& a) { return to_tensor(a).to(torch::kFloat64).unsqueeze(0); }
torch::Tensor as_batch(const RasterImage& i) { return to_tensor(i).to(torch::kFloat64).unsqueeze(0); }

// ---------------------------------------------------------------------------

Outcome loss_oracle() {
  constexpr int kSide = 8;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  const LossWeights weights;
  for (int t = 0; t < 50; ++t) {
    const auto mask = t % 5 == 0 ? random_mask(rng, kSide, kSide, 0.5) : random_blob(rng, kSide, kSide);
    const auto regions = build_regions(mask, 1);
    const auto alpha = random_matte(rng, kSide, kSide);
    const auto out = random_image(rng, kSide, kSide);
    const double d = u(rng);

    const double mat = matting_loss(as_batch(alpha), as_batch(regions.umbra), as_batch(regions.nonshadow)).item<double>();
    const double sm = smoothness_loss(as_batch(alpha)).item<double>();
    const double bd = boundary_loss(as_batch(out), as_batch(regions.m_in), as_batch(regions.m_out)).value.item<double>();
    const double adv = adversarial_loss_generator(torch::tensor({d}, torch::kFloat64)).item<double>();
    const double adv_mm =
        adversarial_loss_generator(torch::tensor({d}, torch::kFloat64), AdversarialMode::Minimax).item<double>();
    const double total = total_generator_loss(
        LossParts{torch::tensor(sm), torch::tensor(mat), torch::tensor(bd), torch::tensor(adv)}, weights)
                             .item<double>();

    const double o_mat = matting_oracle(grid_of(alpha), bits_of(regions.umbra), bits_of(regions.nonshadow));
    const double o_sm = smoothness_oracle(grid_of(alpha), kSide, kSide);
    const double o_bd = boundary_oracle(rgb_of(out), bits_of(regions.m_in), bits_of(regions.m_out));
    const double o_adv = adversarial_oracle(d);
    const double o_adv_mm = adversarial_oracle(d, true);
    const double o_total = 10.0 * o_sm + 100.0 * o_mat + 0.5 * o_bd + 0.5 * o_adv;

    for (auto [got, want] : {std::pair{mat, o_mat}, {sm, o_sm}, {adv, o_adv}, {adv_mm, o_adv_mm},
                             {total, o_total}}) {
      worst = std::max(worst, rel_err(got, want));
    }
    // The boundary loss can vanish; compare absolutely below unit scale.
    worst = std::max(worst, std::fabs(bd - o_bd) / std::max(std::fabs(o_bd), 1.0));
  }
  return pass_if(worst < 1e-6, fmt("50 inputs, worst relative error %.2e (tol 1e-6)", worst));
}

Outcome gradient_checks() {
  constexpr int kSide = 8;
  constexpr double h = 1e-4;
  std::mt19937_64 rng(202);
  torch::manual_seed(202);
  double worst = 0.0;
  int compared = 0;
  int skipped = 0;
  auto check = [&](double analytic, double numeric) {
    // Floor well above central-difference roundoff (~eps / h) for zero partials.
    const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(analytic - numeric) / scale);
    ++compared;
  };
  for (int t = 0; t < 20; ++t) {
    const auto regions = build_regions(random_blob(rng, kSide, kSide), 1);
    const auto umbra = bits_of(regions.umbra), lit = bits_of(regions.nonshadow);
    const auto m_in = bits_of(regions.m_in), m_out = bits_of(regions.m_out);

    // Matting and smoothness with respect to alpha, kept away from the kinks
    // of |.| at 0 and 1.
    auto alpha = (torch::rand({1, 1, kSide, kSide}, torch::kFloat64) * 0.8 + 0.1).requires_grad_(true);
    auto a_mat = alpha.detach().clone().requires_grad_(true);
    matting_loss(a_mat, as_batch(regions.umbra), as_batch(regions.nonshadow)).backward();
    smoothness_loss(alpha).backward();
    const Grid a(alpha.data_ptr<double>(), alpha.data_ptr<double>() + kSide * kSide);
    for (int i = 0; i < kSide * kSide; ++i) {
      Grid p = a, m = a;
      p[i] += h;
      m[i] -= h;
      check(a_mat.grad().view(-1)[i].item<double>(),
            (matting_oracle(p, umbra, lit) - matting_oracle(m, umbra, lit)) / (2 * h));
      const int y = i / kSide, x = i % kSide;
      bool kink = false;
      for (auto [dy, dx] : {std::pair{0, 1}, {0, -1}, {1, 0}, {-1, 0}}) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < kSide && xx >= 0 && xx < kSide && std::fabs(a[i] - a[yy * kSide + xx]) < 2 * h) kink = true;
      }
      if (kink) {
        ++skipped;
        continue;
      }
      check(alpha.grad().view(-1)[i].item<double>(),
            (smoothness_oracle(p, kSide, kSide) - smoothness_oracle(m, kSide, kSide)) / (2 * h));
    }

    // Boundary loss with respect to output pixels.
    auto out = torch::rand({1, 3, kSide, kSide}, torch::kFloat64).requires_grad_(true);
    boundary_loss(out, as_batch(regions.m_in), as_batch(regions.m_out)).value.backward();
    // [1, 3, H, W] -> interleaved H x W x 3 for the oracle.
    const auto hwc = out.detach().squeeze(0).permute({1, 2, 0}).contiguous();
    const Rgb o(hwc.data_ptr<double>(), hwc.data_ptr<double>() + 3 * kSide * kSide);
    const double base = boundary_oracle(o, m_in, m_out);
    if (base < 2 * h) {
      ++skipped;
      continue;
    }
    for (int i = 0; i < 3 * kSide * kSide; ++i) {
      Rgb p = o, m = o;
      p[i] += h;
      m[i] -= h;
      const int c = i % 3, pix = i / 3;
      check(out.grad()[0][c].view(-1)[pix].item<double>(),
            (boundary_oracle(p, m_in, m_out) - boundary_oracle(m, m_in, m_out)) / (2 * h));
    }
  }
  return pass_if(worst <= 1e-4, fmt("%d partials, worst relative error %.2e (tol 1e-4, h 1e-4), %d kink points skipped",
                                    compared, worst, skipped));
}

Outcome morphology() {
  constexpr int kSide = 12;
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> density(0.1, 0.9);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const auto m = random_mask(rng, kSide, kSide, density(rng));
    const auto bits = bits_of(m);
    for (int r : {1, 2, 3}) {
      mismatches += bits_of(dilate(m, r)) != dilate_oracle(bits, kSide, kSide, r);
      mismatches += bits_of(erode(m, r)) != erode_oracle(bits, kSide, kSide, r);
      const auto got = build_regions(m, r);
      const auto want = regions_oracle(bits, kSide, kSide, r);
      mismatches += bits_of(got.m_in) != want.m_in;
      mismatches += bits_of(got.m_out) != want.m_out;
      mismatches += bits_of(got.m_dilated) != want.m_dilated;
      mismatches += bits_of(got.umbra) != want.umbra;
      mismatches += bits_of(got.nonshadow) != want.nonshadow;
    }
  }
  return pass_if(mismatches == 0, fmt("100 masks x radii {1,2,3}, %d mismatching outputs", mismatches));
}

Outcome range_guarantees() {
  constexpr int kN = 16;
  torch::manual_seed(404);
  ModelBundle models(ModelConfig::preset_named("desk", kN));
  models.eval();
  torch::NoGradGuard ng;
  int violations = 0;
  double w_lo = 1e9, w_hi = -1e9, b_abs = 0, a_lo = 1e9, a_hi = -1e9, d_lo = 1e9, d_hi = -1e9;
  const double b_max = 25.0 / 255.0;
  for (int t = 0; t < 1000; ++t) {
    const double scale = 0.05 * std::pow(10.0, (t % 4));  // weights from tiny to huge
    for (auto* mod : {static_cast<torch::nn::Module*>(models.param_net.get()),
                      static_cast<torch::nn::Module*>(models.matte_net.get()),
                      static_cast<torch::nn::Module*>(models.d_net.get())}) {
      for (auto& p : mod->parameters()) p.normal_(0.0, scale);
    }
    auto patch = torch::rand({2, 3, kN, kN});
    auto mask = (torch::rand({2, 1, kN, kN}) > 0.5).to(torch::kFloat32);
    const auto g = run_generator(models, patch, mask);
    const auto w = g.params.slice(1, 0, 3), b = g.params.slice(1, 3, 6);
    const auto d = models.d_net->forward(g.output);
    w_lo = std::min(w_lo, w.min().item<double>());
    w_hi = std::max(w_hi, w.max().item<double>());
    b_abs = std::max(b_abs, b.abs().max().item<double>());
    a_lo = std::min(a_lo, g.alpha.min().item<double>());
    a_hi = std::max(a_hi, g.alpha.max().item<double>());
    d_lo = std::min(d_lo, d.min().item<double>());
    d_hi = std::max(d_hi, d.max().item<double>());
    violations += w.min().item<double>() < 1.0 || w.max().item<double>() > 10.0;
    violations += b.abs().max().item<double>() > b_max * (1 + 1e-6);
    violations += g.alpha.min().item<double>() < 0.0 || g.alpha.max().item<double>() > 1.0;
    violations += !(d.min().item<double>() > 0.0) || !(d.max().item<double>() < 1.0);
  }
  return pass_if(violations == 0,
                 fmt("1000 passes: w in [%.4f, %.4f], |b|*255 <= %.3f, alpha in [%.3g, %.3g], D in [%.3g, %.3g]",
                     w_lo, w_hi, b_abs * 255, a_lo, a_hi, d_lo, d_hi));
}

Outcome grid_arithmetic() {
  RasterImage img(480, 640, 0.5f);
  ShadowMask mask(480, 640);
  for (int y = 100; y < 300; ++y)
    for (int x = 200; x < 500; ++x) mask.set(y, x, true);
  const auto a = crop_grid(img, mask, 128, 32);
  const auto b = crop_grid(img, mask, 128, 32);
  bool same = a.size() == b.size();
  bool row_major = true;
  for (std::size_t i = 0; same && i < a.size(); ++i) {
    same = a[i].top == b[i].top && a[i].left == b[i].left && a[i].label == b[i].label;
    if (i > 0) {
      row_major &= a[i - 1].top < a[i].top || (a[i - 1].top == a[i].top && a[i - 1].left < a[i].left);
    }
  }
  return pass_if(a.size() == 204 && same && row_major,
                 fmt("%zu patches (want 204), repeatable %s, row-major %s", a.size(), same ? "yes" : "no",
                     row_major ? "yes" : "no"));
}

Outcome synthetic_recovery() {
  // 200 images, 160 for training and 40 held out; desk networks on 32 x 32
  // patches, every other setting at its default.
  constexpr int kImages = 200, kTrain = 160, kN = 32, kStride = 8, kSteps = 2000;
  const auto t0 = std::chrono::steady_clock::now();
  const auto set = make_synthetic_set(kImages, 2024);
  std::vector<SyntheticSample> held(set.begin() + kTrain, set.end());
  PatchDataset data(kN, kDefaultMorphRadius);
  std::vector<PatchRef> refs;
  for (int i = 0; i < kTrain; ++i) {
    const auto r = data.add_image(set[i].id, set[i].shadowed, set[i].mask, kStride);
    refs.insert(refs.end(), r.begin(), r.end());
  }
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_steps = kSteps;
  cfg.seed = 1;
  torch::manual_seed(cfg.seed);
  TrainState state(ModelBundle(ModelConfig::preset_named("desk", kN)), cfg);
  train(state, data, refs, {});
  const auto m = evaluate_recovery(state.models(), held, kStride, 0.15);
  const double ratio = m.rmse_input > 0 ? m.rmse_output / m.rmse_input : 1.0;
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  const bool ok = m.pass_fraction() >= 0.80 && ratio < 0.25;
  return pass_if(ok, fmt("%lld steps; w within 15%% on %.1f%% of %zu held-out B patches (need 80%%), median rel err "
                         "%.3f, mean signed %+.3f; shadow RMSE %.2f -> %.2f, ratio %.3f (need < 0.25); %.1f min",
                         static_cast<long long>(state.step), 100.0 * m.pass_fraction(), m.boundary_patches,
                         m.median_rel_error, m.mean_signed_error, m.rmse_input, m.rmse_output, ratio, minutes));
}

Outcome inference_identity() {
  constexpr int kN = 16;
  torch::manual_seed(505);
  ModelBundle models(ModelConfig::preset_named("desk", kN));
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int> side(kN, 64);
  int empty_bad = 0, outside_bad = 0;
  std::size_t checked = 0;
  for (int t = 0; t < 20; ++t) {
    const int h = side(rng), w = side(rng);
    const auto img = random_image(rng, h, w);
    if (!(remove_shadow(models, img, ShadowMask(h, w)).output == img)) ++empty_bad;
    const auto mask = t % 2 ? random_blob(rng, h, w) : random_mask(rng, h, w, 0.02);
    const auto r = remove_shadow(models, img, mask);
    const auto regions = build_regions(mask, kDefaultMorphRadius);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!regions.nonshadow.at(y, x)) continue;
        ++checked;
        for (int c = 0; c < 3; ++c) outside_bad += r.output.at(y, x, c) != img.at(y, x, c);
      }
  }
  return pass_if(empty_bad == 0 && outside_bad == 0,
                 fmt("20 images: %d empty-mask outputs differ, %d of %zu non-shadow pixel values differ", empty_bad,
                     outside_bad, checked * 3));
}

Outcome rmse_decomposition() {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> side(8, 300);
  double worst = 0.0;
  for (int t = 0; t < 40; ++t) {
    const int h = side(rng), w = side(rng);
    const auto a = random_image(rng, h, w), b = random_image(rng, h, w);
    const auto m = t % 2 ? random_blob(rng, h, w) : random_mask(rng, h, w, 0.3);
    for (int resize : {kEvalSide, 0}) {
      const auto r = rmse_lab(a, b, m, {.resize = resize});
      const double s = r.shadow.value_or(0.0), n = r.nonshadow.value_or(0.0);
      const double lhs = r.all * r.all * static_cast<double>(r.n_all);
      const double rhs = s * s * static_cast<double>(r.n_shadow) + n * n * static_cast<double>(r.n_nonshadow);
      worst = std::max(worst, std::fabs(lhs - rhs) / lhs);
    }
  }
  return pass_if(worst <= 1e-6, fmt("80 evaluations, worst relative gap %.2e (tol 1e-6)", worst));
}

std::optional<fs::path> env_dir(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

Outcome istd_calibration() {
  // ISTD_ROOT/test_A (shadow images), test_B (masks) and the adjusted ground
  // truth in test_C_fixed_official (or test_C).
  const auto root = env_dir("ISTD_ROOT");
  if (!root) return {Status::Skip, "ISTD_ROOT not set"};
  fs::path gt = *root / "test_C_fixed_official";
  if (!fs::is_directory(gt)) gt = *root / "test_C";
  const auto rep = eval_istd(*root / "test_A", gt, *root / "test_B");
  if (!rep.rmse_shadow || !rep.rmse_nonshadow || !rep.rmse_all) return {Status::Fail, "no images evaluated"};
  const double s = *rep.rmse_shadow, n = *rep.rmse_nonshadow, a = *rep.rmse_all;
  const bool ok = std::fabs(s - 40.2) <= 0.5 && std::fabs(n - 2.6) <= 0.5 && std::fabs(a - 8.5) <= 0.5;
  return pass_if(ok, fmt("%zu images: (%.2f, %.2f, %.2f) vs (40.2, 2.6, 8.5) +-0.5", rep.per_image.size(), s, n, a));
}

Outcome video_calibration() {
  // VIDEO_ROOT/<video>/ holds the frames of each video.
  const auto root = env_dir("VIDEO_ROOT");
  if (!root) return {Status::Skip, "VIDEO_ROOT not set"};
  std::vector<VideoEntry> entries;
  for (const auto& e : fs::directory_iterator(*root)) {
    if (!e.is_directory()) continue;
    const fs::path frames_dir = fs::is_directory(e.path() / "frames") ? e.path() / "frames" : e.path();
    const auto frames = load_frames(frames_dir);
    const auto gt = build_video_pseudo_gt(frames);
    entries.push_back({e.path().filename().string(), eval_video(frames, gt)});
  }
  const auto rep = summarize_videos(entries);
  if (!rep.rmse) return {Status::Fail, "no usable video"};
  return pass_if(std::fabs(*rep.rmse - 32.9) <= 1.0,
                 fmt("%zu videos: %.2f vs 32.9 +-1.0", entries.size(), *rep.rmse));
}

Outcome ablation_harness() {
  constexpr int kN = 16;
  TempDir dir;
  SyntheticOptions so;
  so.size = 32;
  PatchDataset data(kN, 1);
  std::vector<PatchRef> refs;
  for (const auto& s : make_synthetic_set(4, 9, so)) {
    const auto r = data.add_image(s.id, s.shadowed, s.mask, 8);
    refs.insert(refs.end(), r.begin(), r.end());
  }
  std::set<std::string> configs;
  int wrong = 0;
  const std::vector<std::string> names{"bounds", "bd", "mat", "sm", "gan"};
  for (const auto& name : names) {
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_steps = 1;
    cfg.radius = 1;
    cfg.ablate.enable(name);
    torch::manual_seed(0);
    TrainState state(ModelBundle(ModelConfig::preset_named("desk", kN)), cfg);
    TrainOptions o;
    o.out_dir = dir / name;
    train(state, data, refs, o);
    std::ifstream f(o.out_dir / "config.json");
    const auto j = nlohmann::json::parse(f);
    configs.insert(j.at("train").dump());
    const auto& eff = j.at("train").at("effective_weights");
    const auto& ab = j.at("train").at("ablate");
    wrong += ab.size() != 1 || ab[0] != name;
    if (name == "bounds") wrong += j.at("train").at("effective_bounds").at("w_min").get<double>() != -10.0;
    if (name == "bd") wrong += eff.at("lambda_bd").get<double>() != 0.0;
    if (name == "mat") wrong += eff.at("lambda_mat").get<double>() != 0.0;
    if (name == "sm") wrong += eff.at("lambda_sm").get<double>() != 0.0;
    if (name == "gan") wrong += eff.at("lambda_adv").get<double>() != 0.0;
    wrong += !fs::exists(o.out_dir / "train_log.jsonl");
  }
  return pass_if(configs.size() == names.size() && wrong == 0,
                 fmt("%zu configurations ran, %zu distinct logged configs, %d inconsistencies", names.size(),
                     configs.size(), wrong));
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  const std::vector<Criterion> criteria{
      {"loss_oracle", loss_oracle},
      {"gradient_checks", gradient_checks},
      {"morphology", morphology},
      {"range_guarantees", range_guarantees},
      {"grid_arithmetic", grid_arithmetic},
      {"synthetic_recovery", synthetic_recovery},
      {"inference_identity", inference_identity},
      {"rmse_decomposition", rmse_decomposition},
      {"istd_calibration", istd_calibration},
      {"video_calibration", video_calibration},
      {"ablation_harness", ablation_harness},
  };
  std::set<std::string> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--only") only.insert(argv[++i]);
  }
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.name)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::printf("%s %-20s %s\n", tag, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.status == Status::Fail;
  }
  return failed ? 1 : 0;
}
