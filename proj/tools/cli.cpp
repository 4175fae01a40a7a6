#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include "deshadow/checkpoint.hpp"
#include "deshadow/errors.hpp"
#include "deshadow/evaluation.hpp"
#include "deshadow/inference.hpp"
#include "deshadow/patches.hpp"
#include "deshadow/tensor_ops.hpp"

#ifndef DESHADOW_GIT_DESCRIBE
#define DESHADOW_GIT_DESCRIBE "unknown"
#endif

namespace deshadow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const RunConfig& c) {
  j = {{"paths",
        {{"images", c.paths.images},
         {"masks", c.paths.masks},
         {"manifest", c.paths.manifest},
         {"ckpt", c.paths.ckpt},
         {"out", c.paths.out},
         {"gt", c.paths.gt},
         {"frames", c.paths.frames}}},
       {"patch_size", c.patch_size},
       {"stride", c.stride},
       {"radius", c.radius},
       {"epsilon", c.epsilon},
       {"preset", c.preset},
       {"seed", c.seed},
       {"workers", c.workers},
       {"train", c.train}};
}

void apply_json(RunConfig& c, const json& j) {
  static const std::vector<std::string> kKeys = {"paths",   "patch_size", "stride",
                                                 "radius",  "epsilon",    "preset",
                                                 "seed",    "workers",    "train"};
  static const std::vector<std::string> kPathKeys = {"images", "masks", "manifest", "ckpt",
                                                     "out",    "gt",    "frames"};
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("unknown config key: " + key);
    }
  }
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      for (const auto& [key, _] : p.items()) {
        if (std::find(kPathKeys.begin(), kPathKeys.end(), key) == kPathKeys.end()) {
          throw ConfigError("unknown config path: " + key);
        }
      }
      c.paths.images = p.value("images", c.paths.images);
      c.paths.masks = p.value("masks", c.paths.masks);
      c.paths.manifest = p.value("manifest", c.paths.manifest);
      c.paths.ckpt = p.value("ckpt", c.paths.ckpt);
      c.paths.out = p.value("out", c.paths.out);
      c.paths.gt = p.value("gt", c.paths.gt);
      c.paths.frames = p.value("frames", c.paths.frames);
    }
    c.patch_size = j.value("patch_size", c.patch_size);
    c.stride = j.value("stride", c.stride);
    c.radius = j.value("radius", c.radius);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.preset = j.value("preset", c.preset);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

void apply_overrides(RunConfig& c, const RunOverrides& o) {
  auto set = [](auto& field, const auto& value) {
    if (value) field = *value;
  };
  set(c.paths.images, o.images);
  set(c.paths.masks, o.masks);
  set(c.paths.manifest, o.manifest);
  set(c.paths.ckpt, o.ckpt);
  set(c.paths.out, o.out);
  set(c.paths.gt, o.gt);
  set(c.paths.frames, o.frames);
  set(c.patch_size, o.patch_size);
  set(c.stride, o.stride);
  set(c.radius, o.radius);
  set(c.workers, o.workers);
  set(c.epsilon, o.epsilon);
  set(c.preset, o.preset);
  set(c.seed, o.seed);
  set(c.train.epochs, o.epochs);
  set(c.train.batch_size, o.batch);
  for (const auto& name : o.ablate) c.train.ablate.enable(name);
}

std::optional<fs::path> config_path(const std::optional<fs::path>& config_flag) {
  if (config_flag) return config_flag;
  if (const char* env = std::getenv(kConfigEnv); env && *env) return fs::path(env);
  return std::nullopt;
}

RunConfig resolve_config(const std::optional<fs::path>& config_flag,
                         const RunOverrides& overrides) {
  RunConfig c;
  if (const auto path = config_path(config_flag)) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot read config file: " + path->string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("malformed config file " + path->string() + ": " + e.what());
    }
    apply_json(c, j);
  }
  apply_overrides(c, overrides);
  // The top-level seed and radius drive training too.
  c.train.seed = c.seed;
  c.train.radius = c.radius;
  if (c.patch_size < 8) throw ConfigError("patch size must be >= 8");
  if (c.stride < 1) throw ConfigError("stride must be >= 1");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.epsilon < 0.0 || c.epsilon > 255.0) throw ConfigError("epsilon must lie in [0, 255]");
  if (c.preset != "paper" && c.preset != "desk") {
    throw ConfigError("unknown preset: " + c.preset + " (expected paper or desk)");
  }
  c.train.validate();
  return c;
}

namespace {

struct Invocation {
  std::string command;
  std::vector<std::string> args;
  RunConfig config;
};

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return e == ".jpeg" ? ".jpg" : e;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required ") + flag);
}

void require_dir(const std::string& value, const char* flag) {
  require(value, flag);
  std::error_code ec;
  if (!fs::is_directory(value, ec)) {
    throw IoError(std::string(flag) + " is not a directory: " + value);
  }
}

void require_file(const std::string& value, const char* flag) {
  require(value, flag);
  std::error_code ec;
  if (!fs::is_regular_file(value, ec)) throw IoError(std::string(flag) + " not found: " + value);
}

fs::path dir_of(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_run_record(const fs::path& dir, const Invocation& inv, const json& extra = {}) {
  json j = {{"command", inv.command},
            {"args", inv.args},
            {"config", inv.config},
            {"git_describe", DESHADOW_GIT_DESCRIBE},
            {"seed", inv.config.seed}};
  if (!extra.is_null()) j["result"] = extra;
  write_json(dir / "run.json", j);
}

RasterImage product(const RasterImage& img, const MatteLayer& matte, bool complement) {
  RasterImage out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float a = complement ? 1.0f - matte.at(y, x) : matte.at(y, x);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c) * a;
    }
  }
  return out;
}

void save_matte(const MatteLayer& matte, const fs::path& path) {
  std::vector<float> values(static_cast<std::size_t>(matte.height()) * matte.width());
  for (int y = 0; y < matte.height(); ++y) {
    for (int x = 0; x < matte.width(); ++x) {
      values[static_cast<std::size_t>(y) * matte.width() + x] = matte.at(y, x);
    }
  }
  save_gray(values, matte.height(), matte.width(), path);
}

// ---------------------------------------------------------------------------

int run_build_patches(const Invocation& inv) {
  const RunConfig& c = inv.config;
  require_dir(c.paths.images, "--images");
  require_dir(c.paths.masks, "--masks");
  require(c.paths.manifest, "--out");
  const PatchManifest m =
      build_manifest(c.paths.images, c.paths.masks, c.patch_size, c.stride, c.workers);
  for (const auto& e : m.errors) std::cerr << json{{"warning", e}}.dump() << '\n';
  write_manifest(m, c.paths.manifest);
  const json summary = {{"manifest", c.paths.manifest},
                        {"images", m.sources.size()},
                        {"counts",
                         {{"N", m.counts.non_shadow},
                          {"B", m.counts.boundary},
                          {"F", m.counts.full_shadow}}},
                        {"total", m.counts.total()},
                        {"skipped", m.errors.size()}};
  std::cout << summary.dump() << '\n';
  write_run_record(dir_of(c.paths.manifest), inv, summary);
  return kOk;
}

struct TrainFlags {
  std::optional<int> checkpoint_every;
  std::optional<std::int64_t> max_steps;
  std::optional<int> lr_decay_start;
  std::optional<std::string> adversarial;
  std::optional<std::string> resume;
};

int run_train(Invocation& inv, const TrainFlags& f) {
  RunConfig& c = inv.config;
  require_file(c.paths.manifest, "--manifest");
  require(c.paths.out, "--out");
  if (f.checkpoint_every) c.train.checkpoint_every = *f.checkpoint_every;
  if (f.max_steps) c.train.max_steps = *f.max_steps;
  if (f.lr_decay_start) c.train.lr_decay_start = *f.lr_decay_start;
  if (f.adversarial) c.train.adversarial = parse_adversarial_mode(*f.adversarial);
  c.train.validate();

  const PatchManifest manifest = read_manifest(c.paths.manifest);
  c.patch_size = manifest.size;
  TrainOptions opts;
  opts.out_dir = c.paths.out;
  TrainResult result;
  if (f.resume) {
    TrainState state = TrainState::resume(*f.resume, c.train);
    const PatchDataset data = PatchDataset::from_manifest(manifest, c.train.radius);
    result = train(state, data, manifest.records, opts);
  } else {
    const ModelConfig model = ModelConfig::preset_named(c.preset, manifest.size);
    result = train(manifest, model, c.train, opts);
  }
  json summary = {{"checkpoint", result.checkpoint.string()}, {"steps", result.steps}};
  if (!result.records.empty()) summary["last"] = to_json(result.records.back());
  std::cout << summary.dump() << '\n';
  write_run_record(c.paths.out, inv, summary);
  return kOk;
}

struct RemoveFlags {
  bool dump_matte = false;
  bool dump_params = false;
  bool dump_relit = false;
  bool score_after_override = false;
  std::optional<int> stride;
  int batch = 32;
};

json remove_one(ModelBundle& models, const fs::path& image_path, const fs::path& mask_path,
                const fs::path& out_path, const RemoveFlags& f, int radius) {
  const RasterImage img = load_image(image_path);
  const ShadowMask mask = load_mask(mask_path);
  if (!mask.same_shape(img)) {
    throw FormatError("mask " + mask_path.string() + " does not match image " +
                      image_path.string());
  }
  InferenceOptions opts;
  opts.stride = f.stride.value_or(0);
  opts.score_after_override = f.score_after_override;
  opts.batch = f.batch;
  opts.radius = radius;
  const RemovalResult r = remove_shadow(models, img, mask, opts);

  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  if (r.empty_mask && lower_ext(image_path) == lower_ext(out_path)) {
    fs::copy_file(image_path, out_path, fs::copy_options::overwrite_existing);
  } else {
    save_image(r.output, out_path);
  }
  const fs::path base = dir_of(out_path) / out_path.stem();
  if (f.dump_matte) save_matte(r.matte, base.string() + "_matte.png");
  if (f.dump_relit) save_image(r.relit, base.string() + "_relit.png");
  json meta = to_json(r);
  meta["image"] = image_path.string();
  meta["output"] = out_path.string();
  if (f.dump_params) write_json(base.string() + "_params.json", meta);
  if (r.fallback) {
    std::cerr << json{{"warning", "no boundary patch on the grid; used the largest-overlap patch"},
                      {"image", image_path.string()}}
                     .dump()
              << '\n';
  }
  return {{"image", image_path.string()},
          {"output", out_path.string()},
          {"fallback", r.fallback},
          {"empty_mask", r.empty_mask},
          {"patches", r.estimates.size()}};
}

int run_remove(const Invocation& inv, const RemoveFlags& f) {
  const RunConfig& c = inv.config;
  require(c.paths.images, "--image");
  require(c.paths.masks, "--mask");
  require_file(c.paths.ckpt, "--ckpt");
  require(c.paths.out, "--out");
  ModelBundle models = load_models(c.paths.ckpt);
  json results = json::array();
  fs::path run_dir;
  if (fs::is_directory(c.paths.images)) {
    require_dir(c.paths.masks, "--mask");
    fs::create_directories(c.paths.out);
    std::map<std::string, fs::path> masks;
    for (const auto& m : list_images(c.paths.masks)) masks[m.stem().string()] = m;
    for (const auto& img : list_images(c.paths.images)) {
      const auto it = masks.find(img.stem().string());
      if (it == masks.end()) {
        std::cerr << json{{"warning", "no mask for image"}, {"image", img.string()}}.dump()
                  << '\n';
        continue;
      }
      const fs::path out = fs::path(c.paths.out) / (img.stem().string() + ".png");
      results.push_back(remove_one(models, img, it->second, out, f, c.radius));
    }
    run_dir = c.paths.out;
  } else {
    require_file(c.paths.images, "--image");
    require_file(c.paths.masks, "--mask");
    results.push_back(remove_one(models, c.paths.images, c.paths.masks, c.paths.out, f, c.radius));
    run_dir = dir_of(c.paths.out);
  }
  std::cout << results.dump() << '\n';
  write_run_record(run_dir, inv);
  return kOk;
}

struct EvalFlags {
  std::string pred;
  bool native = false;
  bool pooled = false;
  bool per_channel = false;
  std::string report;
};

int run_eval_istd(const Invocation& inv, const EvalFlags& f) {
  const RunConfig& c = inv.config;
  require_dir(f.pred, "--pred");
  require_dir(c.paths.gt, "--gt");
  require_dir(c.paths.masks, "--masks");
  RmseOptions opts;
  if (f.native) opts.resize = 0;
  const RmseReport report =
      eval_istd(f.pred, c.paths.gt, c.paths.masks, opts,
                f.pooled ? Aggregation::Pooled : Aggregation::PerImageMean);
  const json j = to_json(report, f.per_channel);
  std::cout << j.dump(2) << '\n';
  if (!f.report.empty()) {
    write_json(f.report, j);
    write_run_record(dir_of(f.report), inv);
  }
  return kOk;
}

int run_video_pseudo_gt(const Invocation& inv) {
  const RunConfig& c = inv.config;
  require_dir(c.paths.frames, "--frames");
  require(c.paths.out, "--out");
  const VideoPseudoGT gt =
      build_video_pseudo_gt(fs::path(c.paths.frames), static_cast<float>(c.epsilon / 255.0));
  save_pseudo_gt(gt, c.paths.out);
  const json summary = {{"frames", gt.frame_count},
                        {"moving_pixels", gt.moving_mask.count()},
                        {"epsilon", c.epsilon}};
  std::cout << summary.dump() << '\n';
  write_run_record(c.paths.out, inv, summary);
  return kOk;
}

struct VideoFlags {
  std::vector<std::string> preds;
  std::vector<std::string> gts;
  std::string report;
  int resize = 0;
};

int run_eval_video(const Invocation& inv, const VideoFlags& f) {
  if (f.preds.empty()) throw ConfigError("missing required --pred");
  if (f.preds.size() != f.gts.size()) {
    throw ConfigError("--pred and --gt must be given the same number of times");
  }
  std::vector<VideoEntry> entries;
  for (std::size_t i = 0; i < f.preds.size(); ++i) {
    require_dir(f.preds[i], "--pred");
    require_dir(f.gts[i], "--gt");
    const auto frames = load_frames(f.preds[i]);
    const VideoPseudoGT gt = load_pseudo_gt(f.gts[i]);
    VideoEntry e{fs::path(f.gts[i]).filename().string(),
                 eval_video(frames, gt, RmseOptions{.resize = f.resize})};
    if (!e.score.warning.empty()) {
      std::cerr << json{{"warning", e.score.warning}, {"video", e.name}}.dump() << '\n';
    }
    entries.push_back(std::move(e));
  }
  const json j = to_json(summarize_videos(std::move(entries)));
  std::cout << j.dump(2) << '\n';
  if (!f.report.empty()) {
    write_json(f.report, j);
    write_run_record(dir_of(f.report), inv);
  }
  return kOk;
}

struct FinetuneFlags {
  int epochs = 1;
  std::optional<std::int64_t> max_steps;
};

int run_finetune(const Invocation& inv, const FinetuneFlags& f, const RunOverrides& o) {
  const RunConfig& c = inv.config;
  require_file(c.paths.ckpt, "--ckpt");
  require_dir(c.paths.frames, "--frames");
  require_dir(c.paths.masks, "--masks");
  FinetuneOptions opts;
  opts.epochs = f.epochs;
  opts.batch_size = o.batch;
  opts.seed = c.seed;
  opts.max_steps = f.max_steps;
  if (!c.paths.out.empty()) opts.output = c.paths.out;
  const fs::path out = finetune_on_video(c.paths.ckpt, c.paths.frames, c.paths.masks, opts);
  const json summary = {{"checkpoint", out.string()}, {"epochs", f.epochs}};
  std::cout << summary.dump() << '\n';
  write_run_record(dir_of(out), inv, summary);
  return kOk;
}

struct DecomposeFlags {
  std::optional<int> top;
  std::optional<int> left;
};

int run_decompose(const Invocation& inv, const DecomposeFlags& f) {
  const RunConfig& c = inv.config;
  require_file(c.paths.images, "--image");
  require_file(c.paths.masks, "--mask");
  require_file(c.paths.ckpt, "--ckpt");
  require(c.paths.out, "--out");
  ModelBundle models = load_models(c.paths.ckpt);
  RasterImage img = load_image(c.paths.images);
  ShadowMask mask = load_mask(c.paths.masks);
  if (!mask.same_shape(img)) throw FormatError("mask does not match image");

  RasterImage relit = img;
  MatteLayer matte;
  RasterImage output = img;
  json meta;
  if (f.top || f.left) {
    // One patch straight from the networks, without any aggregation.
    const int n = models.config.patch_size;
    const int top = f.top.value_or(0);
    const int left = f.left.value_or(0);
    if (top < 0 || left < 0 || top + n > img.height() || left + n > img.width()) {
      throw std::invalid_argument("patch at (" + std::to_string(top) + ", " +
                                  std::to_string(left) + ") does not fit the image");
    }
    img = img.crop(top, left, n, n);
    mask = mask.crop(top, left, n, n);
    torch::NoGradGuard no_grad;
    models.eval();
    const auto g = run_generator(models, to_tensor(img).unsqueeze(0), to_tensor(mask).unsqueeze(0),
                                 false);
    relit = image_from_tensor(g.relit[0]);
    matte = matte_from_tensor(g.alpha[0]);
    output = image_from_tensor(g.output[0]);
    meta = {{"params", params_from_tensor(g.params[0])},
            {"critic_score", models.d_net->forward(g.output)[0].item<double>()},
            {"top", top},
            {"left", left}};
  } else {
    const RemovalResult r = remove_shadow(models, img, mask, InferenceOptions{.radius = c.radius});
    relit = r.relit;
    matte = r.matte;
    output = r.output;
    meta = to_json(r);
  }
  const fs::path dir = c.paths.out;
  fs::create_directories(dir);
  save_image(img, dir / "input.png");
  save_matte(matte, dir / "alpha.png");
  save_image(relit, dir / "relit.png");
  save_image(product(relit, matte, false), dir / "relit_x_alpha.png");
  save_image(product(img, matte, true), dir / "shadow_x_one_minus_alpha.png");
  save_image(output, dir / "output.png");
  write_json(dir / "decomposition.json", meta);
  std::cout << meta.dump() << '\n';
  write_run_record(dir, inv);
  return kOk;
}

int report_error(const std::string& command, const char* type, const std::string& message,
                 int code) {
  std::cerr << json{{"error", {{"command", command}, {"type", type}, {"message", message}}}}.dump()
            << '\n';
  return code;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Weakly-supervised shadow removal from shadow images and masks", "deshadow"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<fs::path> config_flag;
  RunOverrides o;
  app.add_option("--config", config_flag,
                 std::string("JSON config file (default: $") + kConfigEnv + ")");
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* build = app.add_subcommand("build-patches", "Grid image/mask pairs into a patch manifest");
  build->add_option("--images", o.images, "Shadow image directory");
  build->add_option("--masks", o.masks, "Shadow mask directory (same file stems)");
  build->add_option("--out", o.manifest, "Manifest file (JSON lines)");
  build->add_option("--size", o.patch_size, "Patch size n");
  build->add_option("--stride", o.stride, "Grid stride m");

  TrainFlags tf;
  auto* trn = app.add_subcommand("train", "Train the three networks on a manifest");
  trn->add_option("--manifest", o.manifest, "Patch manifest");
  trn->add_option("--out", o.out, "Run directory");
  trn->add_option("--epochs", o.epochs, "Epochs");
  trn->add_option("--batch", o.batch, "Batch size");
  trn->add_option("--preset", o.preset, "Network scale")->check(CLI::IsMember({"paper", "desk"}));
  trn->add_option("--ablate", o.ablate, "Disable one component (repeatable)")
      ->check(CLI::IsMember({"bounds", "bd", "mat", "sm", "gan"}));
  trn->add_option("--radius", o.radius, "Penumbra band radius");
  trn->add_option("--checkpoint-every", tf.checkpoint_every, "Checkpoint every k epochs");
  trn->add_option("--max-steps", tf.max_steps, "Stop after this many steps");
  trn->add_option("--lr-decay-start", tf.lr_decay_start, "Epoch where linear decay starts");
  trn->add_option("--adversarial", tf.adversarial, "non-saturating or minimax");
  trn->add_option("--resume", tf.resume, "Continue from a checkpoint");

  RemoveFlags rf;
  auto* rem = app.add_subcommand("remove", "Remove shadows from an image (or a directory)");
  rem->add_option("--image", o.images, "Input image or directory");
  rem->add_option("--mask", o.masks, "Shadow mask or directory");
  rem->add_option("--ckpt", o.ckpt, "Checkpoint");
  rem->add_option("--out", o.out, "Output image or directory");
  rem->add_option("--stride", rf.stride, "Inference grid stride (default n/4)");
  rem->add_option("--batch", rf.batch, "Patches per forward pass");
  rem->add_option("--radius", o.radius, "Penumbra band radius");
  rem->add_flag("--dump-matte", rf.dump_matte, "Write <out>_matte.png");
  rem->add_flag("--dump-params", rf.dump_params, "Write <out>_params.json");
  rem->add_flag("--dump-relit", rf.dump_relit, "Write <out>_relit.png");
  rem->add_flag("--score-after-override", rf.score_after_override,
                "Score patches after the matte override");

  EvalFlags ef;
  auto* eist = app.add_subcommand("eval-istd", "LAB RMSE of predictions against ground truth");
  eist->add_option("--pred", ef.pred, "Prediction directory");
  eist->add_option("--gt", o.gt, "Shadow-free ground-truth directory");
  eist->add_option("--masks", o.masks, "Shadow mask directory");
  eist->add_flag("--native", ef.native, "Compare at native resolution instead of 256x256");
  eist->add_flag("--pooled", ef.pooled, "Pool pixels over the set instead of averaging images");
  eist->add_flag("--per-channel", ef.per_channel, "Report L, a, b separately");
  eist->add_option("--out", ef.report, "Report file");

  auto* vgt = app.add_subcommand("video-pseudo-gt", "Temporal max/min pseudo ground truth");
  vgt->add_option("--frames", o.frames, "Frame directory");
  vgt->add_option("--out", o.out, "Output directory");
  vgt->add_option("--epsilon", o.epsilon, "Moving-shadow threshold (8-bit units)");

  VideoFlags vf;
  auto* evid = app.add_subcommand("eval-video", "RMSE of predicted frames on moving shadows");
  evid->add_option("--pred", vf.preds, "Predicted frame directory (repeatable)");
  evid->add_option("--gt", vf.gts, "Pseudo ground-truth directory (repeatable)");
  evid->add_option("--resize", vf.resize, "Resize side before comparison (0 = native)");
  evid->add_option("--out", vf.report, "Report file");

  FinetuneFlags ff;
  auto* fin = app.add_subcommand("finetune", "Fine-tune a checkpoint on one video");
  fin->add_option("--ckpt", o.ckpt, "Checkpoint");
  fin->add_option("--frames", o.frames, "Frame directory");
  fin->add_option("--masks", o.masks, "Per-frame mask directory");
  fin->add_option("--epochs", ff.epochs, "Epochs")->check(CLI::NonNegativeNumber);
  fin->add_option("--batch", o.batch, "Batch size");
  fin->add_option("--max-steps", ff.max_steps, "Stop after this many steps");
  fin->add_option("--out", o.out, "Output checkpoint");

  DecomposeFlags df;
  auto* dec = app.add_subcommand("decompose", "Write the decomposition panels of an image");
  dec->add_option("--image", o.images, "Input image");
  dec->add_option("--mask", o.masks, "Shadow mask");
  dec->add_option("--ckpt", o.ckpt, "Checkpoint");
  dec->add_option("--out", o.out, "Output directory");
  dec->add_option("--top", df.top, "Decompose one patch at this row");
  dec->add_option("--left", df.left, "Decompose one patch at this column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << '\n';
    std::string message = e.what();
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
      message = std::string("unknown subcommand: ") + argv[1];
    }
    return report_error("", "UsageError", message, kUsage);
  }

  Invocation inv;
  inv.command = app.get_subcommands().front()->get_name();
  for (int i = 1; i < argc; ++i) inv.args.emplace_back(argv[i]);

  try {
    inv.config = resolve_config(config_flag, o);
    torch::manual_seed(inv.config.seed);
    torch::set_num_threads(inv.config.workers);
    if (inv.command == "build-patches") return run_build_patches(inv);
    if (inv.command == "train") return run_train(inv, tf);
    if (inv.command == "remove") return run_remove(inv, rf);
    if (inv.command == "eval-istd") return run_eval_istd(inv, ef);
    if (inv.command == "video-pseudo-gt") return run_video_pseudo_gt(inv);
    if (inv.command == "eval-video") return run_eval_video(inv, vf);
    if (inv.command == "finetune") return run_finetune(inv, ff, o);
    if (inv.command == "decompose") return run_decompose(inv, df);
    return report_error(inv.command, "UsageError", "unknown subcommand", kUsage);
  } catch (const IoError& e) {
    return report_error(inv.command, "IoError", e.what(), kIo);
  } catch (const FormatError& e) {
    return report_error(inv.command, "FormatError", e.what(), kFormat);
  } catch (const ConfigError& e) {
    return report_error(inv.command, "ConfigError", e.what(), kConfig);
  } catch (const TrainingError& e) {
    return report_error(inv.command, "TrainingError", e.what(), kTraining);
  } catch (const std::invalid_argument& e) {
    return report_error(inv.command, "ArgumentError", e.what(), kArgument);
  } catch (const std::exception& e) {
    return report_error(inv.command, "Error", e.what(), kFailure);
  }
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"deshadow"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace deshadow::cli
