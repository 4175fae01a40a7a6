#include "deshadow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "deshadow/errors.hpp"
#include "deshadow/tensor_ops.hpp"

namespace deshadow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double finite_or_throw(const torch::Tensor& t, const char* name) {
  const double v = t.item<double>();
  if (!std::isfinite(v)) {
    throw TrainingError(name, std::string("non-finite loss component: ") + name);
  }
  return v;
}

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, double lr,
                                              const TrainConfig& c) {
  return std::make_unique<torch::optim::Adam>(
      std::move(params), torch::optim::AdamOptions(lr).betas({c.beta1, c.beta2}));
}

}  // namespace

void AblationFlags::enable(const std::string& name) {
  if (name == "bounds") {
    bounds = true;
  } else if (name == "bd") {
    bd = true;
  } else if (name == "mat") {
    mat = true;
  } else if (name == "sm") {
    sm = true;
  } else if (name == "gan") {
    gan = true;
  } else {
    throw ConfigError("unknown ablation: " + name + " (expected bounds, bd, mat, sm, gan)");
  }
}

std::vector<std::string> AblationFlags::names() const {
  std::vector<std::string> out;
  if (bounds) out.emplace_back("bounds");
  if (bd) out.emplace_back("bd");
  if (mat) out.emplace_back("mat");
  if (sm) out.emplace_back("sm");
  if (gan) out.emplace_back("gan");
  return out;
}

void TrainConfig::validate() const {
  if (!(lr_matte_d > 0.0) || !(lr_param > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (batch_size < 2) throw ConfigError("batch size must be >= 2");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (radius < 1) throw ConfigError("morphology radius must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint cadence must be >= 0");
  const auto& w = weights;
  if (w.lambda_sm < 0 || w.lambda_mat < 0 || w.lambda_bd < 0 || w.lambda_adv < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (ablate.sm) w.lambda_sm = 0.0;
  if (ablate.mat) w.lambda_mat = 0.0;
  if (ablate.bd) w.lambda_bd = 0.0;
  if (ablate.gan) w.lambda_adv = 0.0;
  return w;
}

ParamBounds TrainConfig::effective_bounds() const {
  return ablate.bounds ? ParamBounds::unlimited() : ParamBounds::standard();
}

void to_json(json& j, const TrainConfig& c) {
  const LossWeights eff = c.effective_weights();
  const ParamBounds bounds = c.effective_bounds();
  j = {{"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"lr_matte_d", c.lr_matte_d},
       {"lr_param", c.lr_param},
       {"betas", {c.beta1, c.beta2}},
       {"weights",
        {{"lambda_sm", c.weights.lambda_sm},
         {"lambda_mat", c.weights.lambda_mat},
         {"lambda_bd", c.weights.lambda_bd},
         {"lambda_adv", c.weights.lambda_adv}}},
       {"effective_weights",
        {{"lambda_sm", eff.lambda_sm},
         {"lambda_mat", eff.lambda_mat},
         {"lambda_bd", eff.lambda_bd},
         {"lambda_adv", eff.lambda_adv}}},
       {"effective_bounds",
        {{"w_min", bounds.w_min}, {"w_max", bounds.w_max}, {"b_max", bounds.b_max}}},
       {"adversarial", to_string(c.adversarial)},
       {"ablate", c.ablate.names()},
       {"seed", c.seed},
       {"radius", c.radius},
       {"max_steps", c.max_steps},
       {"checkpoint_every", c.checkpoint_every},
       {"lr_decay_start", c.lr_decay_start ? json(*c.lr_decay_start) : json(nullptr)},
       {"pass_through_clamp", c.pass_through_clamp}};
}

void from_json(const json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lr_matte_d = j.value("lr_matte_d", c.lr_matte_d);
  c.lr_param = j.value("lr_param", c.lr_param);
  if (j.contains("betas")) {
    c.beta1 = j.at("betas").at(0).get<double>();
    c.beta2 = j.at("betas").at(1).get<double>();
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.lambda_sm = w.value("lambda_sm", c.weights.lambda_sm);
    c.weights.lambda_mat = w.value("lambda_mat", c.weights.lambda_mat);
    c.weights.lambda_bd = w.value("lambda_bd", c.weights.lambda_bd);
    c.weights.lambda_adv = w.value("lambda_adv", c.weights.lambda_adv);
  }
  if (j.contains("adversarial")) {
    c.adversarial = parse_adversarial_mode(j.at("adversarial").get<std::string>());
  }
  for (const auto& name : j.value("ablate", std::vector<std::string>{})) c.ablate.enable(name);
  c.seed = j.value("seed", c.seed);
  c.radius = j.value("radius", c.radius);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("lr_decay_start") && !j.at("lr_decay_start").is_null()) {
    c.lr_decay_start = j.at("lr_decay_start").get<int>();
  }
  c.pass_through_clamp = j.value("pass_through_clamp", c.pass_through_clamp);
}

PatchDataset::PatchDataset(int patch_size, int radius) : patch_size_(patch_size), radius_(radius) {
  if (patch_size < 1 || radius < 1) throw std::invalid_argument("invalid patch size or radius");
}

PatchDataset PatchDataset::from_manifest(const PatchManifest& manifest, int radius) {
  PatchDataset data(manifest.size, radius);
  for (const auto& src : manifest.sources) {
    data.add_source(src.image_id, load_image(manifest.image_path(src)),
                    load_mask(manifest.mask_path(src)));
  }
  return data;
}

void PatchDataset::add_source(const std::string& image_id, const RasterImage& img,
                              const ShadowMask& mask) {
  if (!mask.same_shape(img)) throw std::invalid_argument("mask does not match image " + image_id);
  auto image = (to_tensor(img) * 255.0).round().clamp(0, 255).to(torch::kUInt8);
  Source s{image_id, image, mask};
  auto it = std::lower_bound(sources_.begin(), sources_.end(), image_id,
                             [](const Source& a, const std::string& id) { return a.id < id; });
  if (it != sources_.end() && it->id == image_id) {
    throw std::invalid_argument("duplicate image id " + image_id);
  }
  sources_.insert(it, std::move(s));
}

std::vector<PatchRef> PatchDataset::add_image(const std::string& image_id, const RasterImage& img,
                                              const ShadowMask& mask, int stride) {
  add_source(image_id, img, mask);
  std::vector<PatchRef> refs;
  for (const auto& [top, left] :
       grid_positions(img.height(), img.width(), patch_size_, stride)) {
    refs.push_back({image_id, top, left, patch_size_,
                    label_for(mask.crop(top, left, patch_size_, patch_size_))});
  }
  return refs;
}

const PatchDataset::Source& PatchDataset::find(const std::string& id) const {
  auto it = std::lower_bound(sources_.begin(), sources_.end(), id,
                             [](const Source& a, const std::string& key) { return a.id < key; });
  if (it == sources_.end() || it->id != id) {
    throw std::invalid_argument("unknown image id in patch ref: " + id);
  }
  return *it;
}

PatchDataset::Batch PatchDataset::batch(std::span<const PatchRef> refs) const {
  const int n = patch_size_;
  const int r = radius_;
  std::vector<torch::Tensor> patches, masks, umbra, nonshadow, m_in, m_out;
  for (const auto& ref : refs) {
    const Source& src = find(ref.image_id);
    const int h = src.mask.height();
    const int w = src.mask.width();
    if (ref.top < 0 || ref.left < 0 || ref.top + n > h || ref.left + n > w) {
      throw std::invalid_argument("patch ref outside image " + ref.image_id);
    }
    patches.push_back(src.image.slice(1, ref.top, ref.top + n).slice(2, ref.left, ref.left + n));

    // Regions at a pixel depend only on the mask within `radius`, and a crop
    // clipped at the image edge keeps the frame-border behaviour of erosion.
    const int y0 = std::max(0, ref.top - r);
    const int x0 = std::max(0, ref.left - r);
    const int y1 = std::min(h, ref.top + n + r);
    const int x1 = std::min(w, ref.left + n + r);
    const RegionMasks full = build_regions(src.mask.crop(y0, x0, y1 - y0, x1 - x0), r);
    const RegionMasks reg = full.crop(ref.top - y0, ref.left - x0, n, n);
    masks.push_back(to_tensor(src.mask.crop(ref.top, ref.left, n, n)));
    umbra.push_back(to_tensor(reg.umbra));
    nonshadow.push_back(to_tensor(reg.nonshadow));
    m_in.push_back(to_tensor(reg.m_in));
    m_out.push_back(to_tensor(reg.m_out));
  }
  Batch b;
  b.patch = torch::stack(patches).to(torch::kFloat32) / 255.0;
  b.mask = torch::stack(masks);
  b.umbra = torch::stack(umbra);
  b.nonshadow = torch::stack(nonshadow);
  b.m_in = torch::stack(m_in);
  b.m_out = torch::stack(m_out);
  return b;
}

json to_json(const LossRecord& r) {
  return {{"step", r.step},   {"epoch", r.epoch},     {"l_mat", r.l_mat},
          {"l_sm", r.l_sm},   {"l_bd", r.l_bd},       {"l_adv", r.l_adv},
          {"l_total", r.l_total}, {"d_loss", r.d_loss}, {"bd_empty", r.bd_empty}};
}

TrainState::TrainState(ModelBundle models, TrainConfig config)
    : models_(std::move(models)), config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
  models_.config.bounds = config_.effective_bounds();
  optimizers_.param = make_adam(models_.param_net->parameters(), config_.lr_param, config_);
  optimizers_.matte = make_adam(models_.matte_net->parameters(), config_.lr_matte_d, config_);
  optimizers_.critic = make_adam(models_.d_net->parameters(), config_.lr_matte_d, config_);
}

void TrainState::set_learning_rates(double lr_param, double lr_matte_d) {
  set_lr(*optimizers_.param, lr_param);
  set_lr(*optimizers_.matte, lr_matte_d);
  set_lr(*optimizers_.critic, lr_matte_d);
}

void TrainState::save(const fs::path& path) {
  CheckpointInfo info;
  info.model_config = models_.config;
  info.train_config = config_;
  info.step = step;
  info.epoch = epoch;
  save_checkpoint(path, models_, &optimizers_, info);
}

TrainState TrainState::resume(const fs::path& checkpoint, const TrainConfig& config) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  TrainState state(load_models(checkpoint), config);
  load_optimizers(checkpoint, state.optimizers_);
  state.step = info.step;
  state.epoch = info.epoch;
  return state;
}

LossRecord train_step(TrainState& state, const PatchDataset::Batch& boundary,
                      const PatchDataset::Batch& real) {
  ModelBundle& m = state.models();
  OptimizerSet& opt = state.optimizers();
  const TrainConfig& cfg = state.config();
  m.train();

  const GeneratorOutput g =
      run_generator(m, boundary.patch, boundary.mask, cfg.pass_through_clamp);

  LossRecord rec;
  rec.step = state.step;
  rec.epoch = state.epoch;

  // Critic phase.
  set_requires_grad(*m.d_net, true);
  opt.critic->zero_grad();
  const auto d_loss =
      critic_loss(m.d_net->forward(real.patch), m.d_net->forward(g.output.detach()));
  rec.d_loss = finite_or_throw(d_loss, "d_loss");
  d_loss.backward();
  opt.critic->step();

  // Generator phase; the critic is frozen.
  set_requires_grad(*m.d_net, false);
  opt.param->zero_grad();
  opt.matte->zero_grad();
  LossParts parts;
  parts.l_adv = adversarial_loss_generator(m.d_net->forward(g.output), cfg.adversarial);
  parts.l_mat = matting_loss(g.alpha, boundary.umbra, boundary.nonshadow);
  parts.l_sm = smoothness_loss(g.alpha);
  const BoundaryLossResult bd = boundary_loss(g.output, boundary.m_in, boundary.m_out);
  parts.l_bd = bd.value;
  rec.bd_empty = bd.empty_patches;
  const auto total = total_generator_loss(parts, cfg.effective_weights());
  rec.l_adv = parts.l_adv.item<double>();
  rec.l_mat = parts.l_mat.item<double>();
  rec.l_sm = parts.l_sm.item<double>();
  rec.l_bd = parts.l_bd.item<double>();
  rec.l_total = finite_or_throw(total, "l_total");
  total.backward();
  opt.param->step();
  opt.matte->step();
  set_requires_grad(*m.d_net, true);

  ++state.step;
  return rec;
}

std::int64_t steps_per_epoch(std::size_t boundary_count, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  return static_cast<std::int64_t>((boundary_count + static_cast<std::size_t>(batch_size) - 1) /
                                   static_cast<std::size_t>(batch_size));
}

TrainResult train(TrainState& state, const PatchDataset& data, std::span<const PatchRef> refs,
                  const TrainOptions& options) {
  const TrainConfig& cfg = state.config();
  if (data.patch_size() != state.models().config.patch_size) {
    throw ConfigError("checkpoint patch size " + std::to_string(state.models().config.patch_size) +
                      " differs from data patch size " + std::to_string(data.patch_size()));
  }
  std::vector<PatchRef> boundary, lit;
  for (const auto& r : refs) {
    if (r.label == PatchLabel::Boundary) boundary.push_back(r);
    if (r.label == PatchLabel::NonShadow) lit.push_back(r);
  }
  if (boundary.empty()) throw ConfigError("no boundary (B) patches to train on");
  if (lit.empty()) throw ConfigError("no non-shadow (N) patches for the critic");

  TrainResult result;
  const bool write = !options.out_dir.empty();
  std::ofstream log;
  if (write) {
    fs::create_directories(options.out_dir);
    const fs::path log_path = options.log_path.value_or(options.out_dir / "train_log.jsonl");
    log.open(log_path, std::ios::app);
    if (!log) throw IoError("cannot open training log: " + log_path.string());
    std::ofstream cfg_file(options.out_dir / "config.json");
    cfg_file << json{{"train", cfg}, {"model", state.models().config}}.dump(2) << '\n';
  }

  const double lr_param = cfg.lr_param;
  const double lr_matte = cfg.lr_matte_d;
  const std::int64_t per_epoch = steps_per_epoch(boundary.size(), cfg.batch_size);
  std::size_t lit_cursor = lit.size();
  bool stop = false;

  while (!stop && state.epoch < cfg.epochs) {
    if (cfg.lr_decay_start && state.epoch >= *cfg.lr_decay_start &&
        cfg.epochs > *cfg.lr_decay_start) {
      const double span = cfg.epochs - *cfg.lr_decay_start;
      const double scale = std::max(0.0, 1.0 - (state.epoch - *cfg.lr_decay_start) / span);
      state.set_learning_rates(lr_param * scale, lr_matte * scale);
    }
    std::shuffle(boundary.begin(), boundary.end(), state.rng());
    for (std::int64_t i = 0; i < per_epoch; ++i) {
      const std::size_t begin = static_cast<std::size_t>(i) * static_cast<std::size_t>(cfg.batch_size);
      const std::size_t end = std::min(boundary.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<PatchRef> reals;
      while (reals.size() < end - begin) {
        if (lit_cursor >= lit.size()) {
          std::shuffle(lit.begin(), lit.end(), state.rng());
          lit_cursor = 0;
        }
        reals.push_back(lit[lit_cursor++]);
      }
      const auto b_batch = data.batch(std::span(boundary).subspan(begin, end - begin));
      const auto n_batch = data.batch(reals);
      const LossRecord rec = train_step(state, b_batch, n_batch);
      result.records.push_back(rec);
      if (log.is_open()) log << to_json(rec).dump() << '\n' << std::flush;
      if (options.on_step && !options.on_step(rec)) stop = true;
      if (cfg.max_steps > 0 && state.step >= cfg.max_steps) stop = true;
      if (stop) break;
    }
    if (!stop) {
      ++state.epoch;
      if (write && cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04lld.pt", static_cast<long long>(state.epoch));
        state.save(options.out_dir / name);
      }
    }
  }
  result.steps = static_cast<std::int64_t>(result.records.size());
  if (write) {
    result.checkpoint = options.out_dir / options.checkpoint_name;
    state.save(result.checkpoint);
  }
  return result;
}

TrainResult train(const PatchManifest& manifest, const ModelConfig& model,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (model.patch_size != manifest.size) {
    throw ConfigError("model patch size " + std::to_string(model.patch_size) +
                      " differs from manifest patch size " + std::to_string(manifest.size));
  }
  if (manifest.counts.boundary == 0) throw ConfigError("manifest has no boundary (B) patches");
  if (manifest.counts.non_shadow == 0) throw ConfigError("manifest has no non-shadow (N) patches");
  torch::manual_seed(config.seed);
  TrainState state(ModelBundle(model), config);
  const PatchDataset data = PatchDataset::from_manifest(manifest, config.radius);
  return train(state, data, manifest.records, options);
}

fs::path finetune_on_video(const fs::path& checkpoint, const fs::path& frames_dir,
                           const fs::path& masks_dir, const FinetuneOptions& options) {
  if (options.epochs < 0) throw ConfigError("fine-tune epochs must be >= 0");
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  const fs::path out = options.output.value_or(
      checkpoint.parent_path() / (checkpoint.stem().string() + "_finetuned.pt"));
  if (options.epochs == 0) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    fs::copy_file(checkpoint, out, fs::copy_options::overwrite_existing);
    return out;
  }

  TrainConfig cfg;
  if (!info.train_config.is_null()) cfg = info.train_config.get<TrainConfig>();
  if (options.batch_size) cfg.batch_size = *options.batch_size;
  if (options.seed) cfg.seed = *options.seed;
  cfg.max_steps = options.max_steps.value_or(0);
  cfg.epochs = options.epochs;
  cfg.lr_decay_start.reset();
  cfg.checkpoint_every = 0;

  const int n = info.model_config.at("patch_size").get<int>();
  const PatchManifest manifest = build_manifest(frames_dir, masks_dir, n, std::max(1, n / 4));
  if (manifest.counts.boundary == 0) {
    throw ConfigError("no boundary patches found in video " + frames_dir.string());
  }
  if (manifest.counts.non_shadow == 0) {
    throw ConfigError("no non-shadow patches found in video " + frames_dir.string());
  }

  TrainState state = TrainState::resume(checkpoint, cfg);
  // Fine-tuning counts its own epochs; the step counter keeps running.
  state.epoch = 0;
  state.rng().seed(cfg.seed);
  const PatchDataset data = PatchDataset::from_manifest(manifest, cfg.radius);
  TrainOptions topts;
  topts.out_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  topts.checkpoint_name = out.filename().string();
  topts.log_path = options.log_path.value_or(topts.out_dir / (out.stem().string() + "_log.jsonl"));
  train(state, data, manifest.records, topts);
  return out;
}

}  // namespace deshadow
