#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "deshadow/checkpoint.hpp"
#include "deshadow/losses.hpp"
#include "deshadow/models.hpp"
#include "deshadow/patches.hpp"

namespace deshadow {

/// One switch per ablation: drop the search-space limit, or one loss term.
struct AblationFlags {
  bool bounds = false;
  bool bd = false;
  bool mat = false;
  bool sm = false;
  bool gan = false;

  /// Accepts "bounds", "bd", "mat", "sm", "gan".
  void enable(const std::string& name);
  std::vector<std::string> names() const;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct TrainConfig {
  int batch_size = 96;
  int epochs = 150;
  double lr_matte_d = 2e-4;
  double lr_param = 2e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  AdversarialMode adversarial = AdversarialMode::NonSaturating;
  AblationFlags ablate;
  std::uint64_t seed = 0;
  int radius = kDefaultMorphRadius;
  /// Stop after this many steps; 0 means run every epoch.
  std::int64_t max_steps = 0;
  /// Checkpoint every k epochs; 0 writes only the final checkpoint.
  int checkpoint_every = 0;
  /// Linear decay of every learning rate to 0, starting at this epoch.
  std::optional<int> lr_decay_start;
  /// Backward treats the relight clamp as identity.
  bool pass_through_clamp = true;

  /// Throws ConfigError on non-positive learning rates, batch_size < 2, etc.
  void validate() const;
  LossWeights effective_weights() const;
  ParamBounds effective_bounds() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Source images and masks behind a manifest, held in memory so patches can be
/// re-cut on demand. Images are stored at 8-bit precision (lossless for files
/// read from disk); region masks are rebuilt per patch from the full-image mask
/// so the penumbra bands never follow artificial patch borders.
class PatchDataset {
 public:
  PatchDataset(int patch_size, int radius);

  /// Loads every source listed in the manifest.
  static PatchDataset from_manifest(const PatchManifest& manifest, int radius);

  /// Registers an in-memory image and grids it; returns the refs added.
  std::vector<PatchRef> add_image(const std::string& image_id, const RasterImage& img,
                                  const ShadowMask& mask, int stride);
  /// Registers a source without gridding (refs come from a manifest).
  void add_source(const std::string& image_id, const RasterImage& img, const ShadowMask& mask);

  struct Batch {
    torch::Tensor patch;      // [B, 3, n, n]
    torch::Tensor mask;       // [B, 1, n, n]
    torch::Tensor umbra;      // [B, 1, n, n]
    torch::Tensor nonshadow;  // [B, 1, n, n]
    torch::Tensor m_in;       // [B, 1, n, n]
    torch::Tensor m_out;      // [B, 1, n, n]
  };
  Batch batch(std::span<const PatchRef> refs) const;

  int patch_size() const noexcept { return patch_size_; }
  int radius() const noexcept { return radius_; }
  std::size_t source_count() const noexcept { return sources_.size(); }

 private:
  struct Source {
    std::string id;
    torch::Tensor image;  // [3, H, W] uint8
    ShadowMask mask;
  };
  const Source& find(const std::string& id) const;

  int patch_size_;
  int radius_;
  std::vector<Source> sources_;
};

/// Scalar losses of one step, as logged.
struct LossRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double l_mat = 0.0;
  double l_sm = 0.0;
  double l_bd = 0.0;
  double l_adv = 0.0;
  double l_total = 0.0;
  double d_loss = 0.0;
  std::int64_t bd_empty = 0;
};

nlohmann::json to_json(const LossRecord& r);

/// Networks, optimizers, RNG and counters of a training run.
class TrainState {
 public:
  TrainState(ModelBundle models, TrainConfig config);

  ModelBundle& models() noexcept { return models_; }
  OptimizerSet& optimizers() noexcept { return optimizers_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::mt19937_64& rng() noexcept { return rng_; }

  std::int64_t step = 0;
  std::int64_t epoch = 0;

  /// Overrides the learning rate of every optimizer group (0 freezes the run).
  void set_learning_rates(double lr_param, double lr_matte_d);

  void save(const std::filesystem::path& path);
  /// Resumes networks, optimizer state and counters from a checkpoint.
  static TrainState resume(const std::filesystem::path& checkpoint, const TrainConfig& config);

 private:
  ModelBundle models_;
  TrainConfig config_;
  OptimizerSet optimizers_;
  std::mt19937_64 rng_;
};

/// One critic update (reals from N, fakes = composed outputs of B) followed
/// by one generator update on the weighted objective. Throws TrainingError
/// naming the loss term that went non-finite.
LossRecord train_step(TrainState& state, const PatchDataset::Batch& boundary,
                      const PatchDataset::Batch& real);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<LossRecord> records;
  std::int64_t steps = 0;
};

struct TrainOptions {
  /// Checkpoints, the JSON-lines log and config.json go here; empty keeps the
  /// run in memory.
  std::filesystem::path out_dir;
  /// Final checkpoint file name inside out_dir.
  std::string checkpoint_name = "checkpoint.pt";
  /// Defaults to out_dir/train_log.jsonl.
  std::optional<std::filesystem::path> log_path;
  /// Called after every step; return false to stop early.
  std::function<bool(const LossRecord&)> on_step;
};

/// Trains on the B patches (generator inputs) and N patches (critic reals) of
/// `refs`. Throws ConfigError before any step when either set is empty.
TrainResult train(TrainState& state, const PatchDataset& data, std::span<const PatchRef> refs,
                  const TrainOptions& options);

/// Loads the manifest's sources, builds fresh networks from `model` and trains.
TrainResult train(const PatchManifest& manifest, const ModelConfig& model,
                  const TrainConfig& config, const TrainOptions& options);

/// Number of steps one epoch over `boundary_count` patches takes.
std::int64_t steps_per_epoch(std::size_t boundary_count, int batch_size);

struct FinetuneOptions {
  int epochs = 1;
  /// Overrides of the checkpoint's stored training config.
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> max_steps;
  /// Defaults to <checkpoint stem>_finetuned.pt next to the input.
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> log_path;
};

/// Re-grids the video frames with their detector masks and resumes training.
/// Zero epochs copies the checkpoint unchanged. Throws ConfigError when the
/// video yields no boundary (or no non-shadow) patches.
std::filesystem::path finetune_on_video(const std::filesystem::path& checkpoint,
                                        const std::filesystem::path& frames_dir,
                                        const std::filesystem::path& masks_dir,
                                        const FinetuneOptions& options = {});

}  // namespace deshadow
