#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deshadow/imaging.hpp"
#include "deshadow/mask_ops.hpp"

namespace deshadow {

constexpr int kEvalSide = 256;
constexpr float kVideoEpsilon = 40.0f / 255.0f;

struct RmseOptions {
  /// Side length both images are resized to before comparison; 0 keeps the
  /// native resolution.
  int resize = kEvalSide;
};

/// LAB RMSE over the shadow pixels, the non-shadow pixels, and all pixels.
/// Each value is sqrt(mean over pixels x 3 channels of squared difference).
/// A region with no pixels reports std::nullopt.
struct RmseResult {
  std::optional<double> shadow;
  std::optional<double> nonshadow;
  double all = 0.0;
  std::size_t n_shadow = 0;
  std::size_t n_nonshadow = 0;
  std::size_t n_all = 0;
  /// Per-channel (L, a, b) RMSE, same regions.
  std::array<std::optional<double>, 3> shadow_channel{};
  std::array<std::optional<double>, 3> nonshadow_channel{};
  std::array<double, 3> all_channel{};
};

RmseResult rmse_lab(const RasterImage& pred, const RasterImage& gt, const ShadowMask& mask,
                    const RmseOptions& options = {});

/// Per-pixel Euclidean LAB distance (no resizing), row-major.
std::vector<float> lab_error_map(const RasterImage& pred, const RasterImage& gt);

enum class Aggregation {
  PerImageMean,  // mean of per-image RMSEs
  Pooled,        // one RMSE over every pixel of the set
};

struct ImageRmse {
  std::string id;
  RmseResult result;
};

struct RmseReport {
  std::optional<double> rmse_shadow;
  std::optional<double> rmse_nonshadow;
  std::optional<double> rmse_all;
  Aggregation aggregation = Aggregation::PerImageMean;
  std::vector<ImageRmse> per_image;
  std::vector<std::string> warnings;
};

RmseReport aggregate_rmse(std::vector<ImageRmse> items, Aggregation aggregation);

/// Matches files by stem across the three directories.
RmseReport eval_istd(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                     const std::filesystem::path& mask_dir, const RmseOptions& options = {},
                     Aggregation aggregation = Aggregation::PerImageMean);

nlohmann::json to_json(const RmseReport& report, bool per_channel = false);

/// Temporal max/min images of a static-camera video plus the moving-shadow mask.
struct VideoPseudoGT {
  RasterImage v_max;
  RasterImage v_min;
  ShadowMask moving_mask;
  float epsilon = kVideoEpsilon;
  std::size_t frame_count = 0;
};

/// Throws std::invalid_argument for fewer than two frames and FormatError
/// when frame sizes differ.
VideoPseudoGT build_video_pseudo_gt(std::span<const RasterImage> frames,
                                    float epsilon = kVideoEpsilon);
VideoPseudoGT build_video_pseudo_gt(const std::filesystem::path& frames_dir,
                                    float epsilon = kVideoEpsilon);

/// Writes v_max.png, v_min.png, moving_mask.png and pseudo_gt.json.
void save_pseudo_gt(const VideoPseudoGT& gt, const std::filesystem::path& dir);
VideoPseudoGT load_pseudo_gt(const std::filesystem::path& dir);

std::vector<RasterImage> load_frames(const std::filesystem::path& dir);

struct VideoScore {
  std::optional<double> rmse;  // absent when the moving mask is empty
  std::size_t frames = 0;
  std::vector<double> per_frame;
  std::string warning;
};

/// Mean over frames of the LAB RMSE against v_max on the moving-shadow mask.
/// Throws std::invalid_argument when the frame count or frame size does not
/// match the pseudo ground truth.
VideoScore eval_video(std::span<const RasterImage> pred_frames, const VideoPseudoGT& pseudo_gt,
                      const RmseOptions& options = {.resize = 0});

struct VideoEntry {
  std::string name;
  VideoScore score;
};

struct VideoReport {
  std::optional<double> rmse;  // mean over videos with a usable mask
  std::vector<VideoEntry> videos;
};

VideoReport summarize_videos(std::vector<VideoEntry> entries);
nlohmann::json to_json(const VideoReport& report);

}  // namespace deshadow
