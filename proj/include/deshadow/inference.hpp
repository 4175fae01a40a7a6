#pragma once

#include <vector>

#include <json.hpp>

#include "deshadow/aggregation.hpp"
#include "deshadow/imaging.hpp"
#include "deshadow/mask_ops.hpp"
#include "deshadow/models.hpp"
#include "deshadow/physics.hpp"

namespace deshadow {

struct InferenceOptions {
  /// Grid stride; 0 picks patch_size / 4.
  int stride = 0;
  /// Score patches on the composite after the matte override instead of the
  /// raw generator output.
  bool score_after_override = false;
  /// Patches per forward pass.
  int batch = 32;
  int radius = kDefaultMorphRadius;
};

struct RemovalResult {
  RasterImage output;
  RasterImage relit;
  ShadowParams params = ShadowParams::identity();
  MatteLayer matte;
  std::vector<PatchEstimate> estimates;
  /// No boundary patch on the grid; the patch overlapping the mask most was used.
  bool fallback = false;
  bool empty_mask = false;
};

/// Runs the networks on the boundary patches of the grid, combines their
/// parameters and mattes with normalized critic scores and composites the
/// result. An empty mask returns the input unchanged with identity params.
/// Throws std::invalid_argument when the mask does not match the image or the
/// image is smaller than one patch.
RemovalResult remove_shadow(ModelBundle& models, const RasterImage& img, const ShadowMask& mask,
                            const InferenceOptions& options = {});

/// Side-output metadata: params, fallback flag, patch count and scores.
nlohmann::json to_json(const RemovalResult& r);

}  // namespace deshadow
