#pragma once

#include <span>
#include <vector>

#include "deshadow/mask_ops.hpp"
#include "deshadow/physics.hpp"

namespace deshadow {

/// Network outputs for one boundary patch of the inference grid.
struct PatchEstimate {
  int top = 0;
  int left = 0;
  ShadowParams params;
  MatteLayer matte;  // size x size
  float critic_score = 0.5f;
};

/// Critic scores normalized to sum to 1. Falls back to uniform weights when
/// every score underflows to zero.
std::vector<double> normalized_scores(std::span<const PatchEstimate> estimates);

/// Convex combination of the patch parameters, weighted by normalized critic
/// scores. Throws std::invalid_argument for an empty list.
ShadowParams aggregate_params(std::span<const PatchEstimate> estimates,
                              const ParamBounds& bounds = ParamBounds::standard());

/// Assembles an H x W matte: score-weighted mean over the covering patches,
/// a distance ramp for penumbra pixels no patch covers, then nonshadow <- 0
/// and umbra <- 1.
MatteLayer stitch_matte(std::span<const PatchEstimate> estimates, const RegionMasks& regions,
                        int height, int width);

/// Linear ramp d0 / (d0 + d1) where d1 is the chessboard distance to the umbra
/// and d0 the distance to the non-shadow region.
std::vector<float> penumbra_ramp(const RegionMasks& regions);

}  // namespace deshadow
