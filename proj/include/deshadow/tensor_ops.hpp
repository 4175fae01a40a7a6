#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "deshadow/imaging.hpp"
#include "deshadow/mask_ops.hpp"
#include "deshadow/physics.hpp"

namespace deshadow {

// RasterImage <-> [3, H, W] float tensors, ShadowMask <-> [1, H, W] {0,1}.
torch::Tensor to_tensor(const RasterImage& img);
torch::Tensor to_tensor(const ShadowMask& mask);
torch::Tensor to_tensor(const MatteLayer& matte);
RasterImage image_from_tensor(const torch::Tensor& t);
MatteLayer matte_from_tensor(const torch::Tensor& t);
/// Stacks single-item tensors into a batch.
torch::Tensor stack_images(std::span<const RasterImage> imgs);
torch::Tensor stack_masks(std::span<const ShadowMask> masks);

/// Batched squash: raw [B, 6] -> params [B, 6] laid out (w0, w1, w2, b0, b1, b2).
torch::Tensor squash_params(const torch::Tensor& raw, const ParamBounds& bounds);
ShadowParams params_from_tensor(const torch::Tensor& row);
torch::Tensor params_to_tensor(const ShadowParams& p);

/// relit = clamp(w * img + b, 0, 1) for img [B, 3, H, W] and params [B, 6].
/// The clamp is exact in the forward pass; with `pass_through_clamp` its
/// backward is the identity so saturated pixels still carry gradient to (w, b).
torch::Tensor relight(const torch::Tensor& img, const torch::Tensor& params,
                      bool pass_through_clamp = true);

/// relit * alpha + shadow * (1 - alpha); alpha is [B, 1, H, W].
torch::Tensor compose(const torch::Tensor& shadow, const torch::Tensor& relit,
                      const torch::Tensor& alpha);

}  // namespace deshadow
