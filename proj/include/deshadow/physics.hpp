#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deshadow/imaging.hpp"

namespace deshadow {

/// Search-space box for the relighting parameters, on the [0,1] pixel scale.
struct ParamBounds {
  float w_min = 1.0f;
  float w_max = 10.0f;
  float b_max = 25.0f / 255.0f;

  /// w in [1, 10], b in [-25/255, 25/255].
  static ParamBounds standard() { return {}; }
  /// The "no search-space limit" ablation: w in [-10, 10], b in [-1, 1].
  static ParamBounds unlimited() { return {-10.0f, 10.0f, 1.0f}; }

  friend bool operator==(const ParamBounds&, const ParamBounds&) = default;
};

/// Per-channel affine shadow inverse: relit_k = w_k * shadow_k + b_k.
struct ShadowParams {
  std::array<float, 3> w{1.0f, 1.0f, 1.0f};
  std::array<float, 3> b{0.0f, 0.0f, 0.0f};

  static ShadowParams identity() { return {}; }
  bool within(const ParamBounds& bounds) const noexcept;

  friend bool operator==(const ShadowParams&, const ShadowParams&) = default;
};

void to_json(nlohmann::json& j, const ShadowParams& p);
void from_json(const nlohmann::json& j, ShadowParams& p);

/// H x W blending layer, every value in [0,1].
class MatteLayer {
 public:
  MatteLayer() = default;
  MatteLayer(int height, int width, float value = 0.0f);
  /// Throws std::invalid_argument if any value falls outside [0,1] or is NaN.
  MatteLayer(int height, int width, std::vector<float> alpha);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  float at(int y, int x) const noexcept { return alpha_[index(y, x)]; }
  /// Assigns a clamped value.
  void set(int y, int x, float v) noexcept;
  std::span<const float> data() const noexcept { return alpha_; }

  friend bool operator==(const MatteLayer&, const MatteLayer&) = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  int height_ = 0;
  int width_ = 0;
  std::vector<float> alpha_;
};

/// out_k = clamp(w_k * in_k + b_k, 0, 1). Throws std::invalid_argument if the
/// parameters fall outside `bounds`.
RasterImage relight(const RasterImage& img, const ShadowParams& params,
                    const ParamBounds& bounds = ParamBounds::standard());

/// Per-pixel convex blend: relit * alpha + shadow * (1 - alpha).
RasterImage compose(const RasterImage& shadow, const RasterImage& relit, const MatteLayer& matte);

/// Maps six unconstrained reals (three w logits, three b logits) into `bounds`:
///   w_k = w_min + (w_max - w_min) * (tanh(raw_k) + 1) / 2
///   b_k = b_max * tanh(raw_{k+3})
/// Throws std::invalid_argument on non-finite input.
ShadowParams squash_params(std::span<const float, 6> raw,
                           const ParamBounds& bounds = ParamBounds::standard());

}  // namespace deshadow
