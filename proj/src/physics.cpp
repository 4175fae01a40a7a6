#include "deshadow/physics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deshadow {

bool ShadowParams::within(const ParamBounds& bounds) const noexcept {
  for (int k = 0; k < 3; ++k) {
    if (!(w[k] >= bounds.w_min && w[k] <= bounds.w_max)) return false;
    if (!(b[k] >= -bounds.b_max && b[k] <= bounds.b_max)) return false;
  }
  return true;
}

void to_json(nlohmann::json& j, const ShadowParams& p) { j = {{"w", p.w}, {"b", p.b}}; }

void from_json(const nlohmann::json& j, ShadowParams& p) {
  j.at("w").get_to(p.w);
  j.at("b").get_to(p.b);
}

MatteLayer::MatteLayer(int height, int width, float value) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw std::invalid_argument("matte dimensions must be positive");
  alpha_.assign(static_cast<std::size_t>(height) * width, std::clamp(value, 0.0f, 1.0f));
}

MatteLayer::MatteLayer(int height, int width, std::vector<float> alpha)
    : height_(height), width_(width), alpha_(std::move(alpha)) {
  if (height < 1 || width < 1) throw std::invalid_argument("matte dimensions must be positive");
  if (alpha_.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("matte buffer size mismatch");
  }
  for (float a : alpha_) {
    if (!(a >= 0.0f && a <= 1.0f)) throw std::invalid_argument("matte value outside [0,1]");
  }
}

void MatteLayer::set(int y, int x, float v) noexcept {
  alpha_[index(y, x)] = std::clamp(v, 0.0f, 1.0f);
}

RasterImage relight(const RasterImage& img, const ShadowParams& params, const ParamBounds& bounds) {
  if (!params.within(bounds)) throw std::invalid_argument("shadow parameters out of bounds");
  RasterImage out = img;
  auto px = out.data();
  for (std::size_t i = 0; i < px.size(); i += 3) {
    for (std::size_t k = 0; k < 3; ++k) {
      px[i + k] = std::clamp(params.w[k] * px[i + k] + params.b[k], 0.0f, 1.0f);
    }
  }
  return out;
}

RasterImage compose(const RasterImage& shadow, const RasterImage& relit, const MatteLayer& matte) {
  if (!shadow.same_shape(relit) || matte.height() != shadow.height() ||
      matte.width() != shadow.width()) {
    throw std::invalid_argument("compose: dimension mismatch");
  }
  RasterImage out = shadow;
  auto dst = out.data();
  const auto rel = relit.data();
  const auto alpha = matte.data();
  for (std::size_t p = 0; p < alpha.size(); ++p) {
    const float a = alpha[p];
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t i = 3 * p + k;
      // Written as an update of the shadow pixel so alpha = 0, alpha = 1 and
      // relit == shadow all reproduce their source bits.
      dst[i] = a == 1.0f ? rel[i] : dst[i] + a * (rel[i] - dst[i]);
    }
  }
  return out;
}

ShadowParams squash_params(std::span<const float, 6> raw, const ParamBounds& bounds) {
  ShadowParams p;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!std::isfinite(raw[k]) || !std::isfinite(raw[k + 3])) {
      throw std::invalid_argument("squash_params: non-finite input");
    }
    const float half = (std::tanh(raw[k]) + 1.0f) * 0.5f;
    p.w[k] = std::clamp(bounds.w_min + (bounds.w_max - bounds.w_min) * half, bounds.w_min,
                        bounds.w_max);
    p.b[k] = bounds.b_max * std::tanh(raw[k + 3]);
  }
  return p;
}

}  // namespace deshadow
