#include "deshadow/tensor_ops.hpp"

#include <stdexcept>

namespace deshadow {

torch::Tensor to_tensor(const RasterImage& img) {
  const auto src = img.data();
  auto hwc = torch::from_blob(const_cast<float*>(src.data()), {img.height(), img.width(), 3},
                              torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor to_tensor(const ShadowMask& mask) {
  const auto bits = mask.bits();
  auto t = torch::from_blob(const_cast<std::uint8_t*>(bits.data()),
                            {1, mask.height(), mask.width()}, torch::kUInt8);
  return t.to(torch::kFloat32);
}

torch::Tensor to_tensor(const MatteLayer& matte) {
  const auto a = matte.data();
  return torch::from_blob(const_cast<float*>(a.data()), {1, matte.height(), matte.width()},
                          torch::kFloat32)
      .clone();
}

RasterImage image_from_tensor(const torch::Tensor& t) {
  auto chw = t.detach().to(torch::kCPU, torch::kFloat32);
  if (chw.dim() == 4 && chw.size(0) == 1) chw = chw.squeeze(0);
  if (chw.dim() != 3 || chw.size(0) != 3) {
    throw std::invalid_argument("image tensor must be [3, H, W]");
  }
  auto hwc = chw.permute({1, 2, 0}).contiguous();
  const auto* p = hwc.data_ptr<float>();
  std::vector<float> px(p, p + hwc.numel());
  return RasterImage(static_cast<int>(chw.size(1)), static_cast<int>(chw.size(2)), std::move(px));
}

MatteLayer matte_from_tensor(const torch::Tensor& t) {
  auto a = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  while (a.dim() > 2) a = a.squeeze(0);
  if (a.dim() != 2) throw std::invalid_argument("matte tensor must be [H, W]");
  a = a.clamp(0.0, 1.0).contiguous();
  const auto* p = a.data_ptr<float>();
  return MatteLayer(static_cast<int>(a.size(0)), static_cast<int>(a.size(1)),
                    std::vector<float>(p, p + a.numel()));
}

torch::Tensor stack_images(std::span<const RasterImage> imgs) {
  std::vector<torch::Tensor> items;
  items.reserve(imgs.size());
  for (const auto& img : imgs) items.push_back(to_tensor(img));
  return torch::stack(items);
}

torch::Tensor stack_masks(std::span<const ShadowMask> masks) {
  std::vector<torch::Tensor> items;
  items.reserve(masks.size());
  for (const auto& m : masks) items.push_back(to_tensor(m));
  return torch::stack(items);
}

torch::Tensor squash_params(const torch::Tensor& raw, const ParamBounds& bounds) {
  if (raw.dim() != 2 || raw.size(1) != 6) throw std::invalid_argument("raw params must be [B, 6]");
  auto w_raw = raw.slice(1, 0, 3);
  auto b_raw = raw.slice(1, 3, 6);
  auto w = bounds.w_min + (bounds.w_max - bounds.w_min) * (torch::tanh(w_raw) + 1.0) * 0.5;
  auto b = bounds.b_max * torch::tanh(b_raw);
  return torch::cat({w, b}, 1);
}

ShadowParams params_from_tensor(const torch::Tensor& row) {
  auto r = row.detach().to(torch::kCPU, torch::kFloat32).reshape({6}).contiguous();
  const auto* p = r.data_ptr<float>();
  ShadowParams out;
  for (std::size_t k = 0; k < 3; ++k) {
    out.w[k] = p[k];
    out.b[k] = p[k + 3];
  }
  return out;
}

torch::Tensor params_to_tensor(const ShadowParams& p) {
  return torch::tensor({p.w[0], p.w[1], p.w[2], p.b[0], p.b[1], p.b[2]}, torch::kFloat32);
}

torch::Tensor relight(const torch::Tensor& img, const torch::Tensor& params,
                      bool pass_through_clamp) {
  const auto n = img.size(0);
  auto w = params.slice(1, 0, 3).reshape({n, 3, 1, 1});
  auto b = params.slice(1, 3, 6).reshape({n, 3, 1, 1});
  auto raw = w * img + b;
  auto clamped = raw.clamp(0.0, 1.0);
  if (!pass_through_clamp) return clamped;
  // raw - raw.detach() is exactly zero, so the forward value stays the clamped one.
  return clamped.detach() + (raw - raw.detach());
}

torch::Tensor compose(const torch::Tensor& shadow, const torch::Tensor& relit,
                      const torch::Tensor& alpha) {
  return relit * alpha + shadow * (1.0 - alpha);
}

}  // namespace deshadow
