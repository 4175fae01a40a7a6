#include "deshadow/inference.hpp"

#include <algorithm>
#include <stdexcept>

#include "deshadow/patches.hpp"
#include "deshadow/tensor_ops.hpp"

namespace deshadow {

using nlohmann::json;

namespace {

struct Window {
  int top;
  int left;
};

void estimate_batch(ModelBundle& models, const RasterImage& img, const ShadowMask& mask,
                    const RegionMasks& regions, std::span<const Window> windows,
                    const InferenceOptions& options, std::vector<PatchEstimate>& out) {
  const int n = models.config.patch_size;
  std::vector<RasterImage> patches;
  std::vector<ShadowMask> masks;
  std::vector<ShadowMask> umbra;
  std::vector<ShadowMask> nonshadow;
  for (const auto& w : windows) {
    patches.push_back(img.crop(w.top, w.left, n, n));
    masks.push_back(mask.crop(w.top, w.left, n, n));
    umbra.push_back(regions.umbra.crop(w.top, w.left, n, n));
    nonshadow.push_back(regions.nonshadow.crop(w.top, w.left, n, n));
  }
  const auto patch_t = stack_images(patches);
  const auto mask_t = stack_masks(masks);
  const GeneratorOutput g = run_generator(models, patch_t, mask_t, false);
  torch::Tensor scored = g.output;
  if (options.score_after_override) {
    const auto u = stack_masks(umbra);
    const auto ns = stack_masks(nonshadow);
    const auto alpha = g.alpha * (1.0 - ns) * (1.0 - u) + u;
    scored = compose(patch_t, g.relit, alpha);
  }
  const auto scores = models.d_net->forward(scored);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto k = static_cast<std::int64_t>(i);
    PatchEstimate e;
    e.top = windows[i].top;
    e.left = windows[i].left;
    e.params = params_from_tensor(g.params[k]);
    e.matte = matte_from_tensor(g.alpha[k]);
    e.critic_score = scores[k].item<float>();
    out.push_back(std::move(e));
  }
}

}  // namespace

RemovalResult remove_shadow(ModelBundle& models, const RasterImage& img, const ShadowMask& mask,
                            const InferenceOptions& options) {
  if (!mask.same_shape(img)) throw std::invalid_argument("mask does not match image");
  const int n = models.config.patch_size;
  if (img.height() < n || img.width() < n) {
    throw std::invalid_argument("image " + std::to_string(img.height()) + "x" +
                                std::to_string(img.width()) + " is smaller than one " +
                                std::to_string(n) + "x" + std::to_string(n) + " patch");
  }
  if (options.batch < 1) throw std::invalid_argument("inference batch must be >= 1");

  RemovalResult r{img, img, ShadowParams::identity(), MatteLayer(img.height(), img.width(), 0.0f),
                  {}, false, false};
  if (mask.none()) {
    r.empty_mask = true;
    return r;
  }

  const int stride = options.stride > 0 ? options.stride : std::max(1, n / 4);
  const RegionMasks regions = build_regions(mask, options.radius);

  std::vector<Window> windows;
  Window best{0, 0};
  std::size_t best_overlap = 0;
  for (const auto& [top, left] : grid_positions(img.height(), img.width(), n, stride)) {
    const ShadowMask m = mask.crop(top, left, n, n);
    if (label_for(m) == PatchLabel::Boundary) windows.push_back({top, left});
    const std::size_t overlap = m.count();
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = {top, left};
    }
  }
  if (windows.empty()) {
    r.fallback = true;
    windows.push_back(best);
  }

  torch::NoGradGuard no_grad;
  models.eval();
  for (std::size_t i = 0; i < windows.size(); i += static_cast<std::size_t>(options.batch)) {
    const std::size_t count = std::min(windows.size() - i, static_cast<std::size_t>(options.batch));
    estimate_batch(models, img, mask, regions, std::span(windows).subspan(i, count), options,
                   r.estimates);
  }

  r.params = aggregate_params(r.estimates, models.config.bounds);
  r.matte = stitch_matte(r.estimates, regions, img.height(), img.width());
  r.relit = relight(img, r.params, models.config.bounds);
  r.output = compose(img, r.relit, r.matte);
  return r;
}

json to_json(const RemovalResult& r) {
  std::vector<json> patches;
  for (const auto& e : r.estimates) {
    patches.push_back({{"top", e.top}, {"left", e.left}, {"critic_score", e.critic_score}});
  }
  return {{"params", r.params},
          {"fallback", r.fallback},
          {"empty_mask", r.empty_mask},
          {"patch_count", r.estimates.size()},
          {"patches", patches}};
}

}  // namespace deshadow
