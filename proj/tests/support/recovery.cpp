#include "recovery.hpp"

#include <algorithm>
#include <cmath>

#include "deshadow/evaluation.hpp"
#include "deshadow/inference.hpp"
#include "deshadow/patches.hpp"
#include "deshadow/tensor_ops.hpp"

namespace deshadow::testing {

RecoveryMetrics evaluate_recovery(ModelBundle& models, const std::vector<SyntheticSample>& held_out,
                                  int stride, double tolerance) {
  const int n = models.config.patch_size;
  RecoveryMetrics m;
  std::vector<double> errors;
  double signed_sum = 0.0;
  double sq_in = 0.0;
  double sq_out = 0.0;
  std::size_t count = 0;
  torch::NoGradGuard no_grad;
  models.eval();
  for (const auto& s : held_out) {
    std::vector<RasterImage> patches;
    std::vector<ShadowMask> masks;
    std::vector<double> fractions;
    for (const auto& [top, left] : grid_positions(n == 0 ? 0 : s.shadowed.height(),
                                                  s.shadowed.width(), n, stride)) {
      const ShadowMask pm = s.mask.crop(top, left, n, n);
      if (label_for(pm) != PatchLabel::Boundary) continue;
      patches.push_back(s.shadowed.crop(top, left, n, n));
      masks.push_back(pm);
      fractions.push_back(static_cast<double>(pm.count()) / pm.pixel_count());
    }
    if (!patches.empty()) {
      const auto raw = models.param_net->forward(stack_images(patches), stack_masks(masks));
      const auto params = squash_params(raw, models.config.bounds);
      for (std::int64_t i = 0; i < params.size(0); ++i) {
        double worst = 0.0;
        double sgn = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double rel = (params[i][c].item<double>() - s.w_star) / s.w_star;
          worst = std::max(worst, std::abs(rel));
          sgn += rel / 3.0;
        }
        signed_sum += sgn;
        const double mb = params[i].slice(0, 3, 6).mean().item<double>();
        m.patches.push_back({fractions[static_cast<std::size_t>(i)], s.textured, worst, sgn, mb});
        errors.push_back(worst);
        if (worst <= tolerance) ++m.within_tolerance;
      }
    }

    const RemovalResult r = remove_shadow(models, s.shadowed, s.mask);
    const RmseResult in = rmse_lab(s.shadowed, s.shadow_free, s.mask, {.resize = 0});
    const RmseResult out = rmse_lab(r.output, s.shadow_free, s.mask, {.resize = 0});
    if (in.shadow && out.shadow) {
      sq_in += *in.shadow * *in.shadow * in.n_shadow;
      sq_out += *out.shadow * *out.shadow * out.n_shadow;
      count += in.n_shadow;
    }
  }
  m.boundary_patches = errors.size();
  if (!errors.empty()) {
    m.mean_signed_error = signed_sum / static_cast<double>(errors.size());
    std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
    m.median_rel_error = errors[errors.size() / 2];
  }
  if (count) {
    m.rmse_input = std::sqrt(sq_in / count);
    m.rmse_output = std::sqrt(sq_out / count);
  }
  return m;
}

}  // namespace deshadow::testing
