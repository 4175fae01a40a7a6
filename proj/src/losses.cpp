#include "deshadow/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deshadow/errors.hpp"
#include "deshadow/tensor_ops.hpp"

namespace deshadow {

namespace {

// Per-patch sum over H, W (and channels) -> [B].
torch::Tensor patch_sum(const torch::Tensor& t) { return t.flatten(1).sum(1); }

torch::Tensor masked_mean(const torch::Tensor& values, const torch::Tensor& region) {
  const auto count = patch_sum(region);
  return patch_sum(values * region) / count.clamp_min(1.0);
}

torch::Tensor clamp_scores(const torch::Tensor& s) { return s.clamp(kScoreEps, 1.0 - kScoreEps); }

void check_finite(const torch::Tensor& t, const char* name) {
  if (!t.defined()) return;
  if (!torch::isfinite(t.detach()).all().item<bool>()) {
    throw TrainingError(name, std::string("non-finite loss component: ") + name);
  }
}

torch::Tensor as_batch(const MatteLayer& a) {
  return to_tensor(a).to(torch::kFloat64).unsqueeze(0);
}

torch::Tensor as_batch(const ShadowMask& m) {
  return to_tensor(m).to(torch::kFloat64).unsqueeze(0);
}

}  // namespace

torch::Tensor matting_loss(const torch::Tensor& alpha, const torch::Tensor& umbra,
                           const torch::Tensor& nonshadow) {
  const auto umbra_term = masked_mean((alpha - 1.0).abs(), umbra);
  const auto lit_term = masked_mean(alpha.abs(), nonshadow);
  return (umbra_term + lit_term).mean();
}

torch::Tensor smoothness_loss(const torch::Tensor& alpha) {
  if (alpha.dim() != 4 || alpha.size(2) < 2 || alpha.size(3) < 2) {
    throw std::invalid_argument("smoothness_loss needs a [B, 1, H, W] matte with H, W >= 2");
  }
  const auto dx = alpha.slice(3, 1) - alpha.slice(3, 0, alpha.size(3) - 1);
  const auto dy = alpha.slice(2, 1) - alpha.slice(2, 0, alpha.size(2) - 1);
  return (dx.abs().flatten(1).mean(1) + dy.abs().flatten(1).mean(1)).mean();
}

BoundaryLossResult boundary_loss(const torch::Tensor& output, const torch::Tensor& m_in,
                                 const torch::Tensor& m_out) {
  const auto channels = static_cast<double>(output.size(1));
  const auto n_in = patch_sum(m_in);
  const auto n_out = patch_sum(m_out);
  const auto mean_in = patch_sum(output * m_in) / (channels * n_in.clamp_min(1.0));
  const auto mean_out = patch_sum(output * m_out) / (channels * n_out.clamp_min(1.0));
  const auto usable = ((n_in > 0) & (n_out > 0)).to(output.scalar_type());
  BoundaryLossResult r;
  r.value = ((mean_in - mean_out).abs() * usable).mean();
  r.empty_patches = static_cast<std::int64_t>(usable.numel()) -
                    static_cast<std::int64_t>(usable.sum().item<double>());
  return r;
}

torch::Tensor adversarial_loss_generator(const torch::Tensor& scores, AdversarialMode mode) {
  const auto d = clamp_scores(scores);
  if (mode == AdversarialMode::Minimax) return torch::log(1.0 - d).mean();
  return (-torch::log(d)).mean();
}

torch::Tensor critic_loss(const torch::Tensor& score_real, const torch::Tensor& score_fake) {
  return (-torch::log(clamp_scores(score_real))).mean() +
         (-torch::log(1.0 - clamp_scores(score_fake))).mean();
}

torch::Tensor total_generator_loss(const LossParts& parts, const LossWeights& weights) {
  check_finite(parts.l_sm, "l_sm");
  check_finite(parts.l_mat, "l_mat");
  check_finite(parts.l_bd, "l_bd");
  check_finite(parts.l_adv, "l_adv");
  return weights.lambda_sm * parts.l_sm + weights.lambda_mat * parts.l_mat +
         weights.lambda_bd * parts.l_bd + weights.lambda_adv * parts.l_adv;
}

double matting_loss(const MatteLayer& alpha, const RegionMasks& regions) {
  return matting_loss(as_batch(alpha), as_batch(regions.umbra), as_batch(regions.nonshadow))
      .item<double>();
}

double smoothness_loss(const MatteLayer& alpha) {
  return smoothness_loss(as_batch(alpha)).item<double>();
}

double boundary_loss(const RasterImage& output, const RegionMasks& regions, bool* usable) {
  const auto r = boundary_loss(to_tensor(output).to(torch::kFloat64).unsqueeze(0),
                               as_batch(regions.m_in), as_batch(regions.m_out));
  if (usable) *usable = r.empty_patches == 0;
  return r.value.item<double>();
}

double adversarial_loss_generator(double score, AdversarialMode mode) {
  const double d = std::clamp(score, kScoreEps, 1.0 - kScoreEps);
  return mode == AdversarialMode::Minimax ? std::log(1.0 - d) : -std::log(d);
}

double critic_loss(double score_real, double score_fake) {
  const double r = std::clamp(score_real, kScoreEps, 1.0 - kScoreEps);
  const double f = std::clamp(score_fake, kScoreEps, 1.0 - kScoreEps);
  return -std::log(r) - std::log(1.0 - f);
}

double total_generator_loss(const std::array<double, 4>& parts, const LossWeights& weights) {
  static constexpr const char* kNames[4] = {"l_sm", "l_mat", "l_bd", "l_adv"};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!std::isfinite(parts[i])) {
      throw TrainingError(kNames[i], std::string("non-finite loss component: ") + kNames[i]);
    }
  }
  return weights.lambda_sm * parts[0] + weights.lambda_mat * parts[1] +
         weights.lambda_bd * parts[2] + weights.lambda_adv * parts[3];
}

std::string to_string(AdversarialMode mode) {
  return mode == AdversarialMode::Minimax ? "minimax" : "non-saturating";
}

AdversarialMode parse_adversarial_mode(const std::string& s) {
  if (s == "minimax" || s == "literal") return AdversarialMode::Minimax;
  if (s == "non-saturating" || s == "nonsaturating" || s == "default") {
    return AdversarialMode::NonSaturating;
  }
  throw std::invalid_argument("unknown adversarial mode: " + s);
}

}  // namespace deshadow
