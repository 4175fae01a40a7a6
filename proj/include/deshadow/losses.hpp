#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <torch/torch.h>

#include "deshadow/mask_ops.hpp"
#include "deshadow/physics.hpp"

namespace deshadow {

/// Weights of the generator objective
///   L = lambda_sm * L_sm + lambda_mat * L_mat + lambda_bd * L_bd + lambda_adv * L_adv.
struct LossWeights {
  double lambda_sm = 10.0;
  double lambda_mat = 100.0;
  double lambda_bd = 0.5;
  double lambda_adv = 0.5;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

enum class AdversarialMode {
  NonSaturating,  // -log D(output)
  Minimax,        // log(1 - D(output))
};

/// Critic scores are clamped to [kScoreEps, 1 - kScoreEps] before any log.
constexpr double kScoreEps = 1e-7;

// Batched losses. Images are [B, 3, H, W]; mattes and region masks are
// [B, 1, H, W] with values in {0, 1}. Region sums are normalized to means per
// patch, and every loss is averaged over the batch.

/// mean_{umbra} |alpha - 1| + mean_{nonshadow} |alpha|; an empty region adds 0.
torch::Tensor matting_loss(const torch::Tensor& alpha, const torch::Tensor& umbra,
                           const torch::Tensor& nonshadow);

/// mean |alpha(y, x+1) - alpha(y, x)| + mean |alpha(y+1, x) - alpha(y, x)|.
/// Throws std::invalid_argument unless H, W >= 2.
torch::Tensor smoothness_loss(const torch::Tensor& alpha);

struct BoundaryLossResult {
  torch::Tensor value;
  /// Patches whose m_in or m_out is empty; they contribute 0.
  std::int64_t empty_patches = 0;
};

/// |mean over M_in - mean over M_out| of the output, both means taken jointly
/// over the three channels.
BoundaryLossResult boundary_loss(const torch::Tensor& output, const torch::Tensor& m_in,
                                 const torch::Tensor& m_out);

torch::Tensor adversarial_loss_generator(const torch::Tensor& scores,
                                         AdversarialMode mode = AdversarialMode::NonSaturating);

/// -log D(real) - log(1 - D(fake)), each term averaged over its batch.
torch::Tensor critic_loss(const torch::Tensor& score_real, const torch::Tensor& score_fake);

struct LossParts {
  torch::Tensor l_sm;
  torch::Tensor l_mat;
  torch::Tensor l_bd;
  torch::Tensor l_adv;
};

/// Weighted sum. Throws TrainingError naming the first non-finite part.
torch::Tensor total_generator_loss(const LossParts& parts, const LossWeights& weights);

// Single-patch conveniences on the plain data types.

double matting_loss(const MatteLayer& alpha, const RegionMasks& regions);
double smoothness_loss(const MatteLayer& alpha);
/// `usable` is cleared when M_in or M_out is empty (the loss is then 0).
double boundary_loss(const RasterImage& output, const RegionMasks& regions,
                     bool* usable = nullptr);
double adversarial_loss_generator(double score,
                                  AdversarialMode mode = AdversarialMode::NonSaturating);
double critic_loss(double score_real, double score_fake);
/// Parts ordered (sm, mat, bd, adv).
double total_generator_loss(const std::array<double, 4>& parts, const LossWeights& weights);

std::string to_string(AdversarialMode mode);
AdversarialMode parse_adversarial_mode(const std::string& s);

}  // namespace deshadow
