#pragma once

#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "deshadow/imaging.hpp"
#include "deshadow/mask_ops.hpp"
#include "deshadow/physics.hpp"

namespace deshadow {

/// VGG-style encoder -> global average pool -> MLP head with 6 raw outputs.
struct ParamNetOptions {
  std::vector<int> stage_widths{16, 32, 64};
  std::vector<int> stage_convs{2, 2, 2};
  int head_hidden = 64;
  bool batch_norm = false;
};

/// U-Net: `depth` down/up levels starting at `base_width` channels.
struct MatteNetOptions {
  int base_width = 16;
  int depth = 2;
  bool batch_norm = false;
};

/// Five convolution stages; the final 1-channel map is averaged and squashed.
struct DNetOptions {
  std::vector<int> widths{16, 32, 64, 64};
  bool batch_norm = false;
};

struct ModelConfig {
  std::string preset = "desk";
  int patch_size = 128;
  ParamNetOptions param;
  MatteNetOptions matte;
  DNetOptions critic;
  ParamBounds bounds = ParamBounds::standard();

  /// "desk" (~1e5 parameters per network) or "paper" (VGG-19 / U-Net scale).
  static ModelConfig preset_named(const std::string& name, int patch_size);
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

class ParamNetImpl : public torch::nn::Module {
 public:
  ParamNetImpl(const ParamNetOptions& options, int patch_size);
  /// patch [B, 3, n, n], mask [B, 1, n, n] -> raw logits [B, 6].
  torch::Tensor forward(const torch::Tensor& patch, const torch::Tensor& mask);
  /// The last linear layer, exposed for initialization tests.
  torch::nn::Linear& head_output() { return head_out_; }
  int patch_size() const noexcept { return patch_size_; }

 private:
  int patch_size_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_hidden_{nullptr};
  torch::nn::Linear head_out_{nullptr};
};
TORCH_MODULE(ParamNet);

class MatteNetImpl : public torch::nn::Module {
 public:
  MatteNetImpl(const MatteNetOptions& options, int patch_size);
  /// patch, mask, relit -> alpha [B, 1, n, n] in [0, 1].
  torch::Tensor forward(const torch::Tensor& patch, const torch::Tensor& mask,
                        const torch::Tensor& relit);
  int patch_size() const noexcept { return patch_size_; }

 private:
  int patch_size_;
  std::vector<torch::nn::Sequential> down_;
  torch::nn::Sequential bottleneck_{nullptr};
  std::vector<torch::nn::ConvTranspose2d> up_;
  std::vector<torch::nn::Sequential> merge_;
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(MatteNet);

class DNetImpl : public torch::nn::Module {
 public:
  DNetImpl(const DNetOptions& options, int patch_size);
  /// patch [B, 3, n, n] -> score [B] in (0, 1).
  torch::Tensor forward(const torch::Tensor& patch);
  int patch_size() const noexcept { return patch_size_; }

 private:
  int patch_size_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(DNet);

/// The three networks of one model, built from a single config.
struct ModelBundle {
  explicit ModelBundle(ModelConfig config);

  ModelConfig config;
  ParamNet param_net;
  MatteNet matte_net;
  DNet d_net;

  void train(bool on = true);
  void eval() { train(false); }
  std::int64_t parameter_count() const;
};

/// Generator forward pass on a batch: params [B, 6], relit, alpha, output.
struct GeneratorOutput {
  torch::Tensor params;
  torch::Tensor relit;
  torch::Tensor alpha;
  torch::Tensor output;
};
GeneratorOutput run_generator(ModelBundle& models, const torch::Tensor& patch,
                              const torch::Tensor& mask, bool pass_through_clamp = true);

// Single-patch entry points on the plain data types (inference mode).

ShadowParams param_net_forward(ModelBundle& models, const RasterImage& patch,
                               const ShadowMask& mask);
MatteLayer matte_net_forward(ModelBundle& models, const RasterImage& patch,
                             const ShadowMask& mask, const RasterImage& relit);
double d_net_forward(ModelBundle& models, const RasterImage& patch);

}  // namespace deshadow
