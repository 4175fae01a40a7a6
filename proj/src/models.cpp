#include "deshadow/models.hpp"

#include <stdexcept>

#include "deshadow/tensor_ops.hpp"

namespace deshadow {

namespace nn = torch::nn;
using nlohmann::json;

namespace {

constexpr double kCriticEps = 1e-7;

// Inputs in [0, 1] are centered to [-1, 1] before the first convolution.
torch::Tensor centered(const torch::Tensor& t) { return t * 2.0 - 1.0; }

void append_conv(nn::Sequential& seq, int in, int out, bool batch_norm) {
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(!batch_norm)));
  if (batch_norm) seq->push_back(nn::BatchNorm2d(out));
  seq->push_back(nn::ReLU(nn::ReLUOptions(true)));
}

nn::Sequential conv_block(int in, int out, bool batch_norm) {
  nn::Sequential seq;
  append_conv(seq, in, out, batch_norm);
  append_conv(seq, out, out, batch_norm);
  return seq;
}

void check_input(const torch::Tensor& t, std::int64_t channels, int patch_size, const char* what) {
  if (t.dim() != 4 || t.size(1) != channels || t.size(2) != patch_size ||
      t.size(3) != patch_size) {
    throw std::invalid_argument(std::string(what) + " must be [B, " + std::to_string(channels) +
                                ", " + std::to_string(patch_size) + ", " +
                                std::to_string(patch_size) + "]");
  }
}

void ensure_batched(torch::Tensor& t) {
  if (t.dim() == 3) t = t.unsqueeze(0);
}

}  // namespace

ModelConfig ModelConfig::preset_named(const std::string& name, int patch_size) {
  ModelConfig c;
  c.preset = name;
  c.patch_size = patch_size;
  if (name == "desk") {
    // Defaults of the option structs.
  } else if (name == "paper") {
    c.param.stage_widths = {64, 128, 256, 512, 512};
    c.param.stage_convs = {2, 2, 4, 4, 4};
    c.param.head_hidden = 512;
    c.param.batch_norm = true;
    c.matte.base_width = 64;
    c.matte.depth = 4;
    c.matte.batch_norm = true;
    c.critic.widths = {64, 128, 256, 512};
    c.critic.batch_norm = true;
  } else {
    throw std::invalid_argument("unknown model preset: " + name);
  }
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (patch_size < 8 || patch_size % 8 != 0) {
    throw std::invalid_argument("patch size must be a positive multiple of 8");
  }
  if (param.stage_widths.empty() || param.stage_widths.size() != param.stage_convs.size()) {
    throw std::invalid_argument("param-net stage widths and conv counts must match");
  }
  if (matte.depth < 1 || patch_size % (1 << matte.depth) != 0) {
    throw std::invalid_argument("patch size must be divisible by 2^matte.depth");
  }
  if (critic.widths.size() != 4) throw std::invalid_argument("d-net needs four hidden widths");
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"preset", c.preset},
       {"patch_size", c.patch_size},
       {"param_net",
        {{"stage_widths", c.param.stage_widths},
         {"stage_convs", c.param.stage_convs},
         {"head_hidden", c.param.head_hidden},
         {"batch_norm", c.param.batch_norm}}},
       {"matte_net",
        {{"base_width", c.matte.base_width},
         {"depth", c.matte.depth},
         {"batch_norm", c.matte.batch_norm}}},
       {"d_net", {{"widths", c.critic.widths}, {"batch_norm", c.critic.batch_norm}}},
       {"bounds", {{"w_min", c.bounds.w_min}, {"w_max", c.bounds.w_max}, {"b_max", c.bounds.b_max}}}};
}

void from_json(const json& j, ModelConfig& c) {
  j.at("preset").get_to(c.preset);
  j.at("patch_size").get_to(c.patch_size);
  const auto& p = j.at("param_net");
  p.at("stage_widths").get_to(c.param.stage_widths);
  p.at("stage_convs").get_to(c.param.stage_convs);
  p.at("head_hidden").get_to(c.param.head_hidden);
  p.at("batch_norm").get_to(c.param.batch_norm);
  const auto& m = j.at("matte_net");
  m.at("base_width").get_to(c.matte.base_width);
  m.at("depth").get_to(c.matte.depth);
  m.at("batch_norm").get_to(c.matte.batch_norm);
  const auto& d = j.at("d_net");
  d.at("widths").get_to(c.critic.widths);
  d.at("batch_norm").get_to(c.critic.batch_norm);
  const auto& b = j.at("bounds");
  b.at("w_min").get_to(c.bounds.w_min);
  b.at("w_max").get_to(c.bounds.w_max);
  b.at("b_max").get_to(c.bounds.b_max);
  c.validate();
}

ParamNetImpl::ParamNetImpl(const ParamNetOptions& options, int patch_size)
    : patch_size_(patch_size) {
  nn::Sequential seq;
  int in = 4;
  for (std::size_t s = 0; s < options.stage_widths.size(); ++s) {
    const int width = options.stage_widths[s];
    for (int k = 0; k < options.stage_convs[s]; ++k) {
      append_conv(seq, in, width, options.batch_norm);
      in = width;
    }
    if (s + 1 < options.stage_widths.size()) {
      seq->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
    }
  }
  features_ = register_module("features", seq);
  head_hidden_ = register_module("head_hidden", nn::Linear(in, options.head_hidden));
  head_out_ = register_module("head_out", nn::Linear(options.head_hidden, 6));
  // Start from the centre of the search space: w = midpoint, b = 0.
  torch::NoGradGuard no_grad;
  head_out_->weight.zero_();
  head_out_->bias.zero_();
}

torch::Tensor ParamNetImpl::forward(const torch::Tensor& patch, const torch::Tensor& mask) {
  check_input(patch, 3, patch_size_, "param-net patch");
  check_input(mask, 1, patch_size_, "param-net mask");
  auto x = features_->forward(centered(torch::cat({patch, mask}, 1)));
  x = x.mean({2, 3});
  return head_out_(torch::relu(head_hidden_(x)));
}

MatteNetImpl::MatteNetImpl(const MatteNetOptions& options, int patch_size)
    : patch_size_(patch_size) {
  int in = 7;
  std::vector<int> widths;
  for (int level = 0; level < options.depth; ++level) {
    const int width = options.base_width << level;
    widths.push_back(width);
    down_.push_back(register_module("down" + std::to_string(level),
                                    conv_block(in, width, options.batch_norm)));
    in = width;
  }
  const int bottom = options.base_width << options.depth;
  bottleneck_ = register_module("bottleneck", conv_block(in, bottom, options.batch_norm));
  in = bottom;
  for (int level = options.depth - 1; level >= 0; --level) {
    const int width = widths[static_cast<std::size_t>(level)];
    up_.push_back(register_module("up" + std::to_string(level),
                                  nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, width, 2).stride(2))));
    merge_.push_back(register_module("merge" + std::to_string(level),
                                     conv_block(2 * width, width, options.batch_norm)));
    in = width;
  }
  out_ = register_module("out", nn::Conv2d(nn::Conv2dOptions(in, 1, 1)));
}

torch::Tensor MatteNetImpl::forward(const torch::Tensor& patch, const torch::Tensor& mask,
                                    const torch::Tensor& relit) {
  check_input(patch, 3, patch_size_, "matte-net patch");
  check_input(mask, 1, patch_size_, "matte-net mask");
  check_input(relit, 3, patch_size_, "matte-net relit");
  auto x = centered(torch::cat({patch, mask, relit}, 1));
  std::vector<torch::Tensor> skips;
  for (auto& block : down_) {
    x = block->forward(x);
    skips.push_back(x);
    x = torch::max_pool2d(x, 2);
  }
  x = bottleneck_->forward(x);
  for (std::size_t i = 0; i < up_.size(); ++i) {
    x = up_[i]->forward(x);
    x = merge_[i]->forward(torch::cat({x, skips[skips.size() - 1 - i]}, 1));
  }
  // (tanh + 1) / 2 maps the logit into [0, 1].
  return (torch::tanh(out_->forward(x)) + 1.0) * 0.5;
}

DNetImpl::DNetImpl(const DNetOptions& options, int patch_size) : patch_size_(patch_size) {
  const auto& w = options.widths;
  auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)); };
  nn::Sequential seq;
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(3, w[0], 4).stride(2).padding(1)));
  seq->push_back(lrelu());
  const int strides[3] = {2, 2, 1};
  for (int i = 0; i < 3; ++i) {
    const int k = strides[i] == 2 ? 4 : 3;
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(w[i], w[i + 1], k)
                                  .stride(strides[i])
                                  .padding(1)
                                  .bias(!options.batch_norm)));
    if (options.batch_norm) seq->push_back(nn::BatchNorm2d(w[i + 1]));
    seq->push_back(lrelu());
  }
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(w[3], 1, 3).padding(1)));
  body_ = register_module("body", seq);
}

torch::Tensor DNetImpl::forward(const torch::Tensor& patch) {
  check_input(patch, 3, patch_size_, "d-net patch");
  auto logits = body_->forward(centered(patch)).mean({1, 2, 3});
  return torch::sigmoid(logits).clamp(kCriticEps, 1.0 - kCriticEps);
}

ModelBundle::ModelBundle(ModelConfig cfg)
    : config((cfg.validate(), std::move(cfg))),
      param_net(config.param, config.patch_size),
      matte_net(config.matte, config.patch_size),
      d_net(config.critic, config.patch_size) {}

void ModelBundle::train(bool on) {
  param_net->train(on);
  matte_net->train(on);
  d_net->train(on);
}

std::int64_t ModelBundle::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : param_net->parameters()) n += p.numel();
  for (const auto& p : matte_net->parameters()) n += p.numel();
  for (const auto& p : d_net->parameters()) n += p.numel();
  return n;
}

GeneratorOutput run_generator(ModelBundle& models, const torch::Tensor& patch,
                              const torch::Tensor& mask, bool pass_through_clamp) {
  GeneratorOutput g;
  g.params = squash_params(models.param_net->forward(patch, mask), models.config.bounds);
  g.relit = relight(patch, g.params, pass_through_clamp);
  g.alpha = models.matte_net->forward(patch, mask, g.relit);
  g.output = compose(patch, g.relit, g.alpha);
  return g;
}

ShadowParams param_net_forward(ModelBundle& models, const RasterImage& patch,
                               const ShadowMask& mask) {
  torch::NoGradGuard no_grad;
  models.eval();
  auto p = to_tensor(patch);
  auto m = to_tensor(mask);
  ensure_batched(p);
  ensure_batched(m);
  const auto raw = models.param_net->forward(p, m);
  return params_from_tensor(squash_params(raw, models.config.bounds)[0]);
}

MatteLayer matte_net_forward(ModelBundle& models, const RasterImage& patch,
                             const ShadowMask& mask, const RasterImage& relit) {
  torch::NoGradGuard no_grad;
  models.eval();
  auto p = to_tensor(patch);
  auto m = to_tensor(mask);
  auto r = to_tensor(relit);
  ensure_batched(p);
  ensure_batched(m);
  ensure_batched(r);
  return matte_from_tensor(models.matte_net->forward(p, m, r)[0]);
}

double d_net_forward(ModelBundle& models, const RasterImage& patch) {
  torch::NoGradGuard no_grad;
  models.eval();
  auto p = to_tensor(patch);
  ensure_batched(p);
  return models.d_net->forward(p)[0].item<double>();
}

}  // namespace deshadow
