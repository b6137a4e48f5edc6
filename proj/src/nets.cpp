// SPDX-License-Identifier: Apache-2.0
#include "diffrect/nets.hpp"

#include <cmath>
#include <string>

#include "diffrect/errors.hpp"
#include "diffrect/tensor_ops.hpp"

namespace diffrect {

namespace F = torch::nn::functional;

namespace {

constexpr double kLeakySlope = 0.01;

int64_t group_count(int64_t channels) {
  for (int64_t g = 8; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

torch::Tensor leaky(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope));
}

torch::Tensor resize_to(const torch::Tensor& x, at::IntArrayRef hw) {
  if (x.size(2) == hw[0] && x.size(3) == hw[1]) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{hw[0], hw[1]})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

int64_t ModelConfig::image_feature_channels() const {
  int64_t total = 0;
  for (int64_t s = 0; s < seg.depth; ++s) total += seg.base_width << s;
  return total;
}

void ModelConfig::validate() const {
  require(seg.in_channels >= 1, "model config: in_channels must be positive");
  require(seg.num_classes >= 2 && seg.num_classes <= 64, "model config: num_classes must be in [2, 64]");
  require(seg.base_width >= 1 && seg.depth >= 1, "model config: seg width/depth must be positive");
  require(embed.stages >= 1 && embed.base_width >= 1 && embed.out_channels >= 1,
          "model config: embed sizes must be positive");
  require(embed.convs_per_stage == 2 && embed.kernel == 3,
          "model config: embedding stages use two 3x3 convolutions");
  require(embed.guidance_dim % 2 == 0 && denoiser.time_dim % 2 == 0,
          "model config: embedding dimensions must be even");
  require(denoiser.hidden >= 1 && denoiser.levels >= 1, "model config: denoiser sizes must be positive");
  require(denoiser.convs_per_stage == 2, "model config: denoiser stages use two 3x3 convolutions");
  require(decoder.base_width >= 1, "model config: decoder width must be positive");
  require(image_size % (int64_t{1} << embed.stages) == 0,
          "model config: image size must be divisible by 2^stages");
  require(image_size % (int64_t{1} << (seg.depth - 1)) == 0,
          "model config: image size must be divisible by 2^(depth-1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"image_size", c.image_size},
       {"seg", {{"in_channels", c.seg.in_channels}, {"num_classes", c.seg.num_classes},
                {"base_width", c.seg.base_width}, {"depth", c.seg.depth}}},
       {"embed", {{"stages", c.embed.stages}, {"convs_per_stage", c.embed.convs_per_stage},
                  {"kernel", c.embed.kernel}, {"base_width", c.embed.base_width},
                  {"out_channels", c.embed.out_channels}, {"guidance_dim", c.embed.guidance_dim},
                  {"guidance_scale", c.embed.guidance_scale}}},
       {"denoiser", {{"hidden", c.denoiser.hidden}, {"levels", c.denoiser.levels},
                     {"convs_per_stage", c.denoiser.convs_per_stage}, {"time_dim", c.denoiser.time_dim}}},
       {"decoder", {{"base_width", c.decoder.base_width}}}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.image_size = j.at("image_size").get<int64_t>();
  const auto& s = j.at("seg");
  c.seg = {s.at("in_channels"), s.at("num_classes"), s.at("base_width"), s.at("depth")};
  const auto& e = j.at("embed");
  c.embed = {e.at("stages"), e.at("convs_per_stage"), e.at("kernel"), e.at("base_width"),
             e.at("out_channels"), e.at("guidance_dim"), e.at("guidance_scale")};
  const auto& d = j.at("denoiser");
  c.denoiser = {d.at("hidden"), d.at("levels"), d.at("convs_per_stage"), d.at("time_dim")};
  c.decoder.base_width = j.at("decoder").at("base_width");
}

std::vector<double> embed_sinusoidal(double x, int64_t dim) {
  require(dim > 0 && dim % 2 == 0, "embed_sinusoidal: dimension must be positive and even");
  std::vector<double> out(static_cast<std::size_t>(dim));
  const int64_t half = dim / 2;
  for (int64_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[static_cast<std::size_t>(2 * i)] = std::sin(x * freq);
    out[static_cast<std::size_t>(2 * i + 1)] = std::cos(x * freq);
  }
  return out;
}

torch::Tensor embed_sinusoidal(const torch::Tensor& x, int64_t dim) {
  require(dim > 0 && dim % 2 == 0, "embed_sinusoidal: dimension must be positive and even");
  require(x.dim() == 1, "embed_sinusoidal: expected a [B] tensor");
  const int64_t half = dim / 2;
  const auto dtype = x.is_floating_point() ? x.scalar_type() : torch::kFloat32;
  auto freqs = torch::pow(10000.0, -torch::arange(half, torch::kFloat64) / static_cast<double>(half));
  auto args = x.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::stack({args.sin(), args.cos()}, 2).reshape({x.size(0), dim}).to(dtype);
}

ConvUnitImpl::ConvUnitImpl(int64_t in, int64_t out, NormKind norm,
                           torch::nn::detail::conv_padding_mode_t padding) {
  conv_ = register_module("conv", torch::nn::Conv2d(
                                      torch::nn::Conv2dOptions(in, out, 3).padding(1).padding_mode(padding)));
  if (norm == NormKind::Batch)
    batch_ = register_module("norm", torch::nn::BatchNorm2d(out));
  else
    group_ = register_module("norm", torch::nn::GroupNorm(group_count(out), out));
}

torch::Tensor ConvUnitImpl::forward(const torch::Tensor& x) {
  auto h = conv_(x);
  h = batch_ ? batch_(h) : group_(h);
  return leaky(h);
}

// ---------------------------------------------------------------------------

SegNetImpl::SegNetImpl(const SegNetConfig& cfg) : cfg_(cfg) {
  require(cfg.depth >= 1 && cfg.base_width >= 1, "SegNet: depth and width must be positive");
  int64_t in = cfg.in_channels;
  for (int64_t s = 0; s < cfg.depth; ++s) {
    const int64_t w = cfg.base_width << s;
    const auto name = "enc" + std::to_string(s);
    encoder_.emplace_back(register_module(name + "a", ConvUnit(in, w, NormKind::Group)),
                          register_module(name + "b", ConvUnit(w, w, NormKind::Group)));
    in = w;
  }
  for (int64_t s = cfg.depth - 2; s >= 0; --s) {
    const int64_t w = cfg.base_width << s;
    const auto name = "dec" + std::to_string(s);
    decoder_.emplace_back(register_module(name + "a", ConvUnit(in + w, w, NormKind::Group)),
                          register_module(name + "b", ConvUnit(w, w, NormKind::Group)));
    in = w;
  }
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, cfg.num_classes, 1)));
}

SegOutput SegNetImpl::forward(const torch::Tensor& image) {
  require(image.dim() == 4 && image.size(1) == cfg_.in_channels, "seg_forward: expected [B, in_channels, H, W]");
  require_finite(image, "seg_forward");
  SegOutput out;
  auto h = image;
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    if (s > 0) h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
    h = encoder_[s].second(encoder_[s].first(h));
    out.features.push_back(h);
  }
  for (std::size_t k = 0; k < decoder_.size(); ++k) {
    const auto& skip = out.features[encoder_.size() - 2 - k];
    h = resize_to(h, {skip.size(2), skip.size(3)});
    h = decoder_[k].second(decoder_[k].first(torch::cat({h, skip}, 1)));
  }
  out.logits = head_(h);
  return out;
}

torch::Tensor image_feature_bundle(const SegOutput& out, int64_t latent_size) {
  std::vector<torch::Tensor> parts;
  for (const auto& f : out.features)
    parts.push_back(F::adaptive_avg_pool2d(f, F::AdaptiveAvgPool2dFuncOptions({latent_size, latent_size})));
  return torch::cat(parts, 1);
}

// ---------------------------------------------------------------------------

SemanticEmbedImpl::SemanticEmbedImpl(const EmbedConfig& cfg) : cfg_(cfg) {
  int64_t in = 3;
  for (int64_t s = 0; s < cfg.stages; ++s) {
    const int64_t w = s == cfg.stages - 1 ? cfg.out_channels : cfg.base_width << s;
    const auto name = "stage" + std::to_string(s);
    Stage st;
    st.first = register_module(name + "a", ConvUnit(in, w, NormKind::Batch));
    st.second = register_module(name + "b", ConvUnit(w, w, NormKind::Batch));
    st.guidance = register_module(name + "g", torch::nn::Linear(cfg.guidance_dim, w));
    stages_.push_back(st);
    in = w;
  }
}

torch::Tensor SemanticEmbedImpl::forward(const torch::Tensor& semantic, const torch::Tensor& tau) {
  require(semantic.dim() == 4 && semantic.size(1) == 3, "bsem_forward: expected [B, 3, H, W]");
  const int64_t factor = int64_t{1} << cfg_.stages;
  require(semantic.size(2) % factor == 0 && semantic.size(3) % factor == 0,
          "bsem_forward: spatial size must be divisible by " + std::to_string(factor));
  require(tau.dim() == 1 && tau.size(0) == semantic.size(0), "bsem_forward: one tau per item");
  ++calls_;
  const auto gemb = embed_sinusoidal(tau.to(torch::kFloat64) * cfg_.guidance_scale, cfg_.guidance_dim)
                        .to(semantic.scalar_type());
  auto h = semantic;
  for (auto& st : stages_) {
    h = st.first(h);
    h = h + st.guidance(gemb).unsqueeze(-1).unsqueeze(-1);
    h = st.second(h);
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
  }
  return h;
}

// ---------------------------------------------------------------------------

DenoiserImpl::DenoiserImpl(const DenoiserConfig& cfg, int64_t latent_channels, int64_t feature_channels)
    : cfg_(cfg), latent_channels_(latent_channels), feature_channels_(feature_channels) {
  time_mlp_ = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(cfg.time_dim, cfg.time_dim),
                                                                 torch::nn::SiLU()));
  input_ = make_block("in", 2 * latent_channels + feature_channels, cfg.hidden);
  for (int64_t l = 0; l < cfg.levels; ++l) down_.push_back(make_block("down" + std::to_string(l), cfg.hidden, cfg.hidden));
  for (int64_t l = 0; l < cfg.levels; ++l) up_.push_back(make_block("up" + std::to_string(l), 2 * cfg.hidden, cfg.hidden));
  out_ = register_module("out", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.hidden, latent_channels, 1)));
  // The head predicts a correction to the condition; start it near zero so an
  // untrained denoiser already returns roughly the condition.
  torch::NoGradGuard no_grad;
  out_->weight.mul_(0.1);
  out_->bias.zero_();
}

DenoiserImpl::Block DenoiserImpl::make_block(const std::string& name, int64_t in, int64_t out) {
  Block b;
  b.first = register_module(name + "a", ConvUnit(in, out, NormKind::Group));
  b.second = register_module(name + "b", ConvUnit(out, out, NormKind::Group));
  b.time = register_module(name + "t", torch::nn::Linear(cfg_.time_dim, out));
  return b;
}

torch::Tensor DenoiserImpl::run(Block& b, const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = b.first(x);
  h = h + b.time(temb).unsqueeze(-1).unsqueeze(-1);
  return b.second(h);
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& z_noisy, const torch::Tensor& t, const torch::Tensor& z_cond,
                                    const torch::Tensor& features) {
  require(z_noisy.dim() == 4 && z_noisy.size(1) == latent_channels_, "denoiser_forward: bad latent shape");
  require(z_noisy.sizes().equals(z_cond.sizes()), "denoiser_forward: condition shape differs from latent");
  require(features.dim() == 4 && features.size(0) == z_noisy.size(0) && features.size(1) == feature_channels_ &&
              features.size(2) == z_noisy.size(2) && features.size(3) == z_noisy.size(3),
          "denoiser_forward: image features do not match the latent grid");
  require(t.dim() == 1 && t.size(0) == z_noisy.size(0), "denoiser_forward: one step per item");
  ++calls_;
  const auto temb = time_mlp_->forward(embed_sinusoidal(t.to(torch::kFloat64), cfg_.time_dim).to(z_noisy.scalar_type()));

  std::vector<torch::Tensor> skips;
  auto h = run(input_, torch::cat({z_noisy, z_cond, features}, 1), temb);
  for (auto& b : down_) {
    skips.push_back(h);
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2).ceil_mode(true));
    h = run(b, h, temb);
  }
  for (auto& b : up_) {
    auto skip = skips.back();
    skips.pop_back();
    h = resize_to(h, {skip.size(2), skip.size(3)});
    h = run(b, torch::cat({h, skip}, 1), temb);
  }
  return z_cond + out_(h);
}

// ---------------------------------------------------------------------------

LatentDecoderImpl::LatentDecoderImpl(const DecoderConfig& cfg, int64_t latent_channels, int64_t stages,
                                     int64_t classes) {
  int64_t in = cfg.base_width << (stages - 1);
  project_ = register_module("project", torch::nn::Conv2d(torch::nn::Conv2dOptions(latent_channels, in, 1)));
  for (int64_t s = 0; s < stages; ++s) {
    const int64_t w = cfg.base_width << (stages - 1 - s);
    stages_.push_back(register_module("up" + std::to_string(s), ConvUnit(in, w, NormKind::Group, torch::kReplicate)));
    in = w;
  }
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, classes, 1)));
}

torch::Tensor LatentDecoderImpl::forward(const torch::Tensor& latent) {
  require(latent.dim() == 4, "decode_latent: expected [B, L, h, w]");
  require_finite(latent, "decode_latent");
  ++calls_;
  auto h = project_(latent);
  for (auto& st : stages_) {
    h = resize_to(h, {2 * h.size(2), 2 * h.size(3)});
    h = st(h);
  }
  return head_(h);
}

// ---------------------------------------------------------------------------

NetworksImpl::NetworksImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  seg = register_module("seg", SegNet(cfg.seg));
  bsem = register_module("bsem", SemanticEmbed(cfg.embed));
  denoiser = register_module("denoiser", Denoiser(cfg.denoiser, cfg.latent_channels(), cfg.image_feature_channels()));
  decoder = register_module("decoder",
                            LatentDecoder(cfg.decoder, cfg.latent_channels(), cfg.embed.stages, cfg.seg.num_classes));
}

}  // namespace diffrect
