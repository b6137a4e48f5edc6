// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace diffrect {

struct SegNetConfig {
  int64_t in_channels = 1;
  int64_t num_classes = 4;
  int64_t base_width = 16;
  int64_t depth = 4;
};

/// Semantic context embedding block. Stage s has width base_width * 2^s except
/// the last, which emits out_channels.
struct EmbedConfig {
  int64_t stages = 4;
  int64_t convs_per_stage = 2;
  int64_t kernel = 3;
  int64_t base_width = 16;
  int64_t out_channels = 256;
  int64_t guidance_dim = 64;
  /// tau in [0, 2] is stretched onto a timestep-like range before embedding.
  double guidance_scale = 1000.0;
};

struct DenoiserConfig {
  int64_t hidden = 64;
  int64_t levels = 2;  // each level halves the latent, so 2 levels = 4x
  int64_t convs_per_stage = 2;
  int64_t time_dim = 64;
};

struct DecoderConfig {
  int64_t base_width = 16;
};

struct ModelConfig {
  int64_t image_size = 64;
  SegNetConfig seg;
  EmbedConfig embed;
  DenoiserConfig denoiser;
  DecoderConfig decoder;

  int64_t latent_size() const { return image_size >> embed.stages; }
  int64_t latent_channels() const { return embed.out_channels; }
  /// Channels of the concatenated multi-scale encoder features.
  int64_t image_feature_channels() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Interleaved [sin(x w_0), cos(x w_0), sin(x w_1), ...] with
/// w_i = 10000^(-2i/dim).
std::vector<double> embed_sinusoidal(double x, int64_t dim);
/// Batched form: x is [B], result [B, dim].
torch::Tensor embed_sinusoidal(const torch::Tensor& x, int64_t dim);

enum class NormKind { Group, Batch };

/// 3x3 conv -> norm -> LeakyReLU.
class ConvUnitImpl : public torch::nn::Module {
 public:
  ConvUnitImpl(int64_t in, int64_t out, NormKind norm,
               torch::nn::detail::conv_padding_mode_t padding = torch::kZeros);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::GroupNorm group_{nullptr};
  torch::nn::BatchNorm2d batch_{nullptr};
};
TORCH_MODULE(ConvUnit);

struct SegOutput {
  torch::Tensor logits;                 // [B, C, H, W]
  std::vector<torch::Tensor> features;  // encoder stage outputs, fine to coarse
};

/// U-Net segmentation network.
class SegNetImpl : public torch::nn::Module {
 public:
  explicit SegNetImpl(const SegNetConfig& cfg);
  SegOutput forward(const torch::Tensor& image);

  const SegNetConfig& config() const { return cfg_; }

 private:
  SegNetConfig cfg_;
  std::vector<std::pair<ConvUnit, ConvUnit>> encoder_;
  std::vector<std::pair<ConvUnit, ConvUnit>> decoder_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(SegNet);

/// Encoder features average-pooled to the latent grid and concatenated.
torch::Tensor image_feature_bundle(const SegOutput& out, int64_t latent_size);

/// B_sem: SCS label image plus calibration guidance -> latent.
class SemanticEmbedImpl : public torch::nn::Module {
 public:
  explicit SemanticEmbedImpl(const EmbedConfig& cfg);
  /// semantic: [B, 3, H, W] in [-1, 1]; tau: [B]. Returns [B, out, H/2^s, W/2^s].
  torch::Tensor forward(const torch::Tensor& semantic, const torch::Tensor& tau);

  int64_t calls() const { return calls_; }

 private:
  EmbedConfig cfg_;
  struct Stage {
    ConvUnit first{nullptr}, second{nullptr};
    torch::nn::Linear guidance{nullptr};
  };
  std::vector<Stage> stages_;
  int64_t calls_ = 0;
};
TORCH_MODULE(SemanticEmbed);

/// Conditional U-Net on the latent grid. Its output is a clean-latent estimate,
/// formed as the condition plus a learned correction; trainer.hpp wraps it as
/// a noise predictor.
class DenoiserImpl : public torch::nn::Module {
 public:
  DenoiserImpl(const DenoiserConfig& cfg, int64_t latent_channels, int64_t feature_channels);
  /// z_noisy, z_cond: [B, L, h, w]; t: [B] integer steps; features: [B, F, h, w].
  torch::Tensor forward(const torch::Tensor& z_noisy, const torch::Tensor& t, const torch::Tensor& z_cond,
                        const torch::Tensor& features);

  int64_t calls() const { return calls_; }

 private:
  struct Block {
    ConvUnit first{nullptr}, second{nullptr};
    torch::nn::Linear time{nullptr};
  };
  Block make_block(const std::string& name, int64_t in, int64_t out);
  torch::Tensor run(Block& b, const torch::Tensor& x, const torch::Tensor& temb);

  DenoiserConfig cfg_;
  int64_t latent_channels_;
  int64_t feature_channels_;
  torch::nn::Sequential time_mlp_{nullptr};
  Block input_;
  std::vector<Block> down_;
  std::vector<Block> up_;
  torch::nn::Conv2d out_{nullptr};
  int64_t calls_ = 0;
};
TORCH_MODULE(Denoiser);

/// Maps a latent back to full-resolution class logits: 1x1 projection, then one
/// bilinear 2x upsample + 3x3 conv unit per embedding stage, then a 1x1 head.
class LatentDecoderImpl : public torch::nn::Module {
 public:
  LatentDecoderImpl(const DecoderConfig& cfg, int64_t latent_channels, int64_t stages, int64_t classes);
  torch::Tensor forward(const torch::Tensor& latent);

  int64_t calls() const { return calls_; }

 private:
  torch::nn::Conv2d project_{nullptr};
  std::vector<ConvUnit> stages_;
  torch::nn::Conv2d head_{nullptr};
  int64_t calls_ = 0;
};
TORCH_MODULE(LatentDecoder);

/// Every learnable component, registered under `seg`, `bsem`, `denoiser`, `decoder`.
class NetworksImpl : public torch::nn::Module {
 public:
  explicit NetworksImpl(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  SegNet seg{nullptr};
  SemanticEmbed bsem{nullptr};
  Denoiser denoiser{nullptr};
  LatentDecoder decoder{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(Networks);

}  // namespace diffrect
