#include "zigan/networks.hpp"

#include <bit>

#include "zigan/errors.hpp"

namespace zigan {
namespace {

int layer_count(int resolution) {
  if (resolution < 64 || !std::has_single_bit(static_cast<unsigned>(resolution))) {
    throw Error(ErrorCode::BadResolution, "resolution must be a power of two >= 64, got " + std::to_string(resolution));
  }
  return std::countr_zero(static_cast<unsigned>(resolution));
}

int ladder_channels(int layer, int width_divisor) {
  const int full = std::min(64 << layer, 512);
  return std::max(1, full / std::max(1, width_divisor));
}

torch::nn::Conv2d make_conv(int in, int out, int stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 5).stride(stride).padding(2));
}

void check_image_batch(const torch::Tensor& x, int resolution, const char* who) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != resolution || x.size(3) != resolution) {
    throw Error(ErrorCode::ShapeMismatch, std::string(who) + " expects N×3×" + std::to_string(resolution) + "×" +
                                              std::to_string(resolution) + " input, got " + c10::str(x.sizes()));
  }
}

}  // namespace

std::vector<LayerSpec> encoder_specs(const GeneratorOptions& opts) {
  const int n = layer_count(opts.resolution);
  std::vector<LayerSpec> specs;
  int in = 3;
  for (int i = 0; i < n; ++i) {
    LayerSpec s;
    s.in_channels = in;
    s.out_channels = ladder_channels(i, opts.width_divisor);
    s.batch_norm = i > 0;
    s.activation = Activation::LeakyRelu;
    s.output_size = opts.resolution >> (i + 1);
    specs.push_back(s);
    in = s.out_channels;
  }
  return specs;
}

std::vector<LayerSpec> decoder_specs(const GeneratorOptions& opts) {
  const auto enc = encoder_specs(opts);
  const int n = static_cast<int>(enc.size());
  std::vector<LayerSpec> specs;
  int in = enc.back().out_channels;
  for (int j = 0; j < n; ++j) {
    LayerSpec s;
    const bool last = j == n - 1;
    s.in_channels = in;
    s.out_channels = last ? 3 : enc[static_cast<std::size_t>(n - 2 - j)].out_channels;
    s.batch_norm = !last;
    s.activation = last ? Activation::Tanh : Activation::Relu;
    s.dropout_rate = j < 3 && !last ? 0.5 : 0.0;
    s.output_size = 2 << j;
    specs.push_back(s);
    in = s.out_channels + (opts.skip_connections && !last ? enc[static_cast<std::size_t>(n - 2 - j)].out_channels : 0);
  }
  return specs;
}

EncoderImpl::EncoderImpl(const GeneratorOptions& opts) : opts_(opts), specs_(encoder_specs(opts)) {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    const auto idx = std::to_string(i + 1);
    convs_.push_back(register_module("conv" + idx, make_conv(s.in_channels, s.out_channels, s.stride)));
    norms_.push_back(s.batch_norm ? register_module("norm" + idx, torch::nn::BatchNorm2d(s.out_channels))
                                  : torch::nn::BatchNorm2d(nullptr));
  }
}

LatentCode EncoderImpl::forward(const torch::Tensor& x) {
  check_image_batch(x, opts_.resolution, "encoder");
  LatentCode code;
  auto h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i]->forward(h);
    if (norms_[i]) h = norms_[i]->forward(h);
    h = torch::leaky_relu(h, kLeakySlope);
    if (i + 1 < convs_.size()) code.skips.push_back(h);
  }
  code.bottleneck = h;
  return code;
}

DecoderImpl::DecoderImpl(const GeneratorOptions& opts) : opts_(opts), specs_(decoder_specs(opts)) {
  for (std::size_t j = 0; j < specs_.size(); ++j) {
    const auto& s = specs_[j];
    const auto idx = std::to_string(j + 1);
    deconvs_.push_back(register_module(
        "deconv" + idx, torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(s.in_channels, s.out_channels, 5)
                                                       .stride(2)
                                                       .padding(2)
                                                       .output_padding(1))));
    norms_.push_back(s.batch_norm ? register_module("norm" + idx, torch::nn::BatchNorm2d(s.out_channels))
                                  : torch::nn::BatchNorm2d(nullptr));
  }
}

std::vector<int64_t> DecoderImpl::input_channels() const {
  std::vector<int64_t> out;
  for (const auto& s : specs_) out.push_back(s.in_channels);
  return out;
}

torch::Tensor DecoderImpl::forward(const LatentCode& latent, std::optional<at::Generator> dropout_rng) {
  std::vector<torch::Tensor> unused;
  return forward_traced(latent, unused, std::move(dropout_rng));
}

torch::Tensor DecoderImpl::forward_traced(const LatentCode& latent, std::vector<torch::Tensor>& trace,
                                          std::optional<at::Generator> dropout_rng) {
  const std::size_t n = specs_.size();
  if (!latent.bottleneck.defined() || latent.bottleneck.dim() != 4 ||
      latent.bottleneck.size(1) != specs_.front().in_channels || latent.bottleneck.size(2) != 1 ||
      latent.bottleneck.size(3) != 1) {
    throw Error(ErrorCode::ShapeMismatch, "decoder expects an N×C×1×1 bottleneck from the matching encoder");
  }
  if (opts_.skip_connections && latent.skips.size() != n - 1) {
    throw Error(ErrorCode::ShapeMismatch, "decoder expects " + std::to_string(n - 1) + " skip activations");
  }
  trace.clear();
  auto h = latent.bottleneck;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& s = specs_[j];
    h = deconvs_[j]->forward(h);
    if (norms_[j]) h = norms_[j]->forward(h);
    if (s.dropout_rate > 0.0 && is_training()) {
      const double keep = 1.0 - s.dropout_rate;
      auto mask = torch::empty_like(h).bernoulli_(keep, dropout_rng);
      h = h * mask / keep;
    }
    if (s.activation == Activation::Tanh) {
      h = torch::tanh(h);
    } else {
      h = torch::relu(h);
      if (opts_.skip_connections) {
        const auto& skip = latent.skips[n - 2 - j];
        if (skip.sizes().slice(2) != h.sizes().slice(2)) {
          throw Error(ErrorCode::ShapeMismatch, "skip activation does not match decoder resolution");
        }
        h = torch::cat({h, skip}, 1);
      }
    }
    trace.push_back(h);
  }
  return h;
}

GeneratorImpl::GeneratorImpl(const GeneratorOptions& opts) : opts_(opts) {
  encoder = register_module("encoder", Encoder(opts));
  decoder = register_module("decoder", Decoder(opts));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x, std::optional<at::Generator> dropout_rng) {
  return decoder->forward(encoder->forward(x), std::move(dropout_rng));
}

void init_weights(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& m : module.modules(/*include_self=*/true)) {
    if (auto* conv = m->as<torch::nn::Conv2dImpl>()) {
      conv->weight.normal_(0.0, kInitStd, gen);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* deconv = m->as<torch::nn::ConvTranspose2dImpl>()) {
      deconv->weight.normal_(0.0, kInitStd, gen);
      if (deconv->bias.defined()) deconv->bias.zero_();
    } else if (auto* bn = m->as<torch::nn::BatchNorm2dImpl>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
      bn->reset_running_stats();
    } else if (auto* d = m->as<DiscriminatorImpl>()) {
      d->cam_avg_weight.normal_(0.0, kInitStd, gen);
      d->cam_max_weight.normal_(0.0, kInitStd, gen);
    }
  }
}

Generator init_generator(std::uint64_t seed, const GeneratorOptions& opts) {
  layer_count(opts.resolution);
  Generator gen(opts);
  init_weights(*gen, seed);
  return gen;
}

LatentCode encoder_forward(Generator& gen, const torch::Tensor& batch) { return gen->encoder->forward(batch); }

torch::Tensor decoder_forward(Generator& gen, const LatentCode& latent, std::optional<at::Generator> dropout_rng) {
  return gen->decoder->forward(latent, std::move(dropout_rng));
}

torch::Tensor generate(Generator& gen, const torch::Tensor& batch, std::optional<at::Generator> dropout_rng) {
  return gen->forward(batch, std::move(dropout_rng));
}

CamResult cam_attention(const torch::Tensor& features, const torch::Tensor& w_avg, const torch::Tensor& w_max) {
  if (features.dim() != 4) throw Error(ErrorCode::ShapeMismatch, "CAM expects N×n×h×w features");
  const auto n = features.size(1);
  if (w_avg.numel() != n || w_max.numel() != n) {
    throw Error(ErrorCode::ShapeMismatch, "CAM weight count must equal the number of feature maps");
  }
  const auto avg = features.mean({2, 3});
  const auto max = features.amax({2, 3});
  const auto logit = torch::sigmoid((avg * w_avg.reshape({1, n})).sum(1) + (max * w_max.reshape({1, n})).sum(1));
  const auto per_map = features * (w_avg + w_max).reshape({1, n, 1, 1});
  return CamResult{logit, AttentionMap{per_map}};
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorOptions& opts) : opts_(opts) {
  layer_count(opts.resolution);
  if (opts.conv_layers < 1 || opts.conv_layers > 5) {
    throw Error(ErrorCode::Config, "discriminator depth must be between 1 and 5");
  }
  int in = 3;
  for (int i = 0; i < opts.conv_layers; ++i) {
    const int out = ladder_channels(i, opts.width_divisor);
    convs_.push_back(register_module("conv" + std::to_string(i + 1), make_conv(in, out, i < 3 ? 2 : 1)));
    in = out;
  }
  feature_maps_ = in;
  cam_avg_weight = register_parameter("cam_avg_weight", torch::zeros({in}));
  cam_max_weight = register_parameter("cam_max_weight", torch::zeros({in}));
  head_ = register_module("head", make_conv(in, 1, 1));
}

torch::Tensor DiscriminatorImpl::features(const torch::Tensor& img) {
  check_image_batch(img, opts_.resolution, "discriminator");
  auto h = img;
  for (auto& conv : convs_) h = torch::leaky_relu(conv->forward(h), kLeakySlope);
  return h;
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& img) {
  auto cam = cam_attention(features(img), cam_avg_weight, cam_max_weight);
  auto scores = head_->forward(cam.attention.per_map);
  return DiscriminatorOutput{scores, cam.cam_logit, cam.attention};
}

Discriminator init_discriminator(std::uint64_t seed, const DiscriminatorOptions& opts) {
  Discriminator disc(opts);
  init_weights(*disc, seed);
  return disc;
}

DiscriminatorOutput discriminator_forward(Discriminator& disc, const torch::Tensor& img) { return disc->forward(img); }

Heatmap export_attention_heatmap(const AttentionMap& attention, int resolution, int64_t item) {
  torch::NoGradGuard no_grad;
  if (!attention.per_map.defined() || attention.per_map.dim() != 4) {
    throw Error(ErrorCode::ShapeMismatch, "attention map must be N×n×h×w");
  }
  auto summed = attention.per_map[item].sum(0).unsqueeze(0).unsqueeze(0).to(torch::kFloat64);
  auto up = torch::nn::functional::interpolate(summed, torch::nn::functional::InterpolateFuncOptions()
                                                           .size(std::vector<int64_t>{resolution, resolution})
                                                           .mode(torch::kBilinear)
                                                           .align_corners(false))
                .squeeze(0)
                .squeeze(0);
  const double lo = up.min().item<double>();
  const double hi = up.max().item<double>();
  if (!(hi > lo)) return Heatmap{torch::zeros({resolution, resolution}, torch::kFloat32), true};
  return Heatmap{((up - lo) / (hi - lo)).clamp(0.0, 1.0).to(torch::kFloat32), false};
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace zigan
