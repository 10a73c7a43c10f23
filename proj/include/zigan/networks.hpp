#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace zigan {

enum class Activation { LeakyRelu, Relu, Tanh };

/// One 5×5 stride-2 convolution or deconvolution of the generator.
struct LayerSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 5;
  int stride = 2;
  bool batch_norm = true;
  Activation activation = Activation::LeakyRelu;
  double dropout_rate = 0.0;
  int output_size = 0;  // spatial side after the layer
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kInitStd = 0.02;

struct GeneratorOptions {
  int resolution = 256;
  /// Channel counts are divided by this; 1 is the full-width architecture.
  int width_divisor = 1;
  bool skip_connections = true;
};

/// Encoder output: the 1×1 bottleneck plus the activations of every earlier
/// layer, which the decoder concatenates back in.
struct LatentCode {
  torch::Tensor bottleneck;
  std::vector<torch::Tensor> skips;
};

/// Layer ladders for a resolution: log2(resolution) layers each way, channels
/// (64,128,256,512,512,...) on the encoder side and the mirror on the decoder.
std::vector<LayerSpec> encoder_specs(const GeneratorOptions& opts);
std::vector<LayerSpec> decoder_specs(const GeneratorOptions& opts);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const GeneratorOptions& opts);

  LatentCode forward(const torch::Tensor& x);

  const std::vector<LayerSpec>& specs() const { return specs_; }

 private:
  GeneratorOptions opts_;
  std::vector<LayerSpec> specs_;
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<torch::nn::BatchNorm2d> norms_;  // null where the layer has none
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const GeneratorOptions& opts);

  /// Dropout (training mode only) draws from `dropout_rng` when given.
  torch::Tensor forward(const LatentCode& latent, std::optional<at::Generator> dropout_rng = std::nullopt);
  /// Same as forward; also returns each layer's output after skip concatenation.
  torch::Tensor forward_traced(const LatentCode& latent, std::vector<torch::Tensor>& trace,
                               std::optional<at::Generator> dropout_rng = std::nullopt);

  /// Channels entering each decoder layer; the Table-1 style 1024 rows appear
  /// here when skip connections are on.
  std::vector<int64_t> input_channels() const;
  const std::vector<LayerSpec>& specs() const { return specs_; }

 private:
  GeneratorOptions opts_;
  std::vector<LayerSpec> specs_;
  std::vector<torch::nn::ConvTranspose2d> deconvs_;
  std::vector<torch::nn::BatchNorm2d> norms_;
};
TORCH_MODULE(Decoder);

/// Encoder + decoder pair (E_s/G_s or E_t/G_t).
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorOptions& opts);

  torch::Tensor forward(const torch::Tensor& x, std::optional<at::Generator> dropout_rng = std::nullopt);

  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
  const GeneratorOptions& options() const { return opts_; }

 private:
  GeneratorOptions opts_;
};
TORCH_MODULE(Generator);

/// Conv weights ~ N(0, 0.02), biases 0, batch-norm scale 1 and shift 0.
void init_weights(torch::nn::Module& module, std::uint64_t seed);

/// Throws BadResolution unless resolution is a power of two ≥ 64.
Generator init_generator(std::uint64_t seed, const GeneratorOptions& opts);
inline Generator init_generator(std::uint64_t seed, int resolution) {
  return init_generator(seed, GeneratorOptions{resolution, 1, true});
}

LatentCode encoder_forward(Generator& gen, const torch::Tensor& batch);
torch::Tensor decoder_forward(Generator& gen, const LatentCode& latent,
                              std::optional<at::Generator> dropout_rng = std::nullopt);
torch::Tensor generate(Generator& gen, const torch::Tensor& batch,
                       std::optional<at::Generator> dropout_rng = std::nullopt);

struct DiscriminatorOptions {
  int resolution = 256;
  int width_divisor = 1;
  /// 5 for the global discriminator; the optional local one uses 3.
  int conv_layers = 5;
};

/// Weighted feature maps a = w ⊙ E, N×n×h×w.
struct AttentionMap {
  torch::Tensor per_map;
};

struct DiscriminatorOutput {
  torch::Tensor patch_scores;  // N×1×h×w
  torch::Tensor cam_logit;     // N, sigmoid output in (0,1)
  AttentionMap attention;
};

struct CamResult {
  torch::Tensor cam_logit;
  AttentionMap attention;
};

/// CAM auxiliary head over encoded feature maps (N×n×h×w):
///   logit = sigmoid(Σ_k w_avg[k]·avgpool(E_k) + w_max[k]·maxpool(E_k))
///   attention[k] = (w_avg[k] + w_max[k]) · E_k
CamResult cam_attention(const torch::Tensor& features, const torch::Tensor& w_avg, const torch::Tensor& w_max);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorOptions& opts);

  DiscriminatorOutput forward(const torch::Tensor& img);
  torch::Tensor features(const torch::Tensor& img);

  int feature_maps() const { return feature_maps_; }
  const DiscriminatorOptions& options() const { return opts_; }

  torch::Tensor cam_avg_weight;
  torch::Tensor cam_max_weight;

 private:
  DiscriminatorOptions opts_;
  int feature_maps_ = 0;
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Discriminator);

Discriminator init_discriminator(std::uint64_t seed, const DiscriminatorOptions& opts);

DiscriminatorOutput discriminator_forward(Discriminator& disc, const torch::Tensor& img);

struct Heatmap {
  torch::Tensor heat;  // resolution×resolution, values in [0,1]
  bool degenerate = false;
};

/// Channel sum of one item's attention, bilinearly upsampled and min-max
/// normalized. A constant map yields zeros with `degenerate` set.
Heatmap export_attention_heatmap(const AttentionMap& attention, int resolution, int64_t item = 0);

int64_t parameter_count(const torch::nn::Module& module);

}  // namespace zigan
