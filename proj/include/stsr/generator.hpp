#pragma once

#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "stsr/dataset.hpp"
#include "stsr/raster.hpp"

namespace stsr {

enum class GeneratorVariant { Ead, Pix2Pix };
// How the pixel synthesizer consumes features and positional encodings.
enum class Fusion { Concat, Modulate };
enum class PaddingMode { Zeros, Circular };

std::string to_string(GeneratorVariant v);
std::string to_string(Fusion f);
std::string to_string(PaddingMode p);
GeneratorVariant parse_variant(const std::string& s);
Fusion parse_fusion(const std::string& s);
PaddingMode parse_padding(const std::string& s);

struct GeneratorConfig {
  int bands = 3;
  int patch_size = 64;
  // Encoder stage widths. Stage 0 runs at full resolution; each further
  // stage halves it. The bottleneck (last stage) carries the attention block.
  std::vector<int> encoder_widths{16, 32, 64};
  bool attention = true;
  int feature_channels = 32;
  int n_frequencies = 8;
  int embed_grid = 32;
  int embed_dim = 16;
  int synth_hidden = 64;
  int synth_layers = 3;
  Fusion fusion = Fusion::Concat;
  GeneratorVariant variant = GeneratorVariant::Ead;
  PaddingMode padding = PaddingMode::Zeros;
  // Discriminator stage widths; each stage halves the resolution, so the
  // score map is patch_size / 2^disc_widths.size() on a side.
  std::vector<int> disc_widths{32, 64, 128};

  static GeneratorConfig desk();
  static GeneratorConfig paper();
  // H = W = 16 with widths <= 8, for gradient checks.
  static GeneratorConfig tiny();

  void validate() const;
  int encoding_channels() const { return 6 * n_frequencies + embed_dim; }
  int score_map_size() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

// Frequencies of the Fourier ladder, 2^k * pi for k = 0..n-1.
std::vector<double> fourier_frequencies(int n);

class SelfAttentionImpl : public torch::nn::Module {
 public:
  explicit SelfAttentionImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d query_{nullptr}, key_{nullptr}, value_{nullptr};
  torch::Tensor gamma_;
};
TORCH_MODULE(SelfAttention);

// Strided-conv encoder, optional bottleneck attention, transpose-conv decoder
// with skip connections, 1x1 head. Used as F (head -> feature_channels) and,
// without attention, as the Pix2Pix encoder-decoder (head -> bands).
class EncoderDecoderImpl : public torch::nn::Module {
 public:
  EncoderDecoderImpl(int in_channels, int out_channels, const std::vector<int>& widths,
                     bool attention, PaddingMode padding);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::ModuleList down_, up_, merge_;
  SelfAttention attention_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(EncoderDecoder);

// E: Fourier features of (x, y, t) followed by a learned embedding grid
// sampled bilinearly at (x, y).
class PositionalEncoderImpl : public torch::nn::Module {
 public:
  explicit PositionalEncoderImpl(const GeneratorConfig& cfg);
  // coords [B,2,H,W] (x, y), t [B] -> [B, 6 n_freq + embed_dim, H, W]
  torch::Tensor forward(const torch::Tensor& coords, const torch::Tensor& t);
  torch::Tensor fourier(const torch::Tensor& coords, const torch::Tensor& t) const;
  const torch::Tensor& embedding() const { return embedding_; }

 private:
  std::vector<double> frequencies_;
  torch::Tensor embedding_;  // [1, embed_dim, G, G]
};
TORCH_MODULE(PositionalEncoder);

// G_p: a per-pixel network (1x1 convolutions only) ending in tanh.
class PixelSynthesizerImpl : public torch::nn::Module {
 public:
  explicit PixelSynthesizerImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& encoding);

 private:
  Fusion fusion_;
  torch::nn::ModuleList layers_, scales_, shifts_;
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(PixelSynthesizer);

// Either variant behind one interface: forward(cat, coords, t) with
// cat [B,2C,H,W] in model space, coords [B,2,H,W] and t [B]. The Pix2Pix
// variant ignores coords and t.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig cfg);
  torch::Tensor forward(const torch::Tensor& cat, const torch::Tensor& coords,
                        const torch::Tensor& t);

  const GeneratorConfig& config() const { return cfg_; }
  bool is_ead() const { return cfg_.variant == GeneratorVariant::Ead; }

  EncoderDecoder feature_mapper{nullptr};
  PositionalEncoder encoder{nullptr};
  PixelSynthesizer synthesizer{nullptr};
  EncoderDecoder pix2pix{nullptr};

 private:
  GeneratorConfig cfg_;
};
TORCH_MODULE(Generator);

// Patch classifier over [image, upsampled LR, HR reference, x, y].
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const GeneratorConfig& cfg);
  // Logits [B,1,h,w].
  torch::Tensor logits(const torch::Tensor& image, const torch::Tensor& coords,
                       const torch::Tensor& lr_up, const torch::Tensor& hr_ref);
  // Scores in (0,1).
  torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& coords,
                        const torch::Tensor& lr_up, const torch::Tensor& hr_ref);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Discriminator);

// ---- Single-image operations over RasterImage values -----------------------

using FeatureMap = torch::Tensor;          // [D_f, H, W]
using PositionalEncoding = torch::Tensor;  // [D_e, H, W]

FeatureMap feature_map(const RasterImage& cat, Generator& gen);
PositionalEncoding positional_encode(const CoordinateGrid& grid, double t, Generator& gen);
// Model-space RasterImage with C bands; metadata is left default.
RasterImage synthesize_pixels(const FeatureMap& feat, const PositionalEncoding& enc,
                              Generator& gen);

// The concatenated generator input: LR resized to the HR reference's size,
// both in model space, LR bands first.
RasterImage generator_input(const PairedSample& sample);

// Model-space estimate of the HR frame at `t`, with the target timestamp.
RasterImage generate(const PairedSample& sample, double t, Generator& gen);
RasterImage generate_pix2pix(const PairedSample& sample, Generator& gen);

// Runs the network on one window: cat [2C,H,W], grid of the window, time t.
torch::Tensor generate_window(const torch::Tensor& cat, const CoordinateGrid& grid, double t,
                              Generator& gen);

// Score map [1, h, w] in (0,1). img, lr and hr_ref are model-space rasters;
// lr is resized to img's size.
torch::Tensor discriminate(const RasterImage& img, const CoordinateGrid& grid,
                           const RasterImage& lr, const RasterImage& hr_ref, Discriminator& disc);

std::int64_t parameter_count(const torch::nn::Module& m);
std::string describe(Generator& gen, Discriminator& disc);

}  // namespace stsr
