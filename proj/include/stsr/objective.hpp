#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "stsr/raster.hpp"

namespace stsr {

struct LossWeights {
  double lambda1 = 100.0;  // L1
  double lambda2 = 10.0;   // perceptual

  void validate() const;
};

// Fixed convolutional feature extractor for the perceptual distance. The
// default is a seeded, randomly initialised three-tap convnet with unit
// channel weights; published perceptual weights can be restored into it
// through the checkpoint format when the layer shapes agree.
class PerceptualNetImpl : public torch::nn::Module {
 public:
  explicit PerceptualNetImpl(int bands = 3, std::uint64_t seed = 0x5EED,
                             std::vector<int> widths = {16, 32, 64});
  std::vector<torch::Tensor> forward(const torch::Tensor& x);
  // Per-tap channel weights (unit by default).
  const std::vector<torch::Tensor>& channel_weights() const { return weights_; }

 private:
  torch::nn::ModuleList taps_;
  std::vector<torch::Tensor> weights_;
};
TORCH_MODULE(PerceptualNet);

enum class GanSide { Generator, Discriminator };

// Mean absolute difference over every element.
torch::Tensor loss_l1(const torch::Tensor& pred, const torch::Tensor& target);
double loss_l1(const RasterImage& pred, const RasterImage& target);

// Sum over taps of the spatial mean of the channel-weighted squared
// difference between unit-normalised features. Inputs are [B,C,H,W] or
// [C,H,W]; batches are averaged.
torch::Tensor loss_lpips(const torch::Tensor& pred, const torch::Tensor& target,
                         PerceptualNet& net);
double loss_lpips(const RasterImage& pred, const RasterImage& target, PerceptualNet& net);

inline constexpr double kScoreEpsilon = 1e-7;

// D side: -(mean log d_real + mean log(1 - d_fake)).
// G side (non-saturating): -mean log d_fake; d_real is ignored.
// Scores are clamped to [eps, 1 - eps].
torch::Tensor loss_cgan(const torch::Tensor& d_real, const torch::Tensor& d_fake, GanSide side);

struct GeneratorLossTerms {
  torch::Tensor total;
  torch::Tensor cgan;
  torch::Tensor l1;
  torch::Tensor lpips;
};

// cgan(G) + lambda1 * L1 + lambda2 * LPIPS. The perceptual term is always
// evaluated so it can be logged, even with lambda2 = 0.
GeneratorLossTerms generator_loss_terms(const torch::Tensor& pred, const torch::Tensor& target,
                                        const torch::Tensor& d_fake, const LossWeights& weights,
                                        PerceptualNet& net);
torch::Tensor total_generator_loss(const torch::Tensor& pred, const torch::Tensor& target,
                                   const torch::Tensor& d_fake, const LossWeights& weights,
                                   PerceptualNet& net);

}  // namespace stsr
