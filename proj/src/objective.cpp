#include "stsr/objective.hpp"

#include <cmath>

namespace stsr {

namespace nn = torch::nn;

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw ValidationError("loss weights must be >= 0");
  }
}

PerceptualNetImpl::PerceptualNetImpl(int bands, std::uint64_t seed, std::vector<int> widths) {
  taps_ = register_module("taps", nn::ModuleList());
  // Initialise from a private generator so constructing the net never
  // perturbs the global RNG stream used by the trainable models.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  int in = bands;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const int stride = i == 0 ? 1 : 2;
    auto conv = nn::Conv2d(nn::Conv2dOptions(in, widths[i], 3).stride(stride).padding(1));
    {
      torch::NoGradGuard no_grad;
      const double bound = std::sqrt(6.0 / (in * 9.0));
      conv->weight.uniform_(-bound, bound, gen);
      conv->bias.zero_();
    }
    taps_->push_back(conv);
    weights_.push_back(register_buffer("weight" + std::to_string(i), torch::ones({widths[i]})));
    in = widths[i];
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> PerceptualNetImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto h = x;
  for (const auto& tap : *taps_) {
    h = torch::relu(tap->as<nn::Conv2d>()->forward(h));
    out.push_back(h);
  }
  return out;
}

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ValidationError(std::string(what) + ": shape mismatch");
  }
}

torch::Tensor as_batch(const torch::Tensor& x) { return x.dim() == 3 ? x.unsqueeze(0) : x; }

}  // namespace

torch::Tensor loss_l1(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same_shape(pred, target, "loss_l1");
  return (pred - target).abs().mean();
}

double loss_l1(const RasterImage& pred, const RasterImage& target) {
  require_same_shape(pred.pixels, target.pixels, "loss_l1");
  return (pred.pixels.to(torch::kFloat64) - target.pixels.to(torch::kFloat64))
      .abs()
      .mean()
      .item<double>();
}

torch::Tensor loss_lpips(const torch::Tensor& pred, const torch::Tensor& target,
                         PerceptualNet& net) {
  require_same_shape(pred, target, "loss_lpips");
  const auto dtype = pred.scalar_type();
  if (net->parameters().front().scalar_type() != dtype) {
    net->to(dtype);
  }
  const auto fp = net->forward(as_batch(pred));
  const auto ft = net->forward(as_batch(target));
  // Inside the square root so all-zero feature vectors keep finite gradients.
  constexpr double kEps = 1e-10;
  auto total = torch::zeros({}, pred.options());
  for (std::size_t l = 0; l < fp.size(); ++l) {
    auto np = fp[l] / (fp[l].pow(2).sum(1, true) + kEps).sqrt();
    auto nt = ft[l] / (ft[l].pow(2).sum(1, true) + kEps).sqrt();
    const auto& w = net->channel_weights()[l];
    auto d = ((np - nt).pow(2) * w.to(dtype).view({1, -1, 1, 1})).sum(1);  // [B,h,w]
    total = total + d.mean();
  }
  return total;
}

double loss_lpips(const RasterImage& pred, const RasterImage& target, PerceptualNet& net) {
  torch::NoGradGuard no_grad;
  return loss_lpips(pred.pixels, target.pixels, net).item<double>();
}

torch::Tensor loss_cgan(const torch::Tensor& d_real, const torch::Tensor& d_fake, GanSide side) {
  auto fake = d_fake.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon);
  if (side == GanSide::Generator) {
    return -torch::log(fake).mean();
  }
  auto real = d_real.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon);
  return -(torch::log(real).mean() + torch::log(1.0 - fake).mean());
}

GeneratorLossTerms generator_loss_terms(const torch::Tensor& pred, const torch::Tensor& target,
                                        const torch::Tensor& d_fake, const LossWeights& weights,
                                        PerceptualNet& net) {
  weights.validate();
  GeneratorLossTerms terms;
  terms.cgan = loss_cgan({}, d_fake, GanSide::Generator);
  terms.l1 = loss_l1(pred, target);
  terms.lpips = loss_lpips(pred, target, net);
  terms.total = terms.cgan + weights.lambda1 * terms.l1 + weights.lambda2 * terms.lpips;
  return terms;
}

torch::Tensor total_generator_loss(const torch::Tensor& pred, const torch::Tensor& target,
                                   const torch::Tensor& d_fake, const LossWeights& weights,
                                   PerceptualNet& net) {
  return generator_loss_terms(pred, target, d_fake, weights, net).total;
}

}  // namespace stsr
