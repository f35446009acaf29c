#include "stsr/generator.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace stsr {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

constexpr double kLeak = 0.2;

nn::Conv2dOptions conv_options(int in, int out, int kernel, int stride, int pad,
                               PaddingMode mode) {
  auto opts = nn::Conv2dOptions(in, out, kernel).stride(stride).padding(pad);
  if (mode == PaddingMode::Circular && pad > 0) {
    opts.padding_mode(torch::kCircular);
  }
  return opts;
}

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeak));
}

torch::ScalarType module_dtype(const torch::nn::Module& m) {
  for (const auto& p : m.parameters()) {
    return p.scalar_type();
  }
  return torch::kFloat32;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

std::string to_string(GeneratorVariant v) { return v == GeneratorVariant::Ead ? "ead" : "pix2pix"; }
std::string to_string(Fusion f) { return f == Fusion::Concat ? "concat" : "modulate"; }
std::string to_string(PaddingMode p) { return p == PaddingMode::Zeros ? "zeros" : "circular"; }

GeneratorVariant parse_variant(const std::string& s) {
  if (s == "ead") return GeneratorVariant::Ead;
  if (s == "pix2pix") return GeneratorVariant::Pix2Pix;
  throw ValidationError("unknown generator variant '" + s + "'");
}

Fusion parse_fusion(const std::string& s) {
  if (s == "concat") return Fusion::Concat;
  if (s == "modulate") return Fusion::Modulate;
  throw ValidationError("unknown fusion mode '" + s + "'");
}

PaddingMode parse_padding(const std::string& s) {
  if (s == "zeros") return PaddingMode::Zeros;
  if (s == "circular") return PaddingMode::Circular;
  throw ValidationError("unknown padding mode '" + s + "'");
}

GeneratorConfig GeneratorConfig::desk() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::paper() {
  GeneratorConfig c;
  c.patch_size = 256;
  c.encoder_widths = {32, 64, 128, 256, 256};
  c.feature_channels = 64;
  c.embed_dim = 32;
  c.synth_hidden = 128;
  c.synth_layers = 4;
  c.disc_widths = {64, 128, 256, 512};
  return c;
}

GeneratorConfig GeneratorConfig::tiny() {
  GeneratorConfig c;
  c.patch_size = 16;
  c.encoder_widths = {4, 8};
  c.feature_channels = 4;
  c.n_frequencies = 2;
  c.embed_grid = 4;
  c.embed_dim = 2;
  c.synth_hidden = 8;
  c.synth_layers = 2;
  c.disc_widths = {4, 8};
  return c;
}

void GeneratorConfig::validate() const {
  if (bands < 1) throw ValidationError("GeneratorConfig.bands must be >= 1");
  if (patch_size < 16 || (patch_size & (patch_size - 1)) != 0) {
    throw ValidationError("GeneratorConfig.patch_size must be a power of two >= 16");
  }
  if (encoder_widths.empty() || disc_widths.empty()) {
    throw ValidationError("GeneratorConfig widths must be non-empty");
  }
  for (int w : encoder_widths) {
    if (w < 1) throw ValidationError("GeneratorConfig widths must be >= 1");
  }
  for (int w : disc_widths) {
    if (w < 1) throw ValidationError("GeneratorConfig widths must be >= 1");
  }
  if ((patch_size >> (encoder_widths.size() - 1)) < 1 ||
      (patch_size >> disc_widths.size()) < 1) {
    throw ValidationError("GeneratorConfig has more stages than the patch size allows");
  }
  if (feature_channels < 1 || n_frequencies < 0 || embed_grid < 2 || embed_dim < 0 ||
      synth_hidden < 1 || synth_layers < 1) {
    throw ValidationError("GeneratorConfig sizes out of range");
  }
}

int GeneratorConfig::score_map_size() const {
  return patch_size >> static_cast<int>(disc_widths.size());
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"bands", bands},
          {"patch_size", patch_size},
          {"encoder_widths", encoder_widths},
          {"attention", attention},
          {"feature_channels", feature_channels},
          {"n_frequencies", n_frequencies},
          {"embed_grid", embed_grid},
          {"embed_dim", embed_dim},
          {"synth_hidden", synth_hidden},
          {"synth_layers", synth_layers},
          {"fusion", to_string(fusion)},
          {"variant", to_string(variant)},
          {"padding", to_string(padding)},
          {"disc_widths", disc_widths}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.bands = j.value("bands", c.bands);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.encoder_widths = j.value("encoder_widths", c.encoder_widths);
  c.attention = j.value("attention", c.attention);
  c.feature_channels = j.value("feature_channels", c.feature_channels);
  c.n_frequencies = j.value("n_frequencies", c.n_frequencies);
  c.embed_grid = j.value("embed_grid", c.embed_grid);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.synth_hidden = j.value("synth_hidden", c.synth_hidden);
  c.synth_layers = j.value("synth_layers", c.synth_layers);
  c.fusion = parse_fusion(j.value("fusion", to_string(c.fusion)));
  c.variant = parse_variant(j.value("variant", to_string(c.variant)));
  c.padding = parse_padding(j.value("padding", to_string(c.padding)));
  c.disc_widths = j.value("disc_widths", c.disc_widths);
  c.validate();
  return c;
}

std::vector<double> fourier_frequencies(int n) {
  std::vector<double> out;
  for (int k = 0; k < n; ++k) {
    out.push_back(std::ldexp(std::numbers::pi, k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

SelfAttentionImpl::SelfAttentionImpl(int channels) {
  const int inner = std::max(1, channels / 8);
  query_ = register_module("query", nn::Conv2d(nn::Conv2dOptions(channels, inner, 1)));
  key_ = register_module("key", nn::Conv2d(nn::Conv2dOptions(channels, inner, 1)));
  value_ = register_module("value", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
  gamma_ = register_parameter("gamma", torch::full({1}, 0.1));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0);
  const auto c = x.size(1);
  const auto n = x.size(2) * x.size(3);
  auto q = query_(x).view({b, -1, n}).transpose(1, 2);  // [B,N,c']
  auto k = key_(x).view({b, -1, n});                    // [B,c',N]
  auto attn = torch::softmax(torch::bmm(q, k) / std::sqrt(static_cast<double>(k.size(1))), -1);
  auto v = value_(x).view({b, c, n});                   // [B,C,N]
  auto out = torch::bmm(v, attn.transpose(1, 2)).view(x.sizes());
  return x + gamma_ * out;
}

EncoderDecoderImpl::EncoderDecoderImpl(int in_channels, int out_channels,
                                       const std::vector<int>& widths, bool attention,
                                       PaddingMode padding) {
  stem_ = register_module("stem", nn::Conv2d(conv_options(in_channels, widths[0], 3, 1, 1, padding)));
  down_ = register_module("down", nn::ModuleList());
  up_ = register_module("up", nn::ModuleList());
  merge_ = register_module("merge", nn::ModuleList());
  for (std::size_t i = 1; i < widths.size(); ++i) {
    down_->push_back(nn::Conv2d(conv_options(widths[i - 1], widths[i], 4, 2, 1, padding)));
  }
  // Decoder stages are stored coarse-to-fine.
  for (std::size_t i = widths.size() - 1; i >= 1; --i) {
    up_->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(widths[i], widths[i - 1], 2).stride(2)));
    merge_->push_back(nn::Conv2d(conv_options(2 * widths[i - 1], widths[i - 1], 3, 1, 1, padding)));
  }
  if (attention) {
    attention_ = register_module("attention", SelfAttention(widths.back()));
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(widths[0], out_channels, 1)));
}

torch::Tensor EncoderDecoderImpl::forward(const torch::Tensor& x) {
  const auto stages = static_cast<std::int64_t>(down_->size()) + 1;
  const auto divisor = std::int64_t{1} << (stages - 1);
  if (x.size(2) % divisor != 0 || x.size(3) % divisor != 0) {
    throw ValidationError("encoder-decoder input size must be divisible by " +
                          std::to_string(divisor));
  }
  std::vector<torch::Tensor> skips;
  auto h = lrelu(stem_(x));
  for (const auto& layer : *down_) {
    skips.push_back(h);
    h = lrelu(layer->as<nn::Conv2d>()->forward(h));
  }
  if (!attention_.is_empty()) {
    h = attention_(h);
  }
  for (std::size_t i = 0; i < up_->size(); ++i) {
    h = lrelu(up_[i]->as<nn::ConvTranspose2d>()->forward(h));
    h = torch::cat({h, skips[skips.size() - 1 - i]}, 1);
    h = lrelu(merge_[i]->as<nn::Conv2d>()->forward(h));
  }
  return head_(h);
}

PositionalEncoderImpl::PositionalEncoderImpl(const GeneratorConfig& cfg)
    : frequencies_(fourier_frequencies(cfg.n_frequencies)) {
  embedding_ = register_parameter(
      "embedding", torch::randn({1, cfg.embed_dim, cfg.embed_grid, cfg.embed_grid}) * 0.1);
}

torch::Tensor PositionalEncoderImpl::fourier(const torch::Tensor& coords,
                                             const torch::Tensor& t) const {
  const auto b = coords.size(0);
  const auto h = coords.size(2);
  const auto w = coords.size(3);
  auto x = coords.slice(1, 0, 1);
  auto y = coords.slice(1, 1, 2);
  auto tt = t.to(coords.scalar_type()).view({b, 1, 1, 1}).expand({b, 1, h, w});
  std::vector<torch::Tensor> channels;
  channels.reserve(frequencies_.size() * 6);
  for (double f : frequencies_) {
    for (const auto* u : {&x, &y, &tt}) {
      auto arg = *u * f;
      channels.push_back(torch::sin(arg));
      channels.push_back(torch::cos(arg));
    }
  }
  if (channels.empty()) {
    return torch::zeros({b, 0, h, w}, coords.options());
  }
  return torch::cat(channels, 1);
}

torch::Tensor PositionalEncoderImpl::forward(const torch::Tensor& coords, const torch::Tensor& t) {
  auto four = fourier(coords, t);
  if (embedding_.size(1) == 0) {
    return four;
  }
  const auto b = coords.size(0);
  auto grid = coords.permute({0, 2, 3, 1});  // [B,H,W,(x,y)]
  auto table = embedding_.expand({b, -1, -1, -1});
  auto embed = F::grid_sample(table, grid,
                              F::GridSampleFuncOptions()
                                  .mode(torch::kBilinear)
                                  .padding_mode(torch::kBorder)
                                  .align_corners(true));
  return torch::cat({four, embed}, 1);
}

PixelSynthesizerImpl::PixelSynthesizerImpl(const GeneratorConfig& cfg) : fusion_(cfg.fusion) {
  layers_ = register_module("layers", nn::ModuleList());
  scales_ = register_module("scales", nn::ModuleList());
  shifts_ = register_module("shifts", nn::ModuleList());
  const int enc = cfg.encoding_channels();
  const int first_in = fusion_ == Fusion::Concat ? cfg.feature_channels + enc : enc;
  for (int l = 0; l < cfg.synth_layers; ++l) {
    layers_->push_back(nn::Conv2d(nn::Conv2dOptions(l == 0 ? first_in : cfg.synth_hidden,
                                                    cfg.synth_hidden, 1)));
    if (fusion_ == Fusion::Modulate) {
      scales_->push_back(nn::Conv2d(nn::Conv2dOptions(cfg.feature_channels, cfg.synth_hidden, 1)));
      shifts_->push_back(nn::Conv2d(nn::Conv2dOptions(cfg.feature_channels, cfg.synth_hidden, 1)));
    }
  }
  out_ = register_module("out", nn::Conv2d(nn::Conv2dOptions(cfg.synth_hidden, cfg.bands, 1)));
}

torch::Tensor PixelSynthesizerImpl::forward(const torch::Tensor& features,
                                            const torch::Tensor& encoding) {
  if (features.size(2) != encoding.size(2) || features.size(3) != encoding.size(3)) {
    throw ValidationError("pixel synthesizer: feature and encoding sizes differ");
  }
  auto h = fusion_ == Fusion::Concat ? torch::cat({features, encoding}, 1) : encoding;
  for (std::size_t l = 0; l < layers_->size(); ++l) {
    h = layers_[l]->as<nn::Conv2d>()->forward(h);
    if (fusion_ == Fusion::Modulate) {
      h = h * (1.0 + scales_[l]->as<nn::Conv2d>()->forward(features)) +
          shifts_[l]->as<nn::Conv2d>()->forward(features);
    }
    h = lrelu(h);
  }
  return torch::tanh(out_(h));
}

// ---------------------------------------------------------------------------
// Generator / discriminator
// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (is_ead()) {
    feature_mapper = register_module(
        "feature_mapper", EncoderDecoder(2 * cfg_.bands, cfg_.feature_channels,
                                         cfg_.encoder_widths, cfg_.attention, cfg_.padding));
    encoder = register_module("encoder", PositionalEncoder(cfg_));
    synthesizer = register_module("synthesizer", PixelSynthesizer(cfg_));
  } else {
    pix2pix = register_module(
        "pix2pix", EncoderDecoder(2 * cfg_.bands, cfg_.bands, cfg_.encoder_widths, false,
                                  cfg_.padding));
  }
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& cat, const torch::Tensor& coords,
                                     const torch::Tensor& t) {
  if (cat.dim() != 4 || cat.size(1) != 2 * cfg_.bands) {
    throw ValidationError("generator expects a [B," + std::to_string(2 * cfg_.bands) +
                          ",H,W] input");
  }
  if (!is_ead()) {
    return torch::tanh(pix2pix(cat));
  }
  if (coords.size(2) != cat.size(2) || coords.size(3) != cat.size(3)) {
    throw ValidationError("generator: coordinate grid does not match input size");
  }
  return synthesizer(feature_mapper(cat), encoder(coords, t));
}

DiscriminatorImpl::DiscriminatorImpl(const GeneratorConfig& cfg) {
  cfg.validate();
  body_ = nn::Sequential();
  int in = 3 * cfg.bands + 2;
  for (int w : cfg.disc_widths) {
    body_->push_back(nn::Conv2d(conv_options(in, w, 4, 2, 1, cfg.padding)));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeak)));
    in = w;
  }
  body_->push_back(nn::Conv2d(conv_options(in, 1, 3, 1, 1, cfg.padding)));
  register_module("body", body_);
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& image, const torch::Tensor& coords,
                                        const torch::Tensor& lr_up, const torch::Tensor& hr_ref) {
  if (image.sizes() != lr_up.sizes() || image.sizes() != hr_ref.sizes() ||
      coords.size(2) != image.size(2) || coords.size(3) != image.size(3)) {
    throw ValidationError("discriminator inputs have mismatched shapes");
  }
  return body_->forward(torch::cat({image, lr_up, hr_ref, coords}, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image, const torch::Tensor& coords,
                                         const torch::Tensor& lr_up, const torch::Tensor& hr_ref) {
  return torch::sigmoid(logits(image, coords, lr_up, hr_ref));
}

// ---------------------------------------------------------------------------
// RasterImage-level operations
// ---------------------------------------------------------------------------

namespace {

torch::Tensor batch_of(const torch::Tensor& chw, torch::ScalarType dtype) {
  return chw.to(dtype).unsqueeze(0);
}

void require_ead(Generator& gen, const char* what) {
  if (!gen->is_ead()) {
    throw ValidationError(std::string(what) + " requires the EAD generator variant");
  }
}

}  // namespace

FeatureMap feature_map(const RasterImage& cat, Generator& gen) {
  require_ead(gen, "feature_map");
  if (cat.bands() != 2 * gen->config().bands) {
    throw ValidationError("feature_map: expected " + std::to_string(2 * gen->config().bands) +
                          " bands, got " + std::to_string(cat.bands()));
  }
  torch::NoGradGuard no_grad;
  return gen->feature_mapper(batch_of(cat.pixels, module_dtype(*gen))).squeeze(0);
}

PositionalEncoding positional_encode(const CoordinateGrid& grid, double t, Generator& gen) {
  require_ead(gen, "positional_encode");
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ValidationError("positional_encode: t must lie in [0,1]");
  }
  torch::NoGradGuard no_grad;
  const auto dtype = module_dtype(*gen);
  auto coords = batch_of(grid.coords(), dtype);
  auto tt = torch::full({1}, t, torch::TensorOptions().dtype(dtype));
  return gen->encoder(coords, tt).squeeze(0);
}

RasterImage synthesize_pixels(const FeatureMap& feat, const PositionalEncoding& enc,
                              Generator& gen) {
  require_ead(gen, "synthesize_pixels");
  if (feat.dim() != 3 || enc.dim() != 3 || feat.size(1) != enc.size(1) ||
      feat.size(2) != enc.size(2)) {
    throw ValidationError("synthesize_pixels: feature map and encoding dimensions differ");
  }
  torch::NoGradGuard no_grad;
  const auto dtype = module_dtype(*gen);
  auto out = gen->synthesizer(batch_of(feat, dtype), batch_of(enc, dtype)).squeeze(0);
  RasterImage img;
  img.pixels = out.to(torch::kFloat32).contiguous();
  return img;
}

RasterImage generator_input(const PairedSample& sample) {
  const auto& hr = sample.hr_reference;
  if (sample.lr_target.aoi_id != hr.aoi_id) {
    throw ValidationError("generator_input: LR and HR reference cover different AOIs");
  }
  if (sample.lr_target.bands() != hr.bands()) {
    throw ValidationError("generator_input: LR and HR reference band counts differ");
  }
  auto lr_up = resize_to(sample.lr_target, hr.height(), hr.width());
  return band_concat(to_model_space(lr_up), to_model_space(hr));
}

torch::Tensor generate_window(const torch::Tensor& cat, const CoordinateGrid& grid, double t,
                              Generator& gen) {
  if (cat.size(1) != grid.height || cat.size(2) != grid.width) {
    throw ValidationError("generate_window: grid does not match the input window");
  }
  torch::NoGradGuard no_grad;
  const auto dtype = module_dtype(*gen);
  auto coords = batch_of(grid.coords(), dtype);
  auto tt = torch::full({1}, t, torch::TensorOptions().dtype(dtype));
  return gen->forward(batch_of(cat, dtype), coords, tt).squeeze(0).to(torch::kFloat32);
}

namespace {

RasterImage run_generator(const PairedSample& sample, double t, Generator& gen) {
  const auto cat = generator_input(sample);
  RasterImage out;
  out.pixels = generate_window(cat.pixels, CoordinateGrid::full(cat.height(), cat.width()), t, gen)
                   .contiguous();
  out.timestamp = sample.lr_target.timestamp;
  out.aoi_id = sample.lr_target.aoi_id;
  out.gsd = sample.hr_reference.gsd;
  return out;
}

}  // namespace

// Either variant; Pix2Pix ignores t.
RasterImage generate(const PairedSample& sample, double t, Generator& gen) {
  return run_generator(sample, t, gen);
}

RasterImage generate_pix2pix(const PairedSample& sample, Generator& gen) {
  if (gen->is_ead()) {
    throw ValidationError("generate_pix2pix requires the Pix2Pix generator variant");
  }
  return run_generator(sample, 0.0, gen);
}

torch::Tensor discriminate(const RasterImage& img, const CoordinateGrid& grid,
                           const RasterImage& lr, const RasterImage& hr_ref, Discriminator& disc) {
  if (img.height() != grid.height || img.width() != grid.width ||
      hr_ref.height() != img.height() || hr_ref.width() != img.width() ||
      hr_ref.bands() != img.bands() || lr.bands() != img.bands()) {
    throw ValidationError("discriminate: input shapes do not match");
  }
  torch::NoGradGuard no_grad;
  const auto dtype = module_dtype(*disc);
  auto lr_up = resize_bilinear(lr.pixels, img.height(), img.width());
  return disc->forward(batch_of(img.pixels, dtype), batch_of(grid.coords(), dtype),
                       batch_of(lr_up, dtype), batch_of(hr_ref.pixels, dtype))
      .squeeze(0);
}

std::int64_t parameter_count(const torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

std::string describe(Generator& gen, Discriminator& disc) {
  const auto& c = gen->config();
  std::ostringstream out;
  out << "generator variant: " << to_string(c.variant) << "\n"
      << "bands: " << c.bands << "  patch: " << c.patch_size << "x" << c.patch_size << "\n"
      << "encoder widths:";
  for (int w : c.encoder_widths) out << ' ' << w;
  out << (c.attention && gen->is_ead() ? "  (+ bottleneck self-attention)" : "") << "\n";
  if (gen->is_ead()) {
    out << "feature channels: " << c.feature_channels << "\n"
        << "positional encoding: " << c.n_frequencies << " frequencies x (x,y,t) sin/cos + "
        << c.embed_dim << "-d embedding on a " << c.embed_grid << "x" << c.embed_grid
        << " grid = " << c.encoding_channels() << " channels\n"
        << "pixel synthesizer: " << c.synth_layers << " x " << c.synth_hidden << " (1x1, "
        << to_string(c.fusion) << ")\n"
        << "  F parameters:   " << parameter_count(*gen->feature_mapper) << "\n"
        << "  E parameters:   " << parameter_count(*gen->encoder) << "\n"
        << "  G_p parameters: " << parameter_count(*gen->synthesizer) << "\n";
  }
  out << "generator parameters: " << parameter_count(*gen) << "\n"
      << "discriminator widths:";
  for (int w : c.disc_widths) out << ' ' << w;
  out << "  score map: " << c.score_map_size() << "x" << c.score_map_size() << "\n"
      << "discriminator parameters: " << parameter_count(*disc) << "\n";
  return out.str();
}

}  // namespace stsr
