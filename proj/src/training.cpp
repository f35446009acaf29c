#include "stsr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace stsr {

namespace {

using Clock = std::chrono::steady_clock;

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ValidationError("unknown optimizer '" + s + "'");
}

void require_finite(const torch::Tensor& v, const char* name, int step) {
  const double x = v.item<double>();
  if (!std::isfinite(x)) {
    throw TrainingError(std::string("non-finite ") + name + " loss at step " +
                        std::to_string(step));
  }
}

constexpr const char* kLogHeader = "step,l1,lpips,cgan_g,cgan_d,wall_time";

void write_row(std::ostream& out, const StepLog& r) {
  out << r.step << ',' << r.l1 << ',' << r.lpips << ',' << r.cgan_g << ',' << r.cgan_d << ','
      << r.wall_time << std::endl;
}

torch::ScalarType module_dtype(const torch::nn::Module& m) {
  const auto params = m.parameters();
  return params.empty() ? torch::kFloat32 : params.front().scalar_type();
}

}  // namespace

OptimizerConfig OptimizerConfig::adam_default() { return {}; }

OptimizerConfig OptimizerConfig::sgd_default() {
  OptimizerConfig c;
  c.kind = OptimizerKind::Sgd;
  c.lr = 0.01;
  c.momentum = 0.9;
  return c;
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("optimizer lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("optimizer betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw ValidationError("optimizer eps must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ValidationError("optimizer momentum must lie in [0,1)");
  }
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"kind", to_string(kind)}, {"lr", lr},   {"beta1", beta1},
          {"beta2", beta2},          {"eps", eps}, {"momentum", momentum}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  if (j.contains("kind")) c.kind = parse_optimizer(j.at("kind").get<std::string>());
  if (c.kind == OptimizerKind::Sgd) c = sgd_default();
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.momentum = j.value("momentum", c.momentum);
  c.validate();
  return c;
}

std::unique_ptr<torch::optim::Optimizer> make_optimizer(std::vector<torch::Tensor> params,
                                                        const OptimizerConfig& cfg) {
  cfg.validate();
  if (cfg.kind == OptimizerKind::Adam) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params),
        torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}).eps(cfg.eps));
  }
  return std::make_unique<torch::optim::SGD>(
      std::move(params), torch::optim::SGDOptions(cfg.lr).momentum(cfg.momentum));
}

void TrainConfig::validate() const {
  generator.validate();
  discriminator.validate();
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (max_steps < 0) throw ValidationError("max_steps must be >= 0");
  if (checkpoint_every < 0) throw ValidationError("checkpoint_every must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"generator", generator.to_json()},
          {"discriminator", discriminator.to_json()},
          {"batch_size", batch_size},
          {"max_steps", max_steps},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"checkpoint_dir", checkpoint_dir.string()},
          {"log_csv", log_csv.string()},
          {"deterministic", deterministic}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("generator")) c.generator = OptimizerConfig::from_json(j.at("generator"));
  if (j.contains("discriminator")) {
    c.discriminator = OptimizerConfig::from_json(j.at("discriminator"));
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.checkpoint_dir = j.value("checkpoint_dir", std::string());
  c.log_csv = j.value("log_csv", std::string());
  c.deterministic = j.value("deterministic", c.deterministic);
  c.validate();
  return c;
}

PreparedSample prepare_sample(const PairedSample& sample) {
  if (!sample.is_training()) {
    throw ValidationError("prepare_sample: sample has no HR target");
  }
  if (sample.time < 0.0 || sample.time > 1.0) {
    throw ValidationError("prepare_sample: time must lie in [0,1]");
  }
  const auto cat = generator_input(sample);
  const auto& target = *sample.hr_target;
  if (target.height() != cat.height() || target.width() != cat.width() ||
      target.bands() * 2 != cat.bands()) {
    throw ValidationError("prepare_sample: HR target does not match the HR reference");
  }
  return {cat.pixels, to_model_space(target).pixels, sample.time};
}

SrBatch make_batch(std::span<const PreparedSample* const> samples,
                   std::span<const std::pair<std::int64_t, std::int64_t>> origins, int patch,
                   torch::ScalarType dtype) {
  if (samples.empty() || samples.size() != origins.size()) {
    throw ValidationError("make_batch: need one origin per sample");
  }
  std::vector<torch::Tensor> cats, targets, coords, times;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    const auto h = s.cat.size(1), w = s.cat.size(2);
    const auto [r, c] = origins[i];
    if (r < 0 || c < 0 || r + patch > h || c + patch > w) {
      throw ValidationError("make_batch: crop window leaves the frame");
    }
    cats.push_back(s.cat.slice(1, r, r + patch).slice(2, c, c + patch));
    targets.push_back(s.target.slice(1, r, r + patch).slice(2, c, c + patch));
    coords.push_back(CoordinateGrid::full(h, w).window(r, c, patch, patch).coords());
    times.push_back(torch::full({1}, s.time, torch::kFloat64));
  }
  SrBatch b;
  b.cat = torch::stack(cats).to(dtype);
  b.target = torch::stack(targets).to(dtype);
  const auto bands = b.target.size(1);
  b.lr_up = b.cat.slice(1, 0, bands);
  b.hr_ref = b.cat.slice(1, bands, 2 * bands);
  b.coords = torch::stack(coords).to(dtype);
  b.time = torch::cat(times).to(dtype);
  return b;
}

SrTrainer::SrTrainer(Generator gen, Discriminator disc, PerceptualNet lpips, LossWeights weights,
                     const TrainConfig& cfg)
    : gen_(std::move(gen)),
      disc_(std::move(disc)),
      lpips_(std::move(lpips)),
      weights_(weights) {
  cfg.validate();
  weights_.validate();
  opt_g_ = make_optimizer(gen_->parameters(), cfg.generator);
  opt_d_ = make_optimizer(disc_->parameters(), cfg.discriminator);
}

double SrTrainer::discriminator_loss(const SrBatch& b) {
  torch::NoGradGuard no_grad;
  const auto fake = gen_->forward(b.cat, b.coords, b.time);
  const auto d_real = disc_->forward(b.target, b.coords, b.lr_up, b.hr_ref);
  const auto d_fake = disc_->forward(fake, b.coords, b.lr_up, b.hr_ref);
  return loss_cgan(d_real, d_fake, GanSide::Discriminator).item<double>();
}

GeneratorLossTerms SrTrainer::generator_terms(const SrBatch& b) {
  torch::NoGradGuard no_grad;
  const auto fake = gen_->forward(b.cat, b.coords, b.time);
  const auto d_fake = disc_->forward(fake, b.coords, b.lr_up, b.hr_ref);
  return generator_loss_terms(fake, b.target, d_fake, weights_, lpips_);
}

double SrTrainer::discriminator_step(const SrBatch& b) {
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = gen_->forward(b.cat, b.coords, b.time);
  }
  const auto d_real = disc_->forward(b.target, b.coords, b.lr_up, b.hr_ref);
  const auto d_fake = disc_->forward(fake, b.coords, b.lr_up, b.hr_ref);
  auto loss = loss_cgan(d_real, d_fake, GanSide::Discriminator);
  opt_d_->zero_grad();
  loss.backward();
  opt_d_->step();
  return loss.item<double>();
}

GeneratorLossTerms SrTrainer::generator_step(const SrBatch& b) {
  const auto fake = gen_->forward(b.cat, b.coords, b.time);
  const auto d_fake = disc_->forward(fake, b.coords, b.lr_up, b.hr_ref);
  auto terms = generator_loss_terms(fake, b.target, d_fake, weights_, lpips_);
  opt_g_->zero_grad();
  terms.total.backward();
  opt_g_->step();
  // The backward pass also filled the discriminator's gradients; they are
  // cleared before its next step.
  return {terms.total.detach(), terms.cgan.detach(), terms.l1.detach(), terms.lpips.detach()};
}

TrainResult train_sr(std::span<const PairedSample> dataset, Generator& gen, Discriminator& disc,
                     PerceptualNet& lpips, const LossWeights& weights, const TrainConfig& cfg) {
  cfg.validate();
  weights.validate();
  TrainResult result;
  if (cfg.max_steps == 0) return result;
  if (dataset.empty()) throw ValidationError("train_sr: empty dataset");
  if (cfg.deterministic) {
    at::set_num_threads(1);
    torch::manual_seed(cfg.seed);
  }

  std::vector<PreparedSample> prepared;
  prepared.reserve(dataset.size());
  for (const auto& s : dataset) prepared.push_back(prepare_sample(s));

  const int patch = gen->config().patch_size;
  for (const auto& p : prepared) {
    if (p.cat.size(1) < patch || p.cat.size(2) < patch) {
      throw ValidationError("train_sr: frames are smaller than the training patch");
    }
  }
  const auto dtype = module_dtype(*gen);
  gen->train();
  disc->train();
  SrTrainer trainer(gen, disc, lpips, weights, cfg);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(prepared.size());
  std::size_t cursor = order.size();
  const auto start = Clock::now();

  std::ofstream csv;
  if (!cfg.log_csv.empty()) {
    if (cfg.log_csv.has_parent_path()) std::filesystem::create_directories(cfg.log_csv.parent_path());
    const bool fresh = !std::filesystem::exists(cfg.log_csv) ||
                       std::filesystem::file_size(cfg.log_csv) == 0;
    csv.open(cfg.log_csv, std::ios::app);
    if (!csv) throw std::runtime_error("cannot write " + cfg.log_csv.string());
    csv.precision(9);
    if (fresh) csv << kLogHeader << '\n';
  }

  auto save = [&](int step) {
    if (cfg.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(cfg.checkpoint_dir);
    char name[32];
    std::snprintf(name, sizeof name, "step_%06d.ckpt", step);
    const auto path = cfg.checkpoint_dir / name;
    save_sr_checkpoint(path, gen, disc,
                       {{"step", step},
                        {"lambda1", weights.lambda1},
                        {"lambda2", weights.lambda2},
                        {"train", cfg.to_json()}});
    result.checkpoints.push_back(path);
  };

  for (int step = 1; step <= cfg.max_steps; ++step) {
    std::vector<const PreparedSample*> picks;
    std::vector<std::pair<std::int64_t, std::int64_t>> origins;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto& s = prepared[order[cursor++]];
      const auto h = s.cat.size(1), w = s.cat.size(2);
      std::uniform_int_distribution<std::int64_t> rows(0, h - patch), cols(0, w - patch);
      const auto r = rows(rng);
      const auto c = cols(rng);
      picks.push_back(&s);
      origins.emplace_back(r, c);
    }
    const auto batch = make_batch(picks, origins, patch, dtype);

    const double d_loss = trainer.discriminator_step(batch);
    if (!std::isfinite(d_loss)) {
      throw TrainingError("non-finite cgan_d loss at step " + std::to_string(step));
    }
    const auto terms = trainer.generator_step(batch);
    require_finite(terms.l1, "l1", step);
    require_finite(terms.lpips, "lpips", step);
    require_finite(terms.cgan, "cgan_g", step);
    require_finite(terms.total, "total", step);

    StepLog row;
    row.step = step;
    row.l1 = terms.l1.item<double>();
    row.lpips = terms.lpips.item<double>();
    row.cgan_g = terms.cgan.item<double>();
    row.cgan_d = d_loss;
    row.g_total = terms.total.item<double>();
    row.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    result.log.push_back(row);
    if (csv.is_open()) write_row(csv, row);

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) save(step);
  }
  if (cfg.checkpoint_every == 0 || cfg.max_steps % cfg.checkpoint_every != 0) {
    save(cfg.max_steps);
  }
  gen->eval();
  disc->eval();
  return result;
}

void write_train_log(const std::filesystem::path& path, const std::vector<StepLog>& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kLogHeader << '\n';
  out.precision(9);
  for (const auto& r : log) write_row(out, r);
}

Checkpoint sr_checkpoint(Generator& gen, Discriminator& disc, const nlohmann::json& extra) {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "sr"}, {"generator", gen->config().to_json()}};
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) ckpt.meta[k] = v;
  }
  append_state(ckpt, *gen, "generator");
  append_state(ckpt, *disc, "discriminator");
  return ckpt;
}

void save_sr_checkpoint(const std::filesystem::path& path, Generator& gen, Discriminator& disc,
                        const nlohmann::json& extra) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, sr_checkpoint(gen, disc, extra));
}

SrModels load_sr_checkpoint(const std::filesystem::path& path) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", std::string()) != "sr") {
    throw ValidationError(path.string() + " is not a super-resolution checkpoint");
  }
  const auto cfg = GeneratorConfig::from_json(ckpt.meta.at("generator"));
  SrModels m;
  m.gen = Generator(cfg);
  m.disc = Discriminator(cfg);
  restore_state(ckpt, *m.gen, "generator");
  restore_state(ckpt, *m.disc, "discriminator");
  m.gen->eval();
  m.disc->eval();
  m.meta = ckpt.meta;
  return m;
}

// ---- Tracker ---------------------------------------------------------------

nlohmann::json TrackerTrainConfig::to_json() const {
  return {{"optimizer", optimizer.to_json()},
          {"batch_size", batch_size},
          {"max_steps", max_steps},
          {"seed", seed},
          {"full_batch", full_batch}};
}

TrackerTrainConfig TrackerTrainConfig::from_json(const nlohmann::json& j) {
  TrackerTrainConfig c;
  if (j.contains("optimizer")) c.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.full_batch = j.value("full_batch", c.full_batch);
  if (c.batch_size < 1 || c.max_steps < 0) {
    throw ValidationError("tracker training needs batch_size >= 1 and max_steps >= 0");
  }
  return c;
}

namespace {

torch::Tensor mask_tensor(const Mask& m) {
  auto t = torch::empty({1, m.height(), m.width()}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  const auto v = m.values();
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = v[i] ? 1.0f : 0.0f;
  return t;
}

}  // namespace

TrackerTrainResult train_tracker(std::span<const TrackerSample> samples, Segmenter& seg,
                                 const TrackerConfig& tcfg, const TrackerTrainConfig& cfg) {
  tcfg.validate();
  TrackerTrainResult result;
  if (cfg.max_steps == 0) return result;
  if (samples.empty()) throw ValidationError("train_tracker: no samples");

  std::vector<torch::Tensor> images, targets;
  for (const auto& s : samples) {
    validate(s.image);
    if (s.mask.height() != s.image.height() || s.mask.width() != s.image.width()) {
      throw ValidationError("train_tracker: mask and image sizes differ");
    }
    auto img = preprocess_tensor(to_model_space(s.image).pixels, tcfg);
    auto msk = preprocess_tensor(mask_tensor(s.mask), tcfg);
    for (std::size_t k = 0; k < img.patches.size(); ++k) {
      images.push_back(img.patches[k]);
      targets.push_back(msk.patches[k]);
    }
  }
  const auto all_images = torch::stack(images);
  const auto all_targets = torch::stack(targets).clamp(0.0, 1.0);
  const auto n = all_images.size(0);

  seg->train();
  auto opt = make_optimizer(seg->parameters(), cfg.optimizer);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::size_t cursor = order.size();
  for (int step = 0; step < cfg.max_steps; ++step) {
    torch::Tensor x, y;
    if (cfg.full_batch) {
      x = all_images;
      y = all_targets;
    } else {
      std::vector<std::int64_t> idx;
      for (int b = 0; b < cfg.batch_size; ++b) {
        if (cursor == order.size()) {
          std::iota(order.begin(), order.end(), std::int64_t{0});
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        idx.push_back(order[cursor++]);
      }
      const auto sel = torch::tensor(idx, torch::kLong);
      x = all_images.index_select(0, sel);
      y = all_targets.index_select(0, sel);
    }
    auto loss = torch::binary_cross_entropy_with_logits(seg->forward(x), y);
    opt->zero_grad();
    loss.backward();
    opt->step();
    const double v = loss.item<double>();
    if (!std::isfinite(v)) {
      throw TrainingError("non-finite segmentation loss at step " + std::to_string(step + 1));
    }
    result.losses.push_back(v);
  }
  seg->eval();
  return result;
}

void save_tracker_checkpoint(const std::filesystem::path& path, Segmenter& seg,
                             const TrackerConfig& cfg, const nlohmann::json& extra) {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "tracker"}, {"tracker", cfg.to_json()}};
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) ckpt.meta[k] = v;
  }
  append_state(ckpt, *seg, "segmenter");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, ckpt);
}

TrackerModel load_tracker_checkpoint(const std::filesystem::path& path) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", std::string()) != "tracker") {
    throw ValidationError(path.string() + " is not a tracker checkpoint");
  }
  TrackerModel m;
  m.cfg = TrackerConfig::from_json(ckpt.meta.at("tracker"));
  m.seg = Segmenter(m.cfg);
  restore_state(ckpt, *m.seg, "segmenter");
  m.seg->eval();
  m.meta = ckpt.meta;
  return m;
}

double segmentation_iou(std::span<const TrackerSample> samples, Segmenter& seg,
                        const TrackerConfig& cfg) {
  std::int64_t inter = 0, uni = 0;
  for (const auto& s : samples) {
    const auto prob = segment_frame(s.image, seg, cfg);
    for (std::int64_t r = 0; r < prob.height(); ++r) {
      for (std::int64_t c = 0; c < prob.width(); ++c) {
        const bool p = prob(r, c) > cfg.tau_bin;
        const bool g = s.mask(r, c) != 0;
        inter += p && g;
        uni += p || g;
      }
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace stsr
