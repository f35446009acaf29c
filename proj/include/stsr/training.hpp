#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "stsr/checkpoint.hpp"
#include "stsr/dataset.hpp"
#include "stsr/generator.hpp"
#include "stsr/objective.hpp"
#include "stsr/tracker.hpp"

namespace stsr {

// Raised when a loss term turns non-finite; names the term and step.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
  double momentum = 0.0;

  static OptimizerConfig adam_default();  // lr 2e-3, betas (0, 0.99), eps 1e-8
  static OptimizerConfig sgd_default();   // lr 0.01, momentum 0.9

  void validate() const;
  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
};

std::unique_ptr<torch::optim::Optimizer> make_optimizer(std::vector<torch::Tensor> params,
                                                        const OptimizerConfig& cfg);

struct TrainConfig {
  OptimizerConfig generator = OptimizerConfig::adam_default();
  OptimizerConfig discriminator = OptimizerConfig::adam_default();
  int batch_size = 1;
  int max_steps = 0;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path log_csv;         // empty: no CSV
  bool deterministic = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepLog {
  int step = 0;
  double l1 = 0.0;
  double lpips = 0.0;
  double cgan_g = 0.0;
  double cgan_d = 0.0;
  double g_total = 0.0;
  double wall_time = 0.0;
};

// One generator/discriminator batch in model space.
struct SrBatch {
  torch::Tensor cat;     // [B,2C,P,P]
  torch::Tensor target;  // [B,C,P,P]
  torch::Tensor lr_up;   // [B,C,P,P]
  torch::Tensor hr_ref;  // [B,C,P,P]
  torch::Tensor coords;  // [B,2,P,P]
  torch::Tensor time;    // [B]
};

// A training sample with its model-space tensors computed once.
struct PreparedSample {
  torch::Tensor cat;     // [2C,H,W]
  torch::Tensor target;  // [C,H,W]
  double time = 0.0;
};

PreparedSample prepare_sample(const PairedSample& sample);

// Crops (row, col) windows of size `patch` out of prepared samples, with
// coordinates of the window inside the full frame.
SrBatch make_batch(std::span<const PreparedSample* const> samples,
                   std::span<const std::pair<std::int64_t, std::int64_t>> origins, int patch,
                   torch::ScalarType dtype = torch::kFloat32);

// Alternating cGAN trainer. Holds the optimizers so tests can drive single
// steps.
class SrTrainer {
 public:
  SrTrainer(Generator gen, Discriminator disc, PerceptualNet lpips, LossWeights weights,
            const TrainConfig& cfg);

  // Returns the discriminator loss before the update.
  double discriminator_step(const SrBatch& batch);
  // Returns the generator terms before the update.
  GeneratorLossTerms generator_step(const SrBatch& batch);

  double discriminator_loss(const SrBatch& batch);
  GeneratorLossTerms generator_terms(const SrBatch& batch);

  Generator& generator() { return gen_; }
  Discriminator& discriminator() { return disc_; }

 private:
  Generator gen_;
  Discriminator disc_;
  PerceptualNet lpips_;
  LossWeights weights_;
  std::unique_ptr<torch::optim::Optimizer> opt_g_;
  std::unique_ptr<torch::optim::Optimizer> opt_d_;
};

struct TrainResult {
  std::vector<StepLog> log;
  std::vector<std::filesystem::path> checkpoints;
};

// One discriminator step then one generator step per batch. Batches follow a
// per-epoch seeded shuffle; frames larger than the patch are cropped at
// seeded origins.
TrainResult train_sr(std::span<const PairedSample> dataset, Generator& gen, Discriminator& disc,
                     PerceptualNet& lpips, const LossWeights& weights, const TrainConfig& cfg);

void write_train_log(const std::filesystem::path& path, const std::vector<StepLog>& log);

Checkpoint sr_checkpoint(Generator& gen, Discriminator& disc, const nlohmann::json& extra = {});
void save_sr_checkpoint(const std::filesystem::path& path, Generator& gen, Discriminator& disc,
                        const nlohmann::json& extra = {});
struct SrModels {
  Generator gen{nullptr};
  Discriminator disc{nullptr};
  nlohmann::json meta;
};
SrModels load_sr_checkpoint(const std::filesystem::path& path);

// ---- Tracker ---------------------------------------------------------------

struct TrackerSample {
  RasterImage image;  // storage space
  Mask mask;          // building = 1
};

struct TrackerTrainConfig {
  OptimizerConfig optimizer = OptimizerConfig::sgd_default();
  int batch_size = 4;
  int max_steps = 0;
  std::uint64_t seed = 0;
  bool full_batch = false;  // every patch in every step

  nlohmann::json to_json() const;
  static TrackerTrainConfig from_json(const nlohmann::json& j);
};

struct TrackerTrainResult {
  std::vector<double> losses;
};

// Pixelwise binary cross-entropy on preprocessed (enlarged, tiled) patches.
TrackerTrainResult train_tracker(std::span<const TrackerSample> samples, Segmenter& seg,
                                 const TrackerConfig& tcfg, const TrackerTrainConfig& cfg);

void save_tracker_checkpoint(const std::filesystem::path& path, Segmenter& seg,
                             const TrackerConfig& cfg, const nlohmann::json& extra = {});
struct TrackerModel {
  Segmenter seg{nullptr};
  TrackerConfig cfg;
  nlohmann::json meta;
};
TrackerModel load_tracker_checkpoint(const std::filesystem::path& path);

// Training IoU of the building class at cfg.tau_bin.
double segmentation_iou(std::span<const TrackerSample> samples, Segmenter& seg,
                        const TrackerConfig& cfg);

}  // namespace stsr
