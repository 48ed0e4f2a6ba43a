#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "parn/attacks.hpp"
#include "parn/dataset.hpp"
#include "parn/models.hpp"
#include "parn/noise.hpp"

namespace parn {

enum class TrainMode { Plain, Ceda, Acet };

enum class OptimizerKind { Adam, SgdMomentum };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AugmentConfig {
  int random_crop_pad = 0;  // zero-pad then random crop back
  bool mirror = false;      // horizontal mirror with probability 1/2
};

struct TrainConfig {
  TrainMode mode = TrainMode::Plain;
  double lambda = 1.0;  // weight of the confidence term (ceda/acet)
  int epochs = 100;
  Index batch_size = 128;
  OptimizerConfig optimizer;
  double weight_decay = 5e-4;  // L2 on weights, never on biases
  std::vector<int> lr_drop_epochs{50, 75, 90};
  double lr_drop_factor = 10.0;
  PgdConfig pgd;  // inner maximization for acet (40 iters, eps 0.3 defaults)
  std::uint64_t seed = 0;
  AugmentConfig augmentation;
  NoiseConfig noise;            // image_shape inferred from data when empty
  Index noise_eval_count = 512; // held-out noise batch for the epoch log
};

struct EpochRecord {
  int epoch = 0;
  double ce_loss = 0.0;
  double conf_loss = 0.0;
  double test_error = 0.0;
  double noise_mmc = 0.0;
};
using TrainLog = std::vector<EpochRecord>;

/// A data batch plus ceil(lambda*B) freshly drawn unlabeled noise samples;
/// the noise feeds only the confidence term.
struct MixedBatch {
  DenseTensor inputs;
  std::vector<int> labels;
  DenseTensor noise_inputs;
};
MixedBatch make_mixed_batch(DenseTensor inputs, std::vector<int> labels,
                            NoiseStream& noise, double lambda);

struct OptimizerState {
  std::vector<DenseTensor> m;  // adam first moment / sgd velocity
  std::vector<DenseTensor> v;  // adam second moment
  long step = 0;
};

void adam_step(const std::vector<DenseTensor*>& params,
               const std::vector<DenseTensor>& grads, OptimizerState& state,
               const OptimizerConfig& cfg, double lr);

void sgd_momentum_step(const std::vector<DenseTensor*>& params,
                       const std::vector<DenseTensor>& grads,
                       OptimizerState& state, const OptimizerConfig& cfg,
                       double lr);

/// Zero-pad by `random_crop_pad`, crop back to the original extent at a
/// random offset, then mirror each image with probability 1/2 if enabled.
DenseTensor augment(const DenseTensor& images, const AugmentConfig& cfg,
                    std::mt19937_64& rng);

/// Horizontal flip (last axis) of a [n,H,W] or [n,C,H,W] stack.
DenseTensor mirror_horizontal(const DenseTensor& images);

double classification_error(const ReluNetwork& net, const DenseTensor& images,
                            const std::vector<int>& labels);

/// Minimizes the cross-entropy objective, optionally with the noise
/// confidence term (ceda) or its epsilon-ball worst case (acet).
TrainLog train(ReluNetwork& net, const LabeledDataset& train_set,
               const LabeledDataset& test_set, const TrainConfig& cfg);

}  // namespace parn
