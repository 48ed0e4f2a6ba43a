#include "parn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "parn/metrics.hpp"
#include "parn/random.hpp"

namespace parn {

void validate(const LabeledDataset& data) {
  if (data.num_classes < 2) {
    throw ValidationError("dataset: num_classes must be >= 2");
  }
  if (data.count() != static_cast<Index>(data.labels.size())) {
    throw ValidationError("dataset: " + std::to_string(data.labels.size()) +
                          " labels for " + std::to_string(data.count()) +
                          " images");
  }
  for (int y : data.labels) {
    if (y < 0 || y >= data.num_classes) {
      throw ValidationError("dataset: label " + std::to_string(y) +
                            " outside [0," + std::to_string(data.num_classes) +
                            ")");
    }
  }
}

MixedBatch make_mixed_batch(DenseTensor inputs, std::vector<int> labels,
                            NoiseStream& noise, double lambda) {
  if (lambda < 0.0) throw ValidationError("make_mixed_batch: lambda must be >= 0");
  const Index batch = inputs.rank() ? inputs.dim(0) : 0;
  const Index n_noise =
      static_cast<Index>(std::ceil(lambda * static_cast<double>(batch)));
  MixedBatch out;
  out.inputs = std::move(inputs);
  out.labels = std::move(labels);
  out.noise_inputs = noise.next(n_noise);
  return out;
}

void adam_step(const std::vector<DenseTensor*>& params,
               const std::vector<DenseTensor>& grads, OptimizerState& state,
               const OptimizerConfig& cfg, double lr) {
  if (state.m.empty()) {
    for (const DenseTensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::ArrayXd& m = state.m[i].array();
    Eigen::ArrayXd& v = state.v[i].array();
    const Eigen::ArrayXd& g = grads[i].array();
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
    params[i]->array() -= lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
  }
}

void sgd_momentum_step(const std::vector<DenseTensor*>& params,
                       const std::vector<DenseTensor>& grads,
                       OptimizerState& state, const OptimizerConfig& cfg,
                       double lr) {
  if (state.m.empty()) {
    for (const DenseTensor* p : params) state.m.emplace_back(p->shape());
  }
  state.step += 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::ArrayXd& vel = state.m[i].array();
    vel = cfg.momentum * vel + grads[i].array();
    params[i]->array() -= lr * vel;
  }
}

DenseTensor mirror_horizontal(const DenseTensor& images) {
  if (images.rank() != 3 && images.rank() != 4) {
    throw DimensionError("mirror: images must be [n,H,W] or [n,C,H,W], got " +
                         shape_string(images.shape()));
  }
  const Index w = images.dim(images.rank() - 1);
  const Index rows = images.size() / w;
  DenseTensor out(images.shape());
  for (Index r = 0; r < rows; ++r) {
    const double* src = images.data() + r * w;
    double* dst = out.data() + r * w;
    for (Index c = 0; c < w; ++c) dst[c] = src[w - 1 - c];
  }
  return out;
}

DenseTensor augment(const DenseTensor& images, const AugmentConfig& cfg,
                    std::mt19937_64& rng) {
  if (cfg.random_crop_pad < 0) {
    throw ValidationError("augment: random_crop_pad must be >= 0");
  }
  if (cfg.random_crop_pad == 0 && !cfg.mirror) return images;
  if (images.rank() != 3 && images.rank() != 4) {
    throw DimensionError("augment: images must be [n,H,W] or [n,C,H,W], got " +
                         shape_string(images.shape()));
  }
  const Index n = images.dim(0);
  const Index ch = images.rank() == 4 ? images.dim(1) : 1;
  const Index h = images.dim(images.rank() - 2);
  const Index w = images.dim(images.rank() - 1);
  const Index pad = cfg.random_crop_pad;

  DenseTensor out(images.shape());
  std::uniform_int_distribution<Index> offset(0, 2 * pad);
  std::bernoulli_distribution flip(0.5);
  for (Index img = 0; img < n; ++img) {
    const Index oy = pad > 0 ? offset(rng) : 0;
    const Index ox = pad > 0 ? offset(rng) : 0;
    const bool mirrored = cfg.mirror && flip(rng);
    for (Index c = 0; c < ch; ++c) {
      const double* src = images.data() + (img * ch + c) * h * w;
      double* dst = out.data() + (img * ch + c) * h * w;
      for (Index r = 0; r < h; ++r) {
        for (Index col = 0; col < w; ++col) {
          const Index src_col = mirrored ? w - 1 - col : col;
          const Index sr = r + oy - pad;
          const Index sc = src_col + ox - pad;
          dst[r * w + col] = (sr >= 0 && sr < h && sc >= 0 && sc < w)
                                 ? src[sr * w + sc]
                                 : 0.0;
        }
      }
    }
  }
  return out;
}

double classification_error(const ReluNetwork& net, const DenseTensor& images,
                            const std::vector<int>& labels) {
  const Index per_sample = shape_size(net.input_shape);
  const Index n = images.size() / per_sample;
  if (static_cast<Index>(labels.size()) != n) {
    throw ValidationError("classification_error: label/image count mismatch");
  }
  constexpr Index kChunk = 1024;
  Index wrong = 0;
  for (Index start = 0; start < n; start += kChunk) {
    const Index len = std::min(kChunk, n - start);
    DenseTensor chunk(Shape{len, per_sample});
    chunk.array() = images.array().segment(start * per_sample, len * per_sample);
    const std::vector<int> pred = argmax_rows(forward(net, chunk));
    for (Index i = 0; i < len; ++i) {
      if (pred[static_cast<std::size_t>(i)] !=
          labels[static_cast<std::size_t>(start + i)]) {
        ++wrong;
      }
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(n);
}

namespace {

Shape noise_shape_for(const DenseTensor& images) {
  if (images.rank() >= 3) {
    return {images.dim(images.rank() - 2), images.dim(images.rank() - 1)};
  }
  return {1, images.dim(1)};
}

DenseTensor gather_rows(const DenseTensor& images, const std::vector<Index>& order,
                        Index start, Index len) {
  const Index per_sample = images.size() / images.dim(0);
  Shape shape = images.shape();
  shape[0] = len;
  DenseTensor out(std::move(shape));
  for (Index i = 0; i < len; ++i) {
    out.array().segment(i * per_sample, per_sample) = images.array().segment(
        order[static_cast<std::size_t>(start + i)] * per_sample, per_sample);
  }
  return out;
}

}  // namespace

TrainLog train(ReluNetwork& net, const LabeledDataset& train_set,
               const LabeledDataset& test_set, const TrainConfig& cfg) {
  validate(net);
  validate(train_set);
  validate(test_set);
  if (train_set.num_classes != net.num_classes) {
    throw ValidationError("train: dataset classes " +
                          std::to_string(train_set.num_classes) +
                          " vs network " + std::to_string(net.num_classes));
  }
  if (cfg.lambda < 0.0) throw ValidationError("train: lambda must be >= 0");
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw ValidationError("train: epochs and batch_size must be >= 1");
  }
  const bool uses_noise = cfg.mode != TrainMode::Plain && cfg.lambda > 0.0;

  NoiseConfig ncfg = cfg.noise;
  if (ncfg.image_shape.empty()) {
    ncfg.image_shape = noise_shape_for(train_set.images);
  }
  ncfg.seed = mix_seed(cfg.seed, 0x4e015e);
  NoiseStream noise_stream(ncfg, &train_set.images);

  NoiseConfig held_cfg = ncfg;
  held_cfg.seed = mix_seed(cfg.seed, 0x4e015f);
  DenseTensor heldout_noise;
  if (cfg.noise_eval_count > 0) {
    heldout_noise =
        generate_noise_batch(held_cfg, &train_set.images, cfg.noise_eval_count);
  }

  std::vector<DenseTensor*> params;
  std::vector<bool> is_weight;
  for (Layer& l : net.layers) {
    if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv) {
      params.push_back(&l.W);
      is_weight.push_back(true);
      params.push_back(&l.b);
      is_weight.push_back(false);
    }
  }
  OptimizerState opt_state;

  const Index n = train_set.count();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  TrainLog log;
  std::uint64_t global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    int drops = 0;
    for (int d : cfg.lr_drop_epochs) {
      if (epoch >= d) ++drops;
    }
    const double lr =
        cfg.optimizer.lr / std::pow(cfg.lr_drop_factor, static_cast<double>(drops));

    std::mt19937_64 shuffle_rng = make_rng(cfg.seed, 0xe70c000000ULL + epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::mt19937_64 aug_rng = make_rng(cfg.seed, 0xa060000000ULL + epoch);

    double epoch_ce = 0.0, epoch_conf = 0.0;
    Index steps = 0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min(cfg.batch_size, n - start);
      DenseTensor batch = gather_rows(train_set.images, order, start, len);
      std::vector<int> labels(static_cast<std::size_t>(len));
      for (Index i = 0; i < len; ++i) {
        labels[static_cast<std::size_t>(i)] =
            train_set.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
      }
      if (cfg.augmentation.random_crop_pad > 0 || cfg.augmentation.mirror) {
        batch = augment(batch, cfg.augmentation, aug_rng);
      }

      DenseTensor noise_batch;
      if (uses_noise) {
        MixedBatch mixed =
            make_mixed_batch(std::move(batch), std::move(labels), noise_stream,
                             cfg.lambda);
        batch = std::move(mixed.inputs);
        labels = std::move(mixed.labels);
        noise_batch = std::move(mixed.noise_inputs);
        if (cfg.mode == TrainMode::Acet && noise_batch.size() > 0) {
          PgdConfig pgd = cfg.pgd;
          pgd.objective = AttackObjective::MaxConfidence;
          pgd.seed = mix_seed(cfg.seed, 0xace7000000ULL + global_step);
          noise_batch = pgd_max_confidence(net, noise_batch, pgd).points;
        }
      }

      Tape tape;
      const TapedNet bound = bind_network(tape, net, true);
      const int x_id = tape.leaf(batch, false);
      const int logits = taped_forward_with(tape, net, bound, x_id);
      const int ce = tape.cross_entropy_mean(logits, labels);
      int loss = ce;
      int lp = -1;
      if (noise_batch.size() > 0) {
        const int z_id = tape.leaf(noise_batch, false);
        const int zlogits = taped_forward_with(tape, net, bound, z_id);
        lp = tape.max_log_conf_mean(zlogits);
        loss = tape.add(ce, tape.scale(lp, cfg.lambda));
      }
      const double loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) {
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      }
      epoch_ce += tape.value(ce)[0];
      if (lp >= 0) epoch_conf += tape.value(lp)[0];
      tape.backward(loss, DenseTensor::scalar(1.0));

      std::vector<DenseTensor> grads;
      grads.reserve(params.size());
      std::size_t pi = 0;
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        if (bound.weight_ids[li] < 0) continue;
        grads.push_back(tape.grad(bound.weight_ids[li]));
        if (cfg.weight_decay != 0.0) {
          grads.back().array() += cfg.weight_decay * params[pi]->array();
        }
        ++pi;
        grads.push_back(tape.grad(bound.bias_ids[li]));  // no decay on biases
        ++pi;
      }
      if (cfg.optimizer.kind == OptimizerKind::Adam) {
        adam_step(params, grads, opt_state, cfg.optimizer, lr);
      } else {
        sgd_momentum_step(params, grads, opt_state, cfg.optimizer, lr);
      }
      ++steps;
      ++global_step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.ce_loss = epoch_ce / static_cast<double>(steps);
    rec.conf_loss = steps && uses_noise ? epoch_conf / static_cast<double>(steps) : 0.0;
    rec.test_error = classification_error(net, test_set.images, test_set.labels);
    rec.noise_mmc =
        heldout_noise.size() > 0
            ? mmc(confidence(net, heldout_noise).max_conf)
            : 0.0;
    log.push_back(rec);
  }
  return log;
}

}  // namespace parn
