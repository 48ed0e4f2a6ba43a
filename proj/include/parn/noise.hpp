#pragma once

#include <array>
#include <cstdint>

#include "parn/tensor.hpp"

namespace parn {

struct NoiseConfig {
  double permuted_fraction = 0.5;          // share built from permuted images
  std::array<double, 2> sigma_range{1.0, 2.5};  // per-image lowpass strength
  std::uint64_t seed = 0;
  Shape image_shape;  // {H, W}
};

void validate(const NoiseConfig& cfg);

/// Samples n images in [0,1]^d: floor(permuted_fraction*n) pixel-permuted
/// training images, the rest i.i.d. uniform, each smoothed with a per-image
/// sigma drawn from sigma_range and contrast-rescaled.  Fully determined by
/// (config, n); per-image randomness is keyed by seed and image index.
DenseTensor generate_noise_batch(const NoiseConfig& cfg,
                                 const DenseTensor* train_images, Index n);

/// Separable Gaussian convolution, kernel radius ceil(3*sigma), kernel
/// normalized to sum 1, reflecting at borders.  sigma 0 is the identity.
DenseTensor gaussian_lowpass(const DenseTensor& image, double sigma);

/// Per-image (x - min)/(max - min); constant images map to all zeros.
DenseTensor contrast_rescale(const DenseTensor& image);

/// Deterministic stream of fresh noise batches (per training step).
class NoiseStream {
public:
  NoiseStream(NoiseConfig cfg, const DenseTensor* train_images)
      : cfg_(std::move(cfg)), train_images_(train_images) {}

  DenseTensor next(Index n) {
    NoiseConfig cfg = cfg_;
    cfg.seed = mix(calls_++);
    return generate_noise_batch(cfg, train_images_, n);
  }

  const NoiseConfig& config() const { return cfg_; }

private:
  std::uint64_t mix(std::uint64_t call) const;
  NoiseConfig cfg_;
  const DenseTensor* train_images_;
  std::uint64_t calls_ = 0;
};

}  // namespace parn
