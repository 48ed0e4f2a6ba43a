#include "parn/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "parn/random.hpp"

namespace parn {

void validate(const NoiseConfig& cfg) {
  if (cfg.permuted_fraction < 0.0 || cfg.permuted_fraction > 1.0) {
    throw ValidationError("noise: permuted_fraction must lie in [0,1]");
  }
  if (cfg.sigma_range[0] < 0.0 || cfg.sigma_range[0] > cfg.sigma_range[1]) {
    throw ValidationError("noise: sigma_range must satisfy 0 <= low <= high");
  }
  if (cfg.image_shape.size() != 2) {
    throw ValidationError("noise: image_shape must be {H, W}, got " +
                          shape_string(cfg.image_shape));
  }
}

namespace {

Index reflect(Index i, Index n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

}  // namespace

DenseTensor gaussian_lowpass(const DenseTensor& image, double sigma) {
  if (sigma < 0.0) throw ValidationError("gaussian_lowpass: sigma must be >= 0");
  if (image.rank() != 2) {
    throw DimensionError("gaussian_lowpass: image must be [H x W], got " +
                         shape_string(image.shape()));
  }
  if (sigma == 0.0) return image;
  const Index h = image.dim(0), w = image.dim(1);
  const Index radius = static_cast<Index>(std::ceil(3.0 * sigma));
  Eigen::VectorXd kernel(2 * radius + 1);
  for (Index k = -radius; k <= radius; ++k) {
    kernel[k + radius] =
        std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
  }
  kernel /= kernel.sum();

  DenseTensor tmp(image.shape());
  DenseTensor out(image.shape());
  // horizontal pass
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      double acc = 0.0;
      for (Index k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * image(i, reflect(j + k, w));
      }
      tmp(i, j) = acc;
    }
  }
  // vertical pass
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      double acc = 0.0;
      for (Index k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * tmp(reflect(i + k, h), j);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

DenseTensor contrast_rescale(const DenseTensor& image) {
  DenseTensor out(image.shape());
  const double lo = image.array().minCoeff();
  const double hi = image.array().maxCoeff();
  if (hi > lo) {
    out.array() = (image.array() - lo) / (hi - lo);
  }
  return out;
}

std::uint64_t NoiseStream::mix(std::uint64_t call) const {
  return mix_seed(cfg_.seed, 0xFEEDF00D00000000ULL + call);
}

DenseTensor generate_noise_batch(const NoiseConfig& cfg,
                                 const DenseTensor* train_images, Index n) {
  validate(cfg);
  const Index n_permuted =
      static_cast<Index>(std::floor(cfg.permuted_fraction * static_cast<double>(n)));
  if (n_permuted > 0 && (!train_images || train_images->size() == 0)) {
    throw ValidationError(
        "noise: permuted_fraction > 0 requires a training image set");
  }
  const Index h = cfg.image_shape[0], w = cfg.image_shape[1];
  const Index d = h * w;
  if (n_permuted > 0) {
    if (train_images->size() % d != 0) {
      throw DimensionError("noise: training images " +
                           shape_string(train_images->shape()) +
                           " do not match image_shape " +
                           shape_string(cfg.image_shape));
    }
  }

  DenseTensor batch(Shape{n, h, w});
  for (Index img = 0; img < n; ++img) {
    std::mt19937_64 rng = make_rng(cfg.seed, static_cast<std::uint64_t>(img));
    DenseTensor pixels(Shape{h, w});
    if (img < n_permuted) {
      const Index n_train = train_images->size() / d;
      std::uniform_int_distribution<Index> pick(0, n_train - 1);
      const Index src = pick(rng);
      const double* base = train_images->data() + src * d;
      std::vector<Index> perm(static_cast<std::size_t>(d));
      std::iota(perm.begin(), perm.end(), Index{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Index p = 0; p < d; ++p) {
        pixels[p] = base[perm[static_cast<std::size_t>(p)]];
      }
    } else {
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (Index p = 0; p < d; ++p) pixels[p] = uni(rng);
    }
    std::uniform_real_distribution<double> sig(cfg.sigma_range[0],
                                               cfg.sigma_range[1]);
    const double sigma =
        cfg.sigma_range[0] == cfg.sigma_range[1] ? cfg.sigma_range[0] : sig(rng);
    pixels = contrast_rescale(gaussian_lowpass(pixels, sigma));
    std::copy(pixels.data(), pixels.data() + d, batch.data() + img * d);
  }
  return batch;
}

}  // namespace parn
