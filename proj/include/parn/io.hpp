#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "parn/affine_geometry.hpp"
#include "parn/dataset.hpp"
#include "parn/metrics.hpp"
#include "parn/models.hpp"
#include "parn/training.hpp"

namespace parn {

// ---------------------------------------------------------------------------
// IDX image/label files (big-endian magic + dims, unsigned byte payload).

/// Loads an image/label pair; pixels are rescaled to [0,1] by /255.
/// Image magic 0x00000803 ([n,H,W]); 0x00000804 ([n,H,W,C]) is accepted and
/// either kept as channels or collapsed by the luminance average when
/// `grayscale_average` is set.  Label magic 0x00000801.
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path,
                        bool grayscale_average = false);

/// Images-only variant for unlabeled evaluation sets.
DenseTensor load_idx_images(const std::string& images_path,
                            bool grayscale_average = false);

/// Writer counterpart used for round-trip tests and bundling synthetic sets.
/// Values are quantized to bytes by round(v*255).
void write_idx(const DenseTensor& images, const std::vector<int>& labels,
               const std::string& images_path, const std::string& labels_path);

// ---------------------------------------------------------------------------
// Synthetic datasets.

enum class Synth2dKind { TwoMoons, GaussianBlobs };

/// Standard 2-d toy sets, coordinates rescaled into [0,1]^2, classes
/// balanced within one, deterministic per seed.
LabeledDataset synth_2d(Synth2dKind kind, int num_classes, Index n,
                        double noise_std, std::uint64_t seed);

/// 28x28 ten-class glyph digits with random shift, intensity jitter, pixel
/// noise and a light blur.  Deterministic per seed.
LabeledDataset synth_digits(Index n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// PARN1 container: 5-byte magic, u32 little-endian header length, JSON
// header with a tensor directory, payload of little-endian float32 in
// directory order.  Checkpoints add an architecture descriptor that fully
// reconstructs the layer stack.

void save_checkpoint(const ReluNetwork& net, const std::string& path);
ReluNetwork load_checkpoint(const std::string& path);

using NamedTensors = std::vector<std::pair<std::string, DenseTensor>>;
void save_tensors(const NamedTensors& tensors, const std::string& path);
NamedTensors load_tensors(const std::string& path);

// ---------------------------------------------------------------------------
// Plain-text emitters (CSV schemas are part of the tool's interface).

void write_pgm(const DenseTensor& image, const std::string& path);

void write_roc_csv(const std::vector<RocPoint>& points, const std::string& path);
void write_histogram_csv(const ConfidenceHistogram& hist, const std::string& path);
void write_regions_csv(const RegionRaster& raster, const std::string& path);
void write_train_log_csv(const TrainLog& log, const std::string& path);

/// Deterministic shortest-ish formatting used by every CSV emitter.
std::string format_double(double v);

}  // namespace parn
