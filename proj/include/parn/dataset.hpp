#pragma once

#include <vector>

#include "parn/tensor.hpp"

namespace parn {

/// Images in [0,1] with integer class labels.
struct LabeledDataset {
  DenseTensor images;  // [n, ...]
  std::vector<int> labels;
  int num_classes = 0;

  Index count() const { return images.rank() ? images.dim(0) : 0; }
};

void validate(const LabeledDataset& data);

}  // namespace parn
