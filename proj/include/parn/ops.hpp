#pragma once

#include <vector>

#include "parn/tensor.hpp"

namespace parn {

/// y[i,j] = sum_k W[j,k] x[i,k] + b[j].  x: [batch x n_in], W: [n_out x n_in],
/// b: [n_out].
DenseTensor affine(const DenseTensor& x, const DenseTensor& W,
                   const DenseTensor& b);

/// Elementwise max(0,t) + negative_slope * min(0,t); slope 0 is plain ReLU.
DenseTensor relu(const DenseTensor& x, double negative_slope = 0.0);

/// Row-wise softmax with max-shift; rows sum to 1.  logits: [batch x K], K >= 2.
DenseTensor softmax(const DenseTensor& logits);

/// Row-wise log(sum(exp(row))) computed with max-shift.
Eigen::VectorXd logsumexp_rows(const DenseTensor& logits);

/// Mean over the batch of -log softmax(f)[y], via log-sum-exp.
double cross_entropy_mean(const DenseTensor& logits,
                          const std::vector<int>& labels);

/// Per row: max_l f_l - logsumexp(f), the maximal log confidence.
Eigen::VectorXd max_log_confidence_rows(const DenseTensor& logits);
double max_log_confidence_mean(const DenseTensor& logits);

/// Per row: exp(max_l f_l - logsumexp(f)), safe for huge logits.
Eigen::VectorXd max_confidence_rows(const DenseTensor& logits);

/// Row argmax with lowest-index tie-break.
std::vector<int> argmax_rows(const DenseTensor& logits);

struct Conv2dGeom {
  Index batch, in_ch, in_h, in_w;
  Index out_ch, kh, kw;
  Index stride, pad;
  Index out_h, out_w;
};
Conv2dGeom conv2d_geometry(const Shape& x_shape, const Shape& w_shape,
                           Index stride, Index pad);

/// Cross-correlation.  x: [batch,C,H,W], w: [F,C,kh,kw], b: [F] (size 0 for
/// no bias).  Zero padding `pad`, output extents floor((H+2p-kh)/s)+1.
DenseTensor conv2d(const DenseTensor& x, const DenseTensor& w,
                   const DenseTensor& b, Index stride = 1, Index pad = 0);

struct Pool2dGeom {
  Index batch, ch, in_h, in_w;
  Index window, stride;
  Index out_h, out_w;
};
Pool2dGeom pool2d_geometry(const Shape& x_shape, Index window, Index stride);

/// Window max.  x: [batch,C,H,W].  When `argmax` is given it receives the
/// flat input index of each output cell's maximum (first max wins).
DenseTensor max_pool2d(const DenseTensor& x, Index window, Index stride,
                       std::vector<Index>* argmax = nullptr);

/// Window mean over the same geometry as max_pool2d.
DenseTensor avg_pool2d(const DenseTensor& x, Index window, Index stride);

}  // namespace parn
