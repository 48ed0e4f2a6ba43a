#include "parn/ops.hpp"

#include <cmath>
#include <string>

namespace parn {

DenseTensor affine(const DenseTensor& x, const DenseTensor& W,
                   const DenseTensor& b) {
  if (x.rank() != 2 || W.rank() != 2) {
    throw DimensionError("affine: x " + shape_string(x.shape()) + ", W " +
                         shape_string(W.shape()) + " must be rank 2");
  }
  if (x.dim(1) != W.dim(1)) {
    throw DimensionError("affine: inner dimensions disagree, x " +
                         shape_string(x.shape()) + " vs W " +
                         shape_string(W.shape()));
  }
  if (b.size() != W.dim(0)) {
    throw DimensionError("affine: bias " + shape_string(b.shape()) +
                         " vs W " + shape_string(W.shape()));
  }
  DenseTensor y(Shape{x.dim(0), W.dim(0)});
  y.matrix().noalias() = x.matrix() * W.matrix().transpose();
  y.matrix().rowwise() += b.vector().transpose();
  return y;
}

DenseTensor relu(const DenseTensor& x, double negative_slope) {
  if (negative_slope < 0.0 || negative_slope >= 1.0) {
    throw ValidationError("relu: negative_slope must lie in [0,1), got " +
                          std::to_string(negative_slope));
  }
  DenseTensor y(x.shape());
  y.array() = x.array().max(0.0) + negative_slope * x.array().min(0.0);
  return y;
}

static void require_logits(const DenseTensor& logits, const char* where) {
  if (logits.rank() != 2 || logits.dim(1) < 2) {
    throw ValidationError(std::string(where) + ": logits must be [batch x K] " +
                          "with K >= 2, got " + shape_string(logits.shape()));
  }
}

DenseTensor softmax(const DenseTensor& logits) {
  require_logits(logits, "softmax");
  DenseTensor p(logits.shape());
  auto in = logits.matrix();
  auto out = p.matrix();
  for (Index i = 0; i < in.rows(); ++i) {
    const double m = in.row(i).maxCoeff();
    out.row(i) = (in.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return p;
}

Eigen::VectorXd logsumexp_rows(const DenseTensor& logits) {
  require_logits(logits, "logsumexp");
  auto in = logits.matrix();
  Eigen::VectorXd lse(in.rows());
  for (Index i = 0; i < in.rows(); ++i) {
    const double m = in.row(i).maxCoeff();
    lse[i] = m + std::log((in.row(i).array() - m).exp().sum());
  }
  return lse;
}

double cross_entropy_mean(const DenseTensor& logits,
                          const std::vector<int>& labels) {
  require_logits(logits, "cross_entropy");
  const Index batch = logits.dim(0);
  const Index K = logits.dim(1);
  if (static_cast<Index>(labels.size()) != batch) {
    throw ValidationError("cross_entropy: " + std::to_string(labels.size()) +
                          " labels for batch " + std::to_string(batch));
  }
  const Eigen::VectorXd lse = logsumexp_rows(logits);
  double total = 0.0;
  for (Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= K) {
      throw ValidationError("cross_entropy: label " + std::to_string(y) +
                            " outside [0," + std::to_string(K) + ")");
    }
    total += lse[i] - logits(i, y);
  }
  return total / static_cast<double>(batch);
}

Eigen::VectorXd max_log_confidence_rows(const DenseTensor& logits) {
  require_logits(logits, "max_log_confidence");
  const Eigen::VectorXd lse = logsumexp_rows(logits);
  auto in = logits.matrix();
  Eigen::VectorXd out(in.rows());
  for (Index i = 0; i < in.rows(); ++i) {
    out[i] = in.row(i).maxCoeff() - lse[i];
  }
  return out;
}

double max_log_confidence_mean(const DenseTensor& logits) {
  return max_log_confidence_rows(logits).mean();
}

Eigen::VectorXd max_confidence_rows(const DenseTensor& logits) {
  return max_log_confidence_rows(logits).array().exp();
}

std::vector<int> argmax_rows(const DenseTensor& logits) {
  auto in = logits.matrix();
  std::vector<int> idx(static_cast<std::size_t>(in.rows()));
  for (Index i = 0; i < in.rows(); ++i) {
    int best = 0;
    for (Index j = 1; j < in.cols(); ++j) {
      if (in(i, j) > in(i, best)) best = static_cast<int>(j);
    }
    idx[static_cast<std::size_t>(i)] = best;
  }
  return idx;
}

Conv2dGeom conv2d_geometry(const Shape& x_shape, const Shape& w_shape,
                           Index stride, Index pad) {
  if (x_shape.size() != 4 || w_shape.size() != 4) {
    throw DimensionError("conv2d: x " + shape_string(x_shape) + ", w " +
                         shape_string(w_shape) + " must be rank 4");
  }
  if (stride < 1 || pad < 0) {
    throw ValidationError("conv2d: stride must be >= 1 and pad >= 0");
  }
  Conv2dGeom g;
  g.batch = x_shape[0];
  g.in_ch = x_shape[1];
  g.in_h = x_shape[2];
  g.in_w = x_shape[3];
  g.out_ch = w_shape[0];
  g.kh = w_shape[2];
  g.kw = w_shape[3];
  g.stride = stride;
  g.pad = pad;
  if (w_shape[1] != g.in_ch) {
    throw DimensionError("conv2d: kernel channels " + shape_string(w_shape) +
                         " vs input " + shape_string(x_shape));
  }
  if (g.in_h + 2 * pad < g.kh || g.in_w + 2 * pad < g.kw) {
    throw DimensionError("conv2d: kernel " + shape_string(w_shape) +
                         " larger than padded input " + shape_string(x_shape));
  }
  g.out_h = (g.in_h + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.in_w + 2 * pad - g.kw) / stride + 1;
  return g;
}

DenseTensor conv2d(const DenseTensor& x, const DenseTensor& w,
                   const DenseTensor& b, Index stride, Index pad) {
  const Conv2dGeom g = conv2d_geometry(x.shape(), w.shape(), stride, pad);
  if (b.size() != 0 && b.size() != g.out_ch) {
    throw DimensionError("conv2d: bias " + shape_string(b.shape()) +
                         " vs kernel " + shape_string(w.shape()));
  }
  DenseTensor y(Shape{g.batch, g.out_ch, g.out_h, g.out_w});
  const double* xd = x.data();
  const double* wd = w.data();
  double* yd = y.data();
  for (Index n = 0; n < g.batch; ++n) {
    for (Index f = 0; f < g.out_ch; ++f) {
      const double bias = b.size() ? b[f] : 0.0;
      for (Index oh = 0; oh < g.out_h; ++oh) {
        for (Index ow = 0; ow < g.out_w; ++ow) {
          double acc = bias;
          for (Index c = 0; c < g.in_ch; ++c) {
            for (Index i = 0; i < g.kh; ++i) {
              const Index ih = oh * g.stride - g.pad + i;
              if (ih < 0 || ih >= g.in_h) continue;
              for (Index j = 0; j < g.kw; ++j) {
                const Index iw = ow * g.stride - g.pad + j;
                if (iw < 0 || iw >= g.in_w) continue;
                acc += xd[((n * g.in_ch + c) * g.in_h + ih) * g.in_w + iw] *
                       wd[((f * g.in_ch + c) * g.kh + i) * g.kw + j];
              }
            }
          }
          yd[((n * g.out_ch + f) * g.out_h + oh) * g.out_w + ow] = acc;
        }
      }
    }
  }
  return y;
}

Pool2dGeom pool2d_geometry(const Shape& x_shape, Index window, Index stride) {
  if (x_shape.size() != 4) {
    throw DimensionError("pool2d: x " + shape_string(x_shape) +
                         " must be rank 4");
  }
  if (window < 1 || stride < 1) {
    throw ValidationError("pool2d: window and stride must be >= 1");
  }
  Pool2dGeom g;
  g.batch = x_shape[0];
  g.ch = x_shape[1];
  g.in_h = x_shape[2];
  g.in_w = x_shape[3];
  g.window = window;
  g.stride = stride;
  if (g.in_h < window || g.in_w < window) {
    throw DimensionError("pool2d: window " + std::to_string(window) +
                         " larger than input " + shape_string(x_shape));
  }
  g.out_h = (g.in_h - window) / stride + 1;
  g.out_w = (g.in_w - window) / stride + 1;
  return g;
}

DenseTensor max_pool2d(const DenseTensor& x, Index window, Index stride,
                       std::vector<Index>* argmax) {
  const Pool2dGeom g = pool2d_geometry(x.shape(), window, stride);
  DenseTensor y(Shape{g.batch, g.ch, g.out_h, g.out_w});
  if (argmax) argmax->assign(static_cast<std::size_t>(y.size()), 0);
  const double* xd = x.data();
  double* yd = y.data();
  Index o = 0;
  for (Index n = 0; n < g.batch; ++n) {
    for (Index c = 0; c < g.ch; ++c) {
      for (Index oh = 0; oh < g.out_h; ++oh) {
        for (Index ow = 0; ow < g.out_w; ++ow, ++o) {
          Index best_idx = -1;
          double best = 0.0;
          for (Index i = 0; i < window; ++i) {
            const Index ih = oh * stride + i;
            for (Index j = 0; j < window; ++j) {
              const Index iw = ow * stride + j;
              const Index idx = ((n * g.ch + c) * g.in_h + ih) * g.in_w + iw;
              if (best_idx < 0 || xd[idx] > best) {
                best = xd[idx];
                best_idx = idx;
              }
            }
          }
          yd[o] = best;
          if (argmax) (*argmax)[static_cast<std::size_t>(o)] = best_idx;
        }
      }
    }
  }
  return y;
}

DenseTensor avg_pool2d(const DenseTensor& x, Index window, Index stride) {
  const Pool2dGeom g = pool2d_geometry(x.shape(), window, stride);
  DenseTensor y(Shape{g.batch, g.ch, g.out_h, g.out_w});
  const double inv = 1.0 / static_cast<double>(window * window);
  const double* xd = x.data();
  double* yd = y.data();
  Index o = 0;
  for (Index n = 0; n < g.batch; ++n) {
    for (Index c = 0; c < g.ch; ++c) {
      for (Index oh = 0; oh < g.out_h; ++oh) {
        for (Index ow = 0; ow < g.out_w; ++ow, ++o) {
          double acc = 0.0;
          for (Index i = 0; i < window; ++i) {
            const Index ih = oh * stride + i;
            for (Index j = 0; j < window; ++j) {
              const Index iw = ow * stride + j;
              acc += xd[((n * g.ch + c) * g.in_h + ih) * g.in_w + iw];
            }
          }
          yd[o] = acc * inv;
        }
      }
    }
  }
  return y;
}

}  // namespace parn
