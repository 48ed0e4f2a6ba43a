#pragma once

#include <cstdint>
#include <vector>

#include "parn/ops.hpp"
#include "parn/tape.hpp"
#include "parn/tensor.hpp"

namespace parn {

enum class LayerKind { Dense, Conv, MaxPool, AvgPool, Flatten };
enum class Activation { None, Relu, Leaky };

struct Layer {
  LayerKind kind = LayerKind::Dense;
  DenseTensor W;  // Dense: [n_out x n_in]; Conv: [F x C x kh x kw]
  DenseTensor b;  // [n_out] / [F]
  Activation activation = Activation::None;
  double leaky_slope = 0.01;
  Index stride = 1;  // conv
  Index pad = 0;     // conv
  Index window = 2;  // pool window; pool stride equals window unless stride set
  Index pool_stride = 0;  // 0 means same as window
};

/// Feedforward stack of dense/conv/pool/flatten layers with a linear output
/// layer.  The value it computes is piecewise affine in the input.
struct ReluNetwork {
  std::vector<Layer> layers;
  Shape input_shape;  // per-sample shape, e.g. {784} or {1,28,28}
  Index num_classes = 0;
};

/// f_k(x) = sum_l coefficients[k,l] * exp(-gamma * |x - centers[l]|^2).
struct RbfNetwork {
  DenseTensor centers;       // [N x d]
  DenseTensor coefficients;  // [K x N]
  double gamma = 1.0;
};

void validate(const ReluNetwork& net);
void validate(const RbfNetwork& net);

/// True when every layer is dense (the architectures whose exact affine
/// structure the geometry routines can extract).
bool dense_only(const ReluNetwork& net);

/// Logits [batch x K].  x may be [batch x d] flat or [batch, ...] matching
/// input_shape.
DenseTensor forward(const ReluNetwork& net, const DenseTensor& x);

DenseTensor rbf_forward(const RbfNetwork& net, const DenseTensor& x);

struct Confidence {
  DenseTensor probs;          // [batch x K]
  Eigen::VectorXd max_conf;   // per sample
  std::vector<int> predicted; // argmax, lowest index on ties
};
Confidence confidence(const ReluNetwork& net, const DenseTensor& x);

/// Mean over the batch of -log softmax(f(x))[y].
double cross_entropy_loss(const ReluNetwork& net, const DenseTensor& x,
                          const std::vector<int>& labels);

/// Mean over the batch of max_l log softmax(f(z))[l]; lies in [-ln K, 0).
double max_log_confidence_loss(const ReluNetwork& net, const DenseTensor& z);

/// Forward pass recorded on a tape.  Parameters are registered as leaves so
/// the same builder serves training (param grads) and attacks (input grads).
struct TapedNet {
  std::vector<int> weight_ids;  // per layer, -1 where the layer has none
  std::vector<int> bias_ids;
  int output = -1;  // logits node
};

/// Registers every parameter tensor as a tape leaf without running forward.
TapedNet bind_network(Tape& tape, const ReluNetwork& net,
                      bool params_require_grad);

/// Forward through already-bound parameters; returns the logits node.  Lets
/// several inputs (e.g. a data batch and a noise batch) share one set of
/// parameter leaves so their gradients accumulate.
int taped_forward_with(Tape& tape, const ReluNetwork& net,
                       const TapedNet& bound, int x_id);

TapedNet taped_forward(Tape& tape, const ReluNetwork& net, int x_id,
                       bool params_require_grad);

/// Fully connected net: input -> hidden... -> num_classes, ReLU activations
/// (leaky when slope > 0), He-initialized weights scaled by init_scale,
/// zero biases.  A scale below 1 keeps early logits small, which keeps the
/// confidence terms out of softmax saturation during the first epochs.
ReluNetwork make_mlp(Shape input_shape, const std::vector<Index>& hidden,
                     Index num_classes, std::uint64_t seed,
                     double leaky_slope = 0.0, double init_scale = 1.0);

/// Small convolutional default: two conv(5x5, pad 2)+maxpool(2) blocks with
/// 16 and 32 filters, then dense 100 and the class layer.
ReluNetwork make_small_cnn(Shape input_shape, Index num_classes,
                           std::uint64_t seed);

/// RBF with given centers; coefficients start at zero.
RbfNetwork make_rbf(DenseTensor centers, Index num_classes, double gamma);

/// Full-batch gradient descent on cross-entropy over the coefficients
/// (centers and gamma stay fixed).  Returns the final loss.
double train_rbf_coefficients(RbfNetwork& net, const DenseTensor& x,
                              const std::vector<int>& labels, int steps,
                              double learning_rate);

}  // namespace parn
