#pragma once

#include <vector>

#include "parn/ops.hpp"
#include "parn/tensor.hpp"

namespace parn {

/// Reverse-mode autodiff over an eagerly evaluated op record.
///
/// Every builder method runs the forward computation immediately, stores the
/// result, and returns the node id.  A tape holds one forward pass; backward
/// may run once and visits nodes in reverse recording order, which is a
/// reverse topological order by construction.  Tapes are confined to one
/// thread of execution.
class Tape {
public:
  enum class Op {
    Leaf,
    Affine,
    Relu,
    Conv2d,
    MaxPool2d,
    AvgPool2d,
    Reshape,
    Softmax,
    CrossEntropyMean,
    MaxLogConfMean,
    Sum,
    Mean,
    Square,
    Add,
    Scale,
  };

  /// Registers an input/parameter.  Gradients are only propagated into
  /// leaves with requires_grad set.
  int leaf(DenseTensor value, bool requires_grad = true);

  int affine(int x, int w, int b);
  int relu(int x, double negative_slope = 0.0);
  int conv2d(int x, int w, int b, Index stride = 1, Index pad = 0);
  int max_pool2d(int x, Index window, Index stride);
  int avg_pool2d(int x, Index window, Index stride);
  int reshape(int x, Shape shape);
  int softmax(int x);
  int cross_entropy_mean(int logits, std::vector<int> labels);
  int max_log_conf_mean(int logits);
  int sum(int x);
  int mean(int x);
  int square(int x);
  int add(int a, int b);
  int scale(int x, double factor);

  int size() const { return static_cast<int>(nodes_.size()); }
  const DenseTensor& value(int id) const { return node(id).value; }
  /// Gradient of the seeded output w.r.t. node `id`; valid after backward.
  const DenseTensor& grad(int id) const;

  /// Seeds `output` with `seed` and accumulates gradients into every node
  /// that (transitively) requires them.
  void backward(int output, const DenseTensor& seed);
  /// Scalar convenience: seed 1 on the last recorded node.
  void backward();

  /// Recomputes every node value from the recorded leaves and op metadata.
  std::vector<DenseTensor> replay_forward() const;

private:
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    bool requires_grad = false;
    double scalar = 0.0;   // relu slope / scale factor
    Index p0 = 0, p1 = 0;  // stride,pad or window,stride
    std::vector<int> labels;
    std::vector<Index> argmax;
    DenseTensor saved;  // softmax probabilities for loss backward
    Shape prev_shape;
    DenseTensor value;
    DenseTensor grad;
  };

  const Node& node(int id) const;
  int push(Node n);
  DenseTensor compute(const Node& n,
                      const std::vector<DenseTensor>& values) const;
  void backprop_node(int id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace parn
