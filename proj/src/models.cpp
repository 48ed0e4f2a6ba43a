#include "parn/models.hpp"

#include <cmath>
#include <random>
#include <string>

#include "parn/random.hpp"

namespace parn {

void validate(const ReluNetwork& net) {
  if (net.layers.empty()) throw ValidationError("network has no layers");
  if (net.num_classes < 2) {
    throw ValidationError("num_classes must be >= 2, got " +
                          std::to_string(net.num_classes));
  }
  if (net.input_shape.empty()) throw ValidationError("empty input_shape");
  if (net.layers.back().activation != Activation::None) {
    throw ValidationError("output layer must be linear (activation none)");
  }
  const Layer& last = net.layers.back();
  if (last.kind != LayerKind::Dense || last.W.dim(0) != net.num_classes) {
    throw ValidationError("last layer must be dense with num_classes outputs");
  }
}

void validate(const RbfNetwork& net) {
  if (net.gamma <= 0.0) {
    throw ValidationError("rbf: gamma must be positive, got " +
                          std::to_string(net.gamma));
  }
  if (net.centers.rank() != 2 || net.centers.dim(0) < 1) {
    throw ValidationError("rbf: centers must be [N x d] with N >= 1");
  }
  if (!net.centers.all_finite()) throw ValidationError("rbf: non-finite center");
  if (net.coefficients.rank() != 2 ||
      net.coefficients.dim(1) != net.centers.dim(0)) {
    throw DimensionError("rbf: coefficients " +
                         shape_string(net.coefficients.shape()) +
                         " vs centers " + shape_string(net.centers.shape()));
  }
}

bool dense_only(const ReluNetwork& net) {
  for (const Layer& l : net.layers) {
    if (l.kind != LayerKind::Dense) return false;
  }
  return true;
}

namespace {

Index batch_of(const ReluNetwork& net, const DenseTensor& x) {
  const Index per_sample = shape_size(net.input_shape);
  if (x.rank() < 1 || x.size() % per_sample != 0) {
    throw DimensionError("input " + shape_string(x.shape()) +
                         " incompatible with input_shape " +
                         shape_string(net.input_shape));
  }
  const Index batch = x.size() / per_sample;
  if (x.rank() >= 1 && x.dim(0) != batch) {
    throw DimensionError("input " + shape_string(x.shape()) +
                         " incompatible with input_shape " +
                         shape_string(net.input_shape));
  }
  return batch;
}

Shape batched(Index batch, const Shape& per_sample) {
  Shape s{batch};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

}  // namespace

DenseTensor forward(const ReluNetwork& net, const DenseTensor& x) {
  const Index batch = batch_of(net, x);
  DenseTensor cur = x.reshaped(batched(batch, net.input_shape));
  for (const Layer& l : net.layers) {
    switch (l.kind) {
      case LayerKind::Dense:
        if (cur.rank() != 2) cur = cur.reshaped({batch, cur.size() / batch});
        cur = affine(cur, l.W, l.b);
        break;
      case LayerKind::Conv:
        cur = conv2d(cur, l.W, l.b, l.stride, l.pad);
        break;
      case LayerKind::MaxPool:
        cur = max_pool2d(cur, l.window, l.pool_stride ? l.pool_stride : l.window);
        break;
      case LayerKind::AvgPool:
        cur = avg_pool2d(cur, l.window, l.pool_stride ? l.pool_stride : l.window);
        break;
      case LayerKind::Flatten:
        cur = cur.reshaped({batch, cur.size() / batch});
        break;
    }
    if (l.activation == Activation::Relu) {
      cur = relu(cur, 0.0);
    } else if (l.activation == Activation::Leaky) {
      cur = relu(cur, l.leaky_slope);
    }
  }
  return cur;
}

TapedNet bind_network(Tape& tape, const ReluNetwork& net,
                      bool params_require_grad) {
  TapedNet bound;
  for (const Layer& l : net.layers) {
    int w_id = -1, b_id = -1;
    if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv) {
      w_id = tape.leaf(l.W, params_require_grad);
      b_id = tape.leaf(l.b, params_require_grad);
    }
    bound.weight_ids.push_back(w_id);
    bound.bias_ids.push_back(b_id);
  }
  return bound;
}

int taped_forward_with(Tape& tape, const ReluNetwork& net,
                       const TapedNet& bound, int x_id) {
  const DenseTensor& x = tape.value(x_id);
  const Index batch = batch_of(net, x);
  int cur = tape.reshape(x_id, batched(batch, net.input_shape));
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    switch (l.kind) {
      case LayerKind::Dense:
        if (tape.value(cur).rank() != 2) {
          cur = tape.reshape(cur, {batch, tape.value(cur).size() / batch});
        }
        cur = tape.affine(cur, bound.weight_ids[li], bound.bias_ids[li]);
        break;
      case LayerKind::Conv:
        cur = tape.conv2d(cur, bound.weight_ids[li], bound.bias_ids[li],
                          l.stride, l.pad);
        break;
      case LayerKind::MaxPool:
        cur = tape.max_pool2d(cur, l.window,
                              l.pool_stride ? l.pool_stride : l.window);
        break;
      case LayerKind::AvgPool:
        cur = tape.avg_pool2d(cur, l.window,
                              l.pool_stride ? l.pool_stride : l.window);
        break;
      case LayerKind::Flatten:
        cur = tape.reshape(cur, {batch, tape.value(cur).size() / batch});
        break;
    }
    if (l.activation == Activation::Relu) {
      cur = tape.relu(cur, 0.0);
    } else if (l.activation == Activation::Leaky) {
      cur = tape.relu(cur, l.leaky_slope);
    }
  }
  return cur;
}

TapedNet taped_forward(Tape& tape, const ReluNetwork& net, int x_id,
                       bool params_require_grad) {
  TapedNet bound = bind_network(tape, net, params_require_grad);
  bound.output = taped_forward_with(tape, net, bound, x_id);
  return bound;
}

Confidence confidence(const ReluNetwork& net, const DenseTensor& x) {
  Confidence c;
  const DenseTensor logits = forward(net, x);
  c.probs = softmax(logits);
  c.max_conf = max_confidence_rows(logits);
  c.predicted = argmax_rows(logits);
  return c;
}

double cross_entropy_loss(const ReluNetwork& net, const DenseTensor& x,
                          const std::vector<int>& labels) {
  return cross_entropy_mean(forward(net, x), labels);
}

double max_log_confidence_loss(const ReluNetwork& net, const DenseTensor& z) {
  return max_log_confidence_mean(forward(net, z));
}

DenseTensor rbf_forward(const RbfNetwork& net, const DenseTensor& x) {
  validate(net);
  const Index d = net.centers.dim(1);
  const Index last = x.rank() ? x.dim(x.rank() - 1) : 0;
  if ((x.rank() == 1 && x.size() != d) || (x.rank() != 1 && last != d)) {
    throw DimensionError("rbf input " + shape_string(x.shape()) +
                         " vs centers " + shape_string(net.centers.shape()));
  }
  const Index batch = x.size() / d;
  auto xm = x.matrix(batch, d);
  auto cm = net.centers.matrix();
  auto am = net.coefficients.matrix();
  const Index N = cm.rows();
  DenseTensor logits(Shape{batch, am.rows()});
  Eigen::VectorXd kernel(N);
  for (Index i = 0; i < batch; ++i) {
    for (Index l = 0; l < N; ++l) {
      kernel[l] = std::exp(-net.gamma * (xm.row(i) - cm.row(l)).squaredNorm());
    }
    logits.matrix().row(i) = (am * kernel).transpose();
  }
  return logits;
}

namespace {

DenseTensor he_weights(Shape shape, Index fan_in, std::mt19937_64& rng) {
  DenseTensor w(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Index i = 0; i < w.size(); ++i) w[i] = dist(rng);
  return w;
}

}  // namespace

ReluNetwork make_mlp(Shape input_shape, const std::vector<Index>& hidden,
                     Index num_classes, std::uint64_t seed,
                     double leaky_slope, double init_scale) {
  if (init_scale <= 0.0) {
    throw ValidationError("make_mlp: init_scale must be positive");
  }
  ReluNetwork net;
  net.input_shape = std::move(input_shape);
  net.num_classes = num_classes;
  std::mt19937_64 rng = make_rng(seed);
  Index n_in = shape_size(net.input_shape);
  for (Index h : hidden) {
    Layer l;
    l.W = he_weights({h, n_in}, n_in, rng);
    l.W.array() *= init_scale;
    l.b = DenseTensor(Shape{h});
    l.activation = leaky_slope > 0.0 ? Activation::Leaky : Activation::Relu;
    l.leaky_slope = leaky_slope;
    net.layers.push_back(std::move(l));
    n_in = h;
  }
  Layer out;
  out.W = he_weights({num_classes, n_in}, n_in, rng);
  out.W.array() *= init_scale;
  out.b = DenseTensor(Shape{num_classes});
  out.activation = Activation::None;
  net.layers.push_back(std::move(out));
  validate(net);
  return net;
}

ReluNetwork make_small_cnn(Shape input_shape, Index num_classes,
                           std::uint64_t seed) {
  if (input_shape.size() != 3) {
    throw ValidationError("cnn input_shape must be [C,H,W], got " +
                          shape_string(input_shape));
  }
  ReluNetwork net;
  net.input_shape = input_shape;
  net.num_classes = num_classes;
  std::mt19937_64 rng = make_rng(seed);
  const Index C = input_shape[0], H = input_shape[1], W = input_shape[2];

  auto conv_block = [&](Index in_ch, Index filters) {
    Layer conv;
    conv.kind = LayerKind::Conv;
    conv.W = he_weights({filters, in_ch, 5, 5}, in_ch * 25, rng);
    conv.b = DenseTensor(Shape{filters});
    conv.stride = 1;
    conv.pad = 2;
    conv.activation = Activation::Relu;
    net.layers.push_back(std::move(conv));
    Layer pool;
    pool.kind = LayerKind::MaxPool;
    pool.window = 2;
    net.layers.push_back(std::move(pool));
  };
  conv_block(C, 16);
  conv_block(16, 32);

  Layer flat;
  flat.kind = LayerKind::Flatten;
  net.layers.push_back(std::move(flat));

  const Index feat = 32 * (H / 4) * (W / 4);
  Layer fc1;
  fc1.W = he_weights({100, feat}, feat, rng);
  fc1.b = DenseTensor(Shape{100});
  fc1.activation = Activation::Relu;
  net.layers.push_back(std::move(fc1));

  Layer fc2;
  fc2.W = he_weights({num_classes, 100}, 100, rng);
  fc2.b = DenseTensor(Shape{num_classes});
  net.layers.push_back(std::move(fc2));
  validate(net);
  return net;
}

RbfNetwork make_rbf(DenseTensor centers, Index num_classes, double gamma) {
  RbfNetwork net;
  net.coefficients = DenseTensor(Shape{num_classes, centers.dim(0)});
  net.centers = std::move(centers);
  net.gamma = gamma;
  validate(net);
  return net;
}

double train_rbf_coefficients(RbfNetwork& net, const DenseTensor& x,
                              const std::vector<int>& labels, int steps,
                              double learning_rate) {
  validate(net);
  const Index d = net.centers.dim(1);
  const Index batch = x.size() / d;
  const Index N = net.centers.dim(0);
  const Index K = net.coefficients.dim(0);
  auto xm = x.matrix(batch, d);
  auto cm = net.centers.matrix();

  // Logits are linear in the coefficients: f = kernel * coeff^T.
  RowMatrixXd kernel(batch, N);
  for (Index i = 0; i < batch; ++i) {
    for (Index l = 0; l < N; ++l) {
      kernel(i, l) =
          std::exp(-net.gamma * (xm.row(i) - cm.row(l)).squaredNorm());
    }
  }
  double loss = 0.0;
  for (int s = 0; s < steps; ++s) {
    DenseTensor logits(Shape{batch, K});
    logits.matrix().noalias() = kernel * net.coefficients.matrix().transpose();
    loss = cross_entropy_mean(logits, labels);
    DenseTensor p = softmax(logits);
    for (Index i = 0; i < batch; ++i) {
      p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    }
    net.coefficients.matrix().noalias() -=
        (learning_rate / static_cast<double>(batch)) *
        (p.matrix().transpose() * kernel);
  }
  return loss;
}

}  // namespace parn
