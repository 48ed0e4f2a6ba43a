#include "parn/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace parn {

const Tape::Node& Tape::node(int id) const {
  if (id < 0 || id >= size()) {
    throw StateError("tape: node id " + std::to_string(id) + " out of range");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

int Tape::push(Node n) {
  if (backward_done_) {
    throw StateError("tape: recording after backward; tapes are single-use");
  }
  for (int in : {n.a, n.b, n.c}) {
    if (in >= size()) throw StateError("tape: input id out of range");
    if (in >= 0 && nodes_[static_cast<std::size_t>(in)].requires_grad) {
      n.requires_grad = true;
    }
  }
  nodes_.push_back(std::move(n));
  return size() - 1;
}

int Tape::leaf(DenseTensor value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  nodes_.back().requires_grad = requires_grad;
  return size() - 1;
}

int Tape::affine(int x, int w, int b) {
  Node n;
  n.op = Op::Affine;
  n.a = x;
  n.b = w;
  n.c = b;
  n.value = parn::affine(node(x).value, node(w).value, node(b).value);
  return push(std::move(n));
}

int Tape::relu(int x, double negative_slope) {
  Node n;
  n.op = Op::Relu;
  n.a = x;
  n.scalar = negative_slope;
  n.value = parn::relu(node(x).value, negative_slope);
  return push(std::move(n));
}

int Tape::conv2d(int x, int w, int b, Index stride, Index pad) {
  Node n;
  n.op = Op::Conv2d;
  n.a = x;
  n.b = w;
  n.c = b;
  n.p0 = stride;
  n.p1 = pad;
  n.value = parn::conv2d(node(x).value, node(w).value, node(b).value, stride, pad);
  return push(std::move(n));
}

int Tape::max_pool2d(int x, Index window, Index stride) {
  Node n;
  n.op = Op::MaxPool2d;
  n.a = x;
  n.p0 = window;
  n.p1 = stride;
  n.value = parn::max_pool2d(node(x).value, window, stride, &n.argmax);
  return push(std::move(n));
}

int Tape::avg_pool2d(int x, Index window, Index stride) {
  Node n;
  n.op = Op::AvgPool2d;
  n.a = x;
  n.p0 = window;
  n.p1 = stride;
  n.value = parn::avg_pool2d(node(x).value, window, stride);
  return push(std::move(n));
}

int Tape::reshape(int x, Shape shape) {
  Node n;
  n.op = Op::Reshape;
  n.a = x;
  n.prev_shape = node(x).value.shape();
  n.value = node(x).value.reshaped(std::move(shape));
  return push(std::move(n));
}

int Tape::softmax(int x) {
  Node n;
  n.op = Op::Softmax;
  n.a = x;
  n.value = parn::softmax(node(x).value);
  return push(std::move(n));
}

int Tape::cross_entropy_mean(int logits, std::vector<int> labels) {
  Node n;
  n.op = Op::CrossEntropyMean;
  n.a = logits;
  n.value = DenseTensor::scalar(parn::cross_entropy_mean(node(logits).value, labels));
  n.labels = std::move(labels);
  n.saved = parn::softmax(node(logits).value);
  return push(std::move(n));
}

int Tape::max_log_conf_mean(int logits) {
  Node n;
  n.op = Op::MaxLogConfMean;
  n.a = logits;
  n.value = DenseTensor::scalar(parn::max_log_confidence_mean(node(logits).value));
  n.labels = parn::argmax_rows(node(logits).value);
  n.saved = parn::softmax(node(logits).value);
  return push(std::move(n));
}

int Tape::sum(int x) {
  Node n;
  n.op = Op::Sum;
  n.a = x;
  n.value = DenseTensor::scalar(node(x).value.array().sum());
  return push(std::move(n));
}

int Tape::mean(int x) {
  Node n;
  n.op = Op::Mean;
  n.a = x;
  n.value = DenseTensor::scalar(node(x).value.array().mean());
  return push(std::move(n));
}

int Tape::square(int x) {
  Node n;
  n.op = Op::Square;
  n.a = x;
  n.value = DenseTensor(node(x).value.shape(), node(x).value.array().square());
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  require_same_shape(node(a).value, node(b).value, "tape add");
  n.value = DenseTensor(node(a).value.shape(),
                        node(a).value.array() + node(b).value.array());
  return push(std::move(n));
}

int Tape::scale(int x, double factor) {
  Node n;
  n.op = Op::Scale;
  n.a = x;
  n.scalar = factor;
  n.value = DenseTensor(node(x).value.shape(), node(x).value.array() * factor);
  return push(std::move(n));
}

const DenseTensor& Tape::grad(int id) const {
  const Node& n = node(id);
  if (!backward_done_) throw StateError("tape: grad before backward");
  if (n.grad.size() == 0 && n.value.size() != 0) {
    throw StateError("tape: node " + std::to_string(id) +
                     " has no gradient (not part of the seeded output)");
  }
  return n.grad;
}

void Tape::backward() {
  if (nodes_.empty()) throw StateError("tape: backward before forward");
  backward(size() - 1, DenseTensor::scalar(1.0));
}

void Tape::backward(int output, const DenseTensor& seed) {
  if (nodes_.empty()) throw StateError("tape: backward before forward");
  if (backward_done_) throw StateError("tape: backward already ran");
  const Node& out = node(output);
  if (!out.value.same_shape(seed)) {
    throw DimensionError("tape backward: seed " + shape_string(seed.shape()) +
                         " vs output " + shape_string(out.value.shape()));
  }
  for (int i = 0; i <= output; ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad || i == output) n.grad = DenseTensor(n.value.shape());
  }
  nodes_[static_cast<std::size_t>(output)].grad = seed;
  backward_done_ = true;
  for (int i = output; i >= 0; --i) {
    if (!nodes_[static_cast<std::size_t>(i)].requires_grad) continue;
    backprop_node(i);
  }
}

void Tape::backprop_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const DenseTensor& g = n.grad;
  auto wants_grad = [&](int in) {
    return in >= 0 && nodes_[static_cast<std::size_t>(in)].requires_grad;
  };
  auto grad_of = [&](int in) -> DenseTensor& {
    return nodes_[static_cast<std::size_t>(in)].grad;
  };
  auto value_of = [&](int in) -> const DenseTensor& {
    return nodes_[static_cast<std::size_t>(in)].value;
  };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Affine: {
      const DenseTensor& x = value_of(n.a);
      const DenseTensor& w = value_of(n.b);
      if (wants_grad(n.a)) {
        grad_of(n.a).matrix().noalias() += g.matrix() * w.matrix();
      }
      if (wants_grad(n.b)) {
        grad_of(n.b).matrix().noalias() += g.matrix().transpose() * x.matrix();
      }
      if (wants_grad(n.c)) {
        grad_of(n.c).vector() += g.matrix().colwise().sum().transpose();
      }
      break;
    }
    case Op::Relu: {
      if (!wants_grad(n.a)) break;
      const Eigen::ArrayXd& x = value_of(n.a).array();
      // Subgradient at exactly 0 is the inactive branch (slope).
      grad_of(n.a).array() += g.array() * (x > 0.0).select(
          Eigen::ArrayXd::Ones(x.size()),
          Eigen::ArrayXd::Constant(x.size(), n.scalar));
      break;
    }
    case Op::Conv2d: {
      const DenseTensor& x = value_of(n.a);
      const DenseTensor& w = value_of(n.b);
      const Conv2dGeom geom =
          conv2d_geometry(x.shape(), w.shape(), n.p0, n.p1);
      const double* gd = g.data();
      const double* xd = x.data();
      const double* wd = w.data();
      double* dx = wants_grad(n.a) ? grad_of(n.a).data() : nullptr;
      double* dw = wants_grad(n.b) ? grad_of(n.b).data() : nullptr;
      double* db = wants_grad(n.c) ? grad_of(n.c).data() : nullptr;
      for (Index bn = 0; bn < geom.batch; ++bn) {
        for (Index f = 0; f < geom.out_ch; ++f) {
          for (Index oh = 0; oh < geom.out_h; ++oh) {
            for (Index ow = 0; ow < geom.out_w; ++ow) {
              const double go =
                  gd[((bn * geom.out_ch + f) * geom.out_h + oh) * geom.out_w + ow];
              if (db) db[f] += go;
              if (!dx && !dw) continue;
              for (Index c = 0; c < geom.in_ch; ++c) {
                for (Index i = 0; i < geom.kh; ++i) {
                  const Index ih = oh * geom.stride - geom.pad + i;
                  if (ih < 0 || ih >= geom.in_h) continue;
                  for (Index j = 0; j < geom.kw; ++j) {
                    const Index iw = ow * geom.stride - geom.pad + j;
                    if (iw < 0 || iw >= geom.in_w) continue;
                    const Index xi =
                        ((bn * geom.in_ch + c) * geom.in_h + ih) * geom.in_w + iw;
                    const Index wi =
                        ((f * geom.in_ch + c) * geom.kh + i) * geom.kw + j;
                    if (dx) dx[xi] += go * wd[wi];
                    if (dw) dw[wi] += go * xd[xi];
                  }
                }
              }
            }
          }
        }
      }
      break;
    }
    case Op::MaxPool2d: {
      if (!wants_grad(n.a)) break;
      double* dx = grad_of(n.a).data();
      const double* gd = g.data();
      for (Index k = 0; k < g.size(); ++k) {
        dx[n.argmax[static_cast<std::size_t>(k)]] += gd[k];
      }
      break;
    }
    case Op::AvgPool2d: {
      if (!wants_grad(n.a)) break;
      const Pool2dGeom geom = pool2d_geometry(value_of(n.a).shape(), n.p0, n.p1);
      const double inv = 1.0 / static_cast<double>(geom.window * geom.window);
      double* dx = grad_of(n.a).data();
      const double* gd = g.data();
      Index o = 0;
      for (Index bn = 0; bn < geom.batch; ++bn) {
        for (Index c = 0; c < geom.ch; ++c) {
          for (Index oh = 0; oh < geom.out_h; ++oh) {
            for (Index ow = 0; ow < geom.out_w; ++ow, ++o) {
              const double go = gd[o] * inv;
              for (Index i = 0; i < geom.window; ++i) {
                const Index ih = oh * geom.stride + i;
                for (Index j = 0; j < geom.window; ++j) {
                  const Index iw = ow * geom.stride + j;
                  dx[((bn * geom.ch + c) * geom.in_h + ih) * geom.in_w + iw] += go;
                }
              }
            }
          }
        }
      }
      break;
    }
    case Op::Reshape: {
      if (!wants_grad(n.a)) break;
      grad_of(n.a).array() += g.array();
      break;
    }
    case Op::Softmax: {
      if (!wants_grad(n.a)) break;
      auto p = n.value.matrix();
      auto gm = g.matrix(p.rows(), p.cols());
      auto dx = grad_of(n.a).matrix(p.rows(), p.cols());
      for (Index i = 0; i < p.rows(); ++i) {
        const double dot = gm.row(i).dot(p.row(i));
        dx.row(i).array() += p.row(i).array() * (gm.row(i).array() - dot);
      }
      break;
    }
    case Op::CrossEntropyMean: {
      if (!wants_grad(n.a)) break;
      const double gs = g[0] / static_cast<double>(n.saved.dim(0));
      auto dx = grad_of(n.a).matrix();
      dx += gs * n.saved.matrix();
      for (Index i = 0; i < dx.rows(); ++i) {
        dx(i, n.labels[static_cast<std::size_t>(i)]) -= gs;
      }
      break;
    }
    case Op::MaxLogConfMean: {
      if (!wants_grad(n.a)) break;
      const double gs = g[0] / static_cast<double>(n.saved.dim(0));
      auto dx = grad_of(n.a).matrix();
      dx -= gs * n.saved.matrix();
      for (Index i = 0; i < dx.rows(); ++i) {
        dx(i, n.labels[static_cast<std::size_t>(i)]) += gs;
      }
      break;
    }
    case Op::Sum: {
      if (!wants_grad(n.a)) break;
      grad_of(n.a).array() += g[0];
      break;
    }
    case Op::Mean: {
      if (!wants_grad(n.a)) break;
      grad_of(n.a).array() += g[0] / static_cast<double>(value_of(n.a).size());
      break;
    }
    case Op::Square: {
      if (!wants_grad(n.a)) break;
      grad_of(n.a).array() += 2.0 * value_of(n.a).array() * g.array();
      break;
    }
    case Op::Add: {
      if (wants_grad(n.a)) grad_of(n.a).array() += g.array();
      if (wants_grad(n.b)) grad_of(n.b).array() += g.array();
      break;
    }
    case Op::Scale: {
      if (wants_grad(n.a)) grad_of(n.a).array() += n.scalar * g.array();
      break;
    }
  }
}

DenseTensor Tape::compute(const Node& n,
                          const std::vector<DenseTensor>& values) const {
  auto in = [&](int id) -> const DenseTensor& {
    return values[static_cast<std::size_t>(id)];
  };
  switch (n.op) {
    case Op::Leaf:
      return n.value;
    case Op::Affine:
      return parn::affine(in(n.a), in(n.b), in(n.c));
    case Op::Relu:
      return parn::relu(in(n.a), n.scalar);
    case Op::Conv2d:
      return parn::conv2d(in(n.a), in(n.b), in(n.c), n.p0, n.p1);
    case Op::MaxPool2d:
      return parn::max_pool2d(in(n.a), n.p0, n.p1);
    case Op::AvgPool2d:
      return parn::avg_pool2d(in(n.a), n.p0, n.p1);
    case Op::Reshape:
      return in(n.a).reshaped(n.value.shape());
    case Op::Softmax:
      return parn::softmax(in(n.a));
    case Op::CrossEntropyMean:
      return DenseTensor::scalar(parn::cross_entropy_mean(in(n.a), n.labels));
    case Op::MaxLogConfMean:
      return DenseTensor::scalar(parn::max_log_confidence_mean(in(n.a)));
    case Op::Sum:
      return DenseTensor::scalar(in(n.a).array().sum());
    case Op::Mean:
      return DenseTensor::scalar(in(n.a).array().mean());
    case Op::Square:
      return DenseTensor(in(n.a).shape(), in(n.a).array().square());
    case Op::Add:
      return DenseTensor(in(n.a).shape(), in(n.a).array() + in(n.b).array());
    case Op::Scale:
      return DenseTensor(in(n.a).shape(), in(n.a).array() * n.scalar);
  }
  throw StateError("tape: unknown op");
}

std::vector<DenseTensor> Tape::replay_forward() const {
  std::vector<DenseTensor> values;
  values.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    values.push_back(compute(n, values));
  }
  return values;
}

}  // namespace parn
