#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "parn/affine_geometry.hpp"
#include "parn/models.hpp"

#include "test_util.hpp"

using namespace parn;
using namespace parn::testutil;

namespace {

ReluNetwork zero_mlp(Index d, Index hidden, Index k) {
  ReluNetwork net;
  net.input_shape = {d};
  net.num_classes = k;
  Layer l1;
  l1.W = DenseTensor({hidden, d});
  l1.b = DenseTensor({hidden});
  l1.activation = Activation::Relu;
  net.layers.push_back(std::move(l1));
  Layer l2;
  l2.W = DenseTensor({k, hidden});
  l2.b = DenseTensor({k});
  net.layers.push_back(std::move(l2));
  return net;
}

}  // namespace

TEST_CASE("zero network: uniform softmax, ln K loss, tie-break to class 0") {
  const ReluNetwork net = zero_mlp(4, 6, 10);
  std::mt19937_64 rng(1);
  const DenseTensor x = random_tensor({3, 4}, rng);
  const DenseTensor logits = forward(net, x);
  CHECK(logits.array().abs().maxCoeff() == 0.0);

  const Confidence c = confidence(net, x);
  for (Index i = 0; i < 3; ++i) {
    CHECK(c.max_conf[i] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c.predicted[static_cast<std::size_t>(i)] == 0);
  }
  CHECK(cross_entropy_loss(net, x, {1, 2, 3}) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(max_log_confidence_loss(net, x) ==
        doctest::Approx(-std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("one-layer network equals a single affine layer") {
  std::mt19937_64 rng(2);
  ReluNetwork net;
  net.input_shape = {5};
  net.num_classes = 3;
  Layer l;
  l.W = random_tensor({3, 5}, rng);
  l.b = random_tensor({3}, rng);
  net.layers.push_back(l);

  const DenseTensor x = random_tensor({7, 5}, rng);
  const DenseTensor got = forward(net, x);
  const DenseTensor want = affine(x, net.layers[0].W, net.layers[0].b);
  CHECK((got.array() - want.array()).abs().maxCoeff() == 0.0);
}

TEST_CASE("forward matches a layer-by-layer loop oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_int_distribution<std::uint64_t> seeds;
    const ReluNetwork net = make_mlp({6}, {9, 7}, 4, seeds(rng));
    const DenseTensor x = random_tensor({20, 6}, rng, -2, 2);
    const DenseTensor got = forward(net, x);
    for (Index i = 0; i < 20; ++i) {
      Eigen::VectorXd v = x.matrix().row(i).transpose();
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& l = net.layers[li];
        Eigen::VectorXd next(l.W.dim(0));
        for (Index r = 0; r < l.W.dim(0); ++r) {
          double acc = l.b[r];
          for (Index cidx = 0; cidx < l.W.dim(1); ++cidx) {
            acc += l.W(r, cidx) * v[cidx];
          }
          next[r] = acc;
        }
        if (l.activation == Activation::Relu) next = next.cwiseMax(0.0);
        v = next;
      }
      for (Index k = 0; k < 4; ++k) {
        CHECK(std::abs(got(i, k) - v[k]) < 1e-12);
      }
    }
  }
}

TEST_CASE("forward shape errors") {
  const ReluNetwork net = zero_mlp(4, 6, 3);
  CHECK_THROWS_AS(forward(net, DenseTensor({2, 5})), DimensionError);
  CHECK_THROWS_AS(validate(zero_mlp(4, 6, 1)), ValidationError);
}

TEST_CASE("output layer must be linear") {
  ReluNetwork net = zero_mlp(4, 6, 3);
  net.layers.back().activation = Activation::Relu;
  CHECK_THROWS_AS(validate(net), ValidationError);
}

TEST_CASE("confidence on fixed logits") {
  // direct softmax evaluation of [2,1,0]
  ReluNetwork net;
  net.input_shape = {3};
  net.num_classes = 3;
  Layer l;
  l.W = DenseTensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  l.b = DenseTensor({3});
  net.layers.push_back(l);
  DenseTensor x({1, 3});
  x(0, 0) = 2;
  x(0, 1) = 1;
  x(0, 2) = 0;
  const Confidence c = confidence(net, x);
  CHECK(c.probs(0, 0) == doctest::Approx(0.66524096).epsilon(1e-7));
  CHECK(c.probs(0, 1) == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(c.probs(0, 2) == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(c.predicted[0] == 0);
}

TEST_CASE("max log confidence stays in [-ln K, 0) and is -ln K iff uniform") {
  std::mt19937_64 rng(4);
  const double lnk = std::log(4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const DenseTensor logits = random_tensor({1, 4}, rng, -5, 5);
    const double v = max_log_confidence_mean(logits);
    CHECK(v >= -lnk - 1e-12);
    CHECK(v < 0.0);
  }
  CHECK(max_log_confidence_mean(DenseTensor::constant({1, 4}, 2.5)) ==
        doctest::Approx(-lnk).epsilon(1e-12));

  // strictly increasing when the top logit grows, others fixed
  DenseTensor base({1, 3});
  base(0, 0) = 1.0;
  double prev = max_log_confidence_mean(base);
  for (double top = 1.5; top < 5.0; top += 0.5) {
    base(0, 0) = top;
    const double cur = max_log_confidence_mean(base);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("cross entropy identities") {
  std::mt19937_64 rng(5);
  const ReluNetwork net = make_mlp({4}, {8}, 3, 99);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseTensor x = random_tensor({1, 4}, rng, -1, 1);
    const int label = trial % 3;
    const double ce = cross_entropy_loss(net, x, {label});
    CHECK(ce >= 0.0);
    const Confidence c = confidence(net, x);
    CHECK(ce == doctest::Approx(-std::log(c.probs(0, label))).epsilon(1e-10));
  }
}

TEST_CASE("scale covariance inside a fixed activation region") {
  std::mt19937_64 rng(6);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 20; ++trial) {
    std::uniform_int_distribution<std::uint64_t> seeds;
    const ReluNetwork net = make_mlp({4}, {10, 6}, 3, seeds(rng));
    const Eigen::VectorXd x = gaussian_tensor({4}, rng).vector();
    const double beta = 1.0 + 0.25 * (trial % 4 + 1);
    if (!(activation_pattern(net, x) ==
          activation_pattern(net, (beta * x).eval()))) {
      continue;
    }
    ++checked;
    const LocalAffineMap map = local_affine_map(net, x);
    DenseTensor in({1, 4});
    in.vector() = beta * x;
    const DenseTensor out = forward(net, in);
    const Eigen::VectorXd expect = map.V * (beta * x) + map.a;
    for (Index k = 0; k < 3; ++k) {
      const double rel =
          std::abs(out(0, k) - expect[k]) / (1.0 + std::abs(expect[k]));
      CHECK(rel < 1e-8);
    }
  }
  CHECK(checked >= 20);
}

TEST_CASE("rbf forward: hand cases and double-loop oracle") {
  std::mt19937_64 rng(7);

  // identical coefficient rows give uniform softmax everywhere
  RbfNetwork uniform_net;
  uniform_net.centers = random_tensor({5, 3}, rng);
  uniform_net.coefficients = DenseTensor::constant({4, 5}, 0.7);
  uniform_net.gamma = 2.0;
  const DenseTensor probe = random_tensor({6, 3}, rng, -3, 3);
  const DenseTensor probs = softmax(rbf_forward(uniform_net, probe));
  CHECK((probs.array() - 0.25).abs().maxCoeff() < 1e-12);

  // x at a single center: logits equal the coefficients
  RbfNetwork single;
  single.centers = random_tensor({1, 3}, rng);
  single.coefficients = random_tensor({4, 1}, rng);
  single.gamma = 3.7;
  DenseTensor at_center({1, 3});
  at_center.vector() = single.centers.matrix().row(0).transpose();
  const DenseTensor l0 = rbf_forward(single, at_center);
  for (Index k = 0; k < 4; ++k) {
    CHECK(l0(0, k) == doctest::Approx(single.coefficients(k, 0)).epsilon(1e-12));
  }

  // random configuration vs the naive double loop
  for (int trial = 0; trial < 10; ++trial) {
    RbfNetwork net;
    net.centers = random_tensor({7, 4}, rng, -1, 1);
    net.coefficients = random_tensor({3, 7}, rng, -2, 2);
    net.gamma = 0.5 + 0.3 * trial;
    const DenseTensor x = random_tensor({5, 4}, rng, -2, 2);
    const DenseTensor logits = rbf_forward(net, x);
    for (Index i = 0; i < 5; ++i) {
      for (Index k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (Index l = 0; l < 7; ++l) {
          double d2 = 0.0;
          for (Index j = 0; j < 4; ++j) {
            const double diff = x(i, j) - net.centers(l, j);
            d2 += diff * diff;
          }
          acc += net.coefficients(k, l) * std::exp(-net.gamma * d2);
        }
        CHECK(std::abs(logits(i, k) - acc) < 1e-12);
      }
    }
  }

  // logits bounded by the coefficient l1 norms
  RbfNetwork bound_net;
  bound_net.centers = random_tensor({6, 2}, rng, -1, 1);
  bound_net.coefficients = random_tensor({3, 6}, rng, -2, 2);
  bound_net.gamma = 1.0;
  const DenseTensor far = random_tensor({50, 2}, rng, -30, 30);
  const DenseTensor logits = rbf_forward(bound_net, far);
  for (Index k = 0; k < 3; ++k) {
    const double limit = bound_net.coefficients.matrix().row(k).cwiseAbs().sum();
    CHECK(logits.matrix().col(k).cwiseAbs().maxCoeff() <= limit + 1e-12);
  }

  CHECK_THROWS_AS(rbf_forward(bound_net, DenseTensor({2, 3})), DimensionError);
  RbfNetwork bad = bound_net;
  bad.gamma = 0.0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
}

TEST_CASE("rbf coefficient training reduces cross entropy") {
  std::mt19937_64 rng(8);
  const DenseTensor x = random_tensor({40, 2}, rng, 0, 1);
  std::vector<int> labels;
  for (Index i = 0; i < 40; ++i) {
    labels.push_back(x(i, 0) > 0.5 ? 1 : 0);
  }
  RbfNetwork net = make_rbf(x, 2, 4.0);
  const double before = cross_entropy_mean(rbf_forward(net, x), labels);
  const double after = train_rbf_coefficients(net, x, labels, 300, 0.5);
  CHECK(after < before);
  CHECK(after < 0.3);
}

TEST_CASE("taped forward agrees with plain forward, cnn included") {
  std::mt19937_64 rng(9);
  const ReluNetwork net = make_small_cnn({1, 8, 8}, 3, 42);
  const DenseTensor x = random_tensor({2, 1, 8, 8}, rng, 0, 1);
  const DenseTensor direct = forward(net, x);
  Tape tape;
  const int xid = tape.leaf(x, false);
  const TapedNet tn = taped_forward(tape, net, xid, true);
  CHECK((tape.value(tn.output).array() - direct.array()).abs().maxCoeff() ==
        0.0);
}
