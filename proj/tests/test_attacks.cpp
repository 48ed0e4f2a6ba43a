#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "parn/attacks.hpp"
#include "parn/io.hpp"
#include "parn/models.hpp"
#include "parn/training.hpp"

#include "test_util.hpp"

using namespace parn;
using namespace parn::testutil;

namespace {

ReluNetwork zero_net(Index d, Index k) {
  ReluNetwork net;
  net.input_shape = {d};
  net.num_classes = k;
  Layer l1;
  l1.W = DenseTensor({6, d});
  l1.b = DenseTensor({6});
  l1.activation = Activation::Relu;
  net.layers.push_back(std::move(l1));
  Layer l2;
  l2.W = DenseTensor({k, 6});
  l2.b = DenseTensor({k});
  net.layers.push_back(std::move(l2));
  return net;
}

double linf(const DenseTensor& a, const DenseTensor& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

}  // namespace

TEST_CASE("pgd config validation") {
  PgdConfig cfg;
  cfg.epsilon = -0.1;
  CHECK_THROWS_AS(validate(cfg), ValidationError);
  cfg.epsilon = 0.1;
  cfg.step_size = 0.3;  // > 2*eps
  CHECK_THROWS_AS(validate(cfg), ValidationError);
  cfg.step_size = 0.05;
  cfg.iterations = 0;
  CHECK_THROWS_AS(validate(cfg), ValidationError);
  cfg.iterations = 10;
  cfg.restarts = 0;
  CHECK_THROWS_AS(validate(cfg), ValidationError);
}

TEST_CASE("flat landscape: zero net leaves the input and objective alone") {
  const ReluNetwork net = zero_net(5, 4);
  std::mt19937_64 rng(1);
  const DenseTensor z = random_tensor({3, 5}, rng, 0.2, 0.8);
  PgdConfig cfg;
  cfg.iterations = 15;
  cfg.restarts = 3;
  cfg.seed = 11;
  const AttackResult r = pgd_max_confidence(net, z, cfg);
  // zero gradients: sign(0)=0 keeps restart 0 glued to z, and every
  // objective ties at -ln K so the first iterate stays the best
  CHECK(linf(r.points, z) == 0.0);
  for (Index i = 0; i < 3; ++i) {
    CHECK(r.objectives[i] == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
  }
}

TEST_CASE("returned objective never falls below the start point") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<std::uint64_t> seeds;
    const ReluNetwork net = make_mlp({6}, {12}, 3, seeds(rng));
    const DenseTensor z = random_tensor({4, 6}, rng, 0, 1);
    PgdConfig cfg;
    cfg.iterations = 10;
    cfg.seed = trial;
    const AttackResult r = pgd_max_confidence(net, z, cfg);
    const Eigen::VectorXd at_start = max_log_confidence_rows(forward(net, z));
    for (Index i = 0; i < 4; ++i) {
      CHECK(r.objectives[i] >= at_start[i] - 1e-15);
    }
  }
}

TEST_CASE("attack raises confidence on nearly every sample of a random net") {
  std::mt19937_64 rng(3);
  const ReluNetwork net = make_mlp({10}, {32, 16}, 4, 2025);
  const DenseTensor z = random_tensor({50, 10}, rng, 0, 1);
  PgdConfig cfg;
  cfg.iterations = 40;
  const AttackResult r = pgd_max_confidence(net, z, cfg);
  const Eigen::VectorXd before = max_log_confidence_rows(forward(net, z));
  int strictly_up = 0;
  for (Index i = 0; i < 50; ++i) {
    if (r.objectives[i] > before[i]) ++strictly_up;
  }
  CHECK(r.objectives.mean() >= before.mean());
  CHECK(strictly_up >= 45);
}

TEST_CASE("feasibility: ball and box constraints hold exactly") {
  std::mt19937_64 rng(4);
  const ReluNetwork net = make_mlp({8}, {16}, 3, 77);
  const DenseTensor z = random_tensor({20, 8}, rng, 0, 1);
  for (int restarts : {1, 4}) {
    PgdConfig cfg;
    cfg.epsilon = 0.3;
    cfg.iterations = 25;
    cfg.restarts = restarts;
    cfg.seed = 5;
    const AttackResult r = pgd_max_confidence(net, z, cfg);
    CHECK(linf(r.points, z) <= cfg.epsilon);
    CHECK(r.points.array().minCoeff() >= 0.0);
    CHECK(r.points.array().maxCoeff() <= 1.0);
  }
}

TEST_CASE("epsilon zero degenerates to the input") {
  std::mt19937_64 rng(5);
  const ReluNetwork net = make_mlp({6}, {10}, 3, 31);
  const DenseTensor x = random_tensor({5, 6}, rng, 0, 1);
  PgdConfig cfg;
  cfg.epsilon = 0.0;
  cfg.iterations = 12;
  cfg.restarts = 2;
  const AttackResult r = pgd_adversarial_sample(net, x, {0, 1, 2, 0, 1}, cfg);
  CHECK(linf(r.points, x) == 0.0);
}

TEST_CASE("best objective is monotone in iterations and restarts") {
  std::mt19937_64 rng(6);
  const ReluNetwork net = make_mlp({8}, {20}, 4, 13);
  const DenseTensor z = random_tensor({6, 8}, rng, 0, 1);

  Eigen::VectorXd prev;
  for (int iters : {1, 5, 10, 40}) {
    PgdConfig cfg;
    cfg.iterations = iters;
    cfg.seed = 9;
    const AttackResult r = pgd_max_confidence(net, z, cfg);
    if (prev.size()) {
      for (Index i = 0; i < 6; ++i) CHECK(r.objectives[i] >= prev[i]);
    }
    prev = r.objectives;
  }

  prev.resize(0);
  for (int restarts : {1, 2, 4}) {
    PgdConfig cfg;
    cfg.iterations = 10;
    cfg.restarts = restarts;
    cfg.seed = 9;
    const AttackResult r = pgd_max_confidence(net, z, cfg);
    if (prev.size()) {
      for (Index i = 0; i < 6; ++i) CHECK(r.objectives[i] >= prev[i]);
    }
    prev = r.objectives;
  }
}

TEST_CASE("attacks are bit-deterministic given the seed") {
  std::mt19937_64 rng(7);
  const ReluNetwork net = make_mlp({8}, {20}, 4, 17);
  const DenseTensor z = random_tensor({6, 8}, rng, 0, 1);
  PgdConfig cfg;
  cfg.iterations = 15;
  cfg.restarts = 3;
  cfg.seed = 123;
  const AttackResult a = pgd_max_confidence(net, z, cfg);
  const AttackResult b = pgd_max_confidence(net, z, cfg);
  CHECK(std::memcmp(a.points.data(), b.points.data(),
                    sizeof(double) * static_cast<std::size_t>(a.points.size())) ==
        0);
  CHECK(a.objectives == b.objectives);
}

TEST_CASE("untargeted attack collapses the accuracy of a plain model") {
  // end-to-end run: train briefly, then attack the test set at eps 0.3
  LabeledDataset tr = synth_digits(2000, 50);
  LabeledDataset te = synth_digits(300, 51);
  TrainConfig cfg;
  cfg.mode = TrainMode::Plain;
  cfg.epochs = 3;
  cfg.batch_size = 128;
  cfg.seed = 1;
  cfg.lr_drop_epochs = {};
  cfg.noise_eval_count = 0;
  ReluNetwork net = make_mlp({784}, {64}, 10, 9, 0.0, 0.25);
  train(net, tr, te, cfg);
  const double clean_err = classification_error(net, te.images, te.labels);
  REQUIRE(clean_err < 0.2);

  PgdConfig attack;
  attack.epsilon = 0.3;
  attack.step_size = 0.0075;
  attack.iterations = 80;
  attack.seed = 2;
  const AttackResult r = pgd_adversarial_sample(net, te.images, te.labels, attack);
  const double adv_err = classification_error(net, r.points, te.labels);
  CHECK(adv_err >= clean_err + 0.30);
}

TEST_CASE("untargeted attack raises the true-class cross entropy") {
  std::mt19937_64 rng(8);
  const ReluNetwork net = make_mlp({8}, {24}, 3, 41);
  const DenseTensor x = random_tensor({30, 8}, rng, 0, 1);
  std::vector<int> labels;
  for (Index i = 0; i < 30; ++i) labels.push_back(static_cast<int>(i % 3));
  PgdConfig cfg;
  cfg.iterations = 30;
  const AttackResult r = pgd_adversarial_sample(net, x, labels, cfg);

  const Eigen::VectorXd lse = logsumexp_rows(forward(net, x));
  const DenseTensor logits = forward(net, x);
  int up = 0;
  for (Index i = 0; i < 30; ++i) {
    const double before = lse[i] - logits(i, labels[static_cast<std::size_t>(i)]);
    if (r.objectives[i] > before) ++up;
  }
  CHECK(up >= 27);

  CHECK_THROWS_AS(pgd_adversarial_sample(net, x, {9}, cfg), ValidationError);
  std::vector<int> bad(30, 5);
  CHECK_THROWS_AS(pgd_adversarial_sample(net, x, bad, cfg), ValidationError);
}
