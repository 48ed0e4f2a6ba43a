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

// W=[[1]], b=[-0.5], one hidden unit, identity-ish output layer
ReluNetwork one_unit_net() {
  ReluNetwork net;
  net.input_shape = {1};
  net.num_classes = 2;
  Layer l1;
  l1.W = DenseTensor::from_rows({{1.0}});
  l1.b = DenseTensor::from_vector(Eigen::VectorXd::Constant(1, -0.5));
  l1.activation = Activation::Relu;
  net.layers.push_back(std::move(l1));
  Layer l2;
  l2.W = DenseTensor::from_rows({{1.0}, {-1.0}});
  l2.b = DenseTensor({2});
  net.layers.push_back(std::move(l2));
  return net;
}

ReluNetwork linear_net(std::mt19937_64& rng) {
  ReluNetwork net;
  net.input_shape = {2};
  net.num_classes = 3;
  Layer l;
  l.W = random_tensor({3, 2}, rng);
  l.b = random_tensor({3}, rng);
  net.layers.push_back(std::move(l));
  return net;
}

Eigen::VectorXd forward_point(const ReluNetwork& net, const Eigen::VectorXd& x) {
  DenseTensor in({1, x.size()});
  in.vector() = x;
  const DenseTensor out = forward(net, in);
  return out.matrix().row(0).transpose();
}

}  // namespace

TEST_CASE("activation pattern signs and boundary zeros") {
  ReluNetwork net = one_unit_net();

  Eigen::VectorXd x(1);
  x[0] = 1.0;
  CHECK(activation_pattern(net, x).layers[0][0] == 1);
  x[0] = 0.2;
  CHECK(activation_pattern(net, x).layers[0][0] == -1);
  x[0] = 0.5;  // exactly on the boundary
  CHECK(activation_pattern(net, x).layers[0][0] == 0);

  // zero input, zero biases -> all zeros
  ReluNetwork zeros = net;
  zeros.layers[0].b = DenseTensor({1});
  x[0] = 0.0;
  const ActivationPattern p = activation_pattern(zeros, x);
  CHECK(p.total_units() == 1);
  CHECK(p.layers[0][0] == 0);
}

TEST_CASE("pattern matches signs of stored pre-activations") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::uint64_t> seeds;
    const ReluNetwork net = make_mlp({5}, {8, 6}, 3, seeds(rng));
    const Eigen::VectorXd x = gaussian_tensor({5}, rng).vector();
    const ActivationPattern pat = activation_pattern(net, x);

    // recompute pre-activations with the plain ops
    Eigen::VectorXd g = x;
    for (std::size_t li = 0; li + 1 < net.layers.size(); ++li) {
      const Eigen::VectorXd f = net.layers[li].W.matrix() * g +
                                net.layers[li].b.vector();
      for (Index i = 0; i < f.size(); ++i) {
        const int expect = f[i] > 0 ? 1 : (f[i] < 0 ? -1 : 0);
        CHECK(pat.layers[li][static_cast<std::size_t>(i)] == expect);
      }
      g = f.cwiseMax(0.0);
    }
  }
}

TEST_CASE("pattern requires dense-only relu nets") {
  const ReluNetwork cnn = make_small_cnn({1, 8, 8}, 2, 1);
  Eigen::VectorXd x(64);
  x.setZero();
  CHECK_THROWS_AS(activation_pattern(cnn, x), UnsupportedArchitectureError);
}

TEST_CASE("local affine map of a linear net is (W, b)") {
  std::mt19937_64 rng(22);
  const ReluNetwork net = linear_net(rng);
  Eigen::VectorXd x(2);
  x << 0.3, -0.7;
  const LocalAffineMap m = local_affine_map(net, x);
  CHECK((m.V - net.layers[0].W.matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.a - net.layers[0].b.vector()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("all-positive pre-activations give the plain weight product") {
  ReluNetwork net;
  net.input_shape = {2};
  net.num_classes = 2;
  Layer l1;
  l1.W = DenseTensor::from_rows({{0.5, 0.25}, {0.25, 0.5}});
  l1.b = DenseTensor::from_vector(Eigen::Vector2d(5.0, 5.0));
  l1.activation = Activation::Relu;
  net.layers.push_back(std::move(l1));
  Layer l2;
  l2.W = DenseTensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  l2.b = DenseTensor({2});
  net.layers.push_back(std::move(l2));

  Eigen::VectorXd x(2);
  x << 1.0, 1.0;  // both units active thanks to the +5 bias
  const LocalAffineMap m = local_affine_map(net, x);
  const RowMatrixXd product =
      net.layers[1].W.matrix() * net.layers[0].W.matrix();
  CHECK((m.V - product).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("affine map reproduces forward within 1e-8 relative") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<std::uint64_t> seeds;
    const ReluNetwork net = make_mlp({6}, {12, 10, 8}, 4, seeds(rng));
    for (int p = 0; p < 100; ++p) {
      const Eigen::VectorXd x = gaussian_tensor({6}, rng).vector();
      const LocalAffineMap m = local_affine_map(net, x);
      const Eigen::VectorXd direct = forward_point(net, x);
      const Eigen::VectorXd mapped = m.V * x + m.a;
      for (Index k = 0; k < direct.size(); ++k) {
        CHECK(std::abs(direct[k] - mapped[k]) / (1.0 + std::abs(direct[k])) <
              1e-8);
      }
    }
  }
}

TEST_CASE("affine map handles leaky activations") {
  std::mt19937_64 rng(24);
  const ReluNetwork net = make_mlp({4}, {9, 7}, 3, 555, 0.01);
  for (int p = 0; p < 50; ++p) {
    const Eigen::VectorXd x = gaussian_tensor({4}, rng).vector();
    const LocalAffineMap m = local_affine_map(net, x);
    const Eigen::VectorXd direct = forward_point(net, x);
    const Eigen::VectorXd mapped = m.V * x + m.a;
    CHECK((direct - mapped).cwiseAbs().maxCoeff() /
              (1.0 + direct.cwiseAbs().maxCoeff()) <
          1e-8);
  }
}

TEST_CASE("layer affine maps include every pre-activation") {
  std::mt19937_64 rng(25);
  const ReluNetwork net = make_mlp({3}, {5, 4}, 2, 777);
  const Eigen::VectorXd x = gaussian_tensor({3}, rng).vector();
  const auto maps = layer_affine_maps(net, x);
  REQUIRE(maps.size() == 3);  // two hidden pre-activations + output
  CHECK(maps[0].V.rows() == 5);
  CHECK(maps[1].V.rows() == 4);
  CHECK(maps[2].V.rows() == 2);
  // first layer's map is exactly (W1, b1)
  CHECK((maps[0].V - net.layers[0].W.matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one-unit halfspace is x >= 0.5 for anchor x=1") {
  const ReluNetwork net = one_unit_net();
  Eigen::VectorXd x(1);
  x[0] = 1.0;
  const RegionDescription region = region_halfspaces(net, x);
  REQUIRE(region.halfspaces.size() == 1);
  // normal*z + offset >= 0 must encode z >= 0.5
  const Halfspace& h = region.halfspaces[0];
  CHECK(h.normal[0] == doctest::Approx(1.0));
  CHECK(h.offset == doctest::Approx(-0.5));
  CHECK(region.min_slack(x) >= -1e-9);

  // anchor on the inactive side
  x[0] = 0.2;
  const RegionDescription neg = region_halfspaces(net, x);
  CHECK(neg.halfspaces[0].normal[0] == doctest::Approx(-1.0));
  CHECK(neg.min_slack(x) >= -1e-9);
}

TEST_CASE("region interior shares the anchor pattern, exterior differs") {
  std::mt19937_64 rng(26);
  std::uniform_int_distribution<std::uint64_t> seeds;
  int interior_checked = 0, exterior_checked = 0;
  for (int trial = 0; trial < 6; ++trial) {
    const ReluNetwork net = make_mlp({4}, {10, 8}, 3, seeds(rng));
    const Eigen::VectorXd anchor = gaussian_tensor({4}, rng).vector();
    const RegionDescription region = region_halfspaces(net, anchor);
    REQUIRE(region.halfspaces.size() == 18);  // one per hidden unit
    CHECK(region.min_slack(anchor) >= -1e-9);
    const ActivationPattern anchor_pattern = activation_pattern(net, anchor);

    std::normal_distribution<double> step(0.0, 0.3);
    for (int s = 0; s < 2000; ++s) {
      Eigen::VectorXd z = anchor;
      for (Index i = 0; i < 4; ++i) z[i] += step(rng);
      const double slack = region.min_slack(z);
      if (slack > 1e-6) {
        ++interior_checked;
        CHECK(activation_pattern(net, z) == anchor_pattern);
      } else if (slack < -1e-6) {
        ++exterior_checked;
        CHECK(!(activation_pattern(net, z) == anchor_pattern));
      }
    }
  }
  CHECK(interior_checked >= 1000);
  CHECK(exterior_checked >= 1000);
}

TEST_CASE("piecewise linearity inside a region") {
  std::mt19937_64 rng(27);
  std::uniform_int_distribution<std::uint64_t> seeds;
  int checked = 0;
  for (int trial = 0; trial < 400 && checked < 50; ++trial) {
    const ReluNetwork net = make_mlp({3}, {8, 6}, 3, seeds(rng));
    const Eigen::VectorXd z1 = gaussian_tensor({3}, rng).vector();
    Eigen::VectorXd z2 = z1;
    std::normal_distribution<double> step(0.0, 0.2);
    for (Index i = 0; i < 3; ++i) z2[i] += step(rng);
    if (!(activation_pattern(net, z1) == activation_pattern(net, z2))) {
      continue;
    }
    const RegionDescription region = region_halfspaces(net, z1);
    if (region.min_slack(z1) < 1e-6 || region.min_slack(z2) < 1e-6) continue;
    ++checked;
    const Eigen::VectorXd f1 = forward_point(net, z1);
    const Eigen::VectorXd f2 = forward_point(net, z2);
    for (double t : {0.25, 0.5, 0.75}) {
      const Eigen::VectorXd mid = forward_point(net, (t * z1 + (1 - t) * z2).eval());
      const Eigen::VectorXd expect = t * f1 + (1 - t) * f2;
      CHECK((mid - expect).cwiseAbs().maxCoeff() /
                (1.0 + expect.cwiseAbs().maxCoeff()) <
            1e-8);
    }
  }
  CHECK(checked >= 50);
}

TEST_CASE("ray stabilization: linear net stabilizes at one") {
  std::mt19937_64 rng(28);
  const ReluNetwork net = linear_net(rng);
  Eigen::VectorXd x(2);
  x << 0.4, -0.9;
  const RayStabilization r = stabilize_ray(net, x);
  CHECK(r.stabilized);
  CHECK(r.alpha_star == 1.0);
}

TEST_CASE("ray stabilization on the one-unit net") {
  const ReluNetwork net = one_unit_net();
  Eigen::VectorXd x(1);
  x[0] = 1.0;
  // pattern is constant (+1) for beta >= 0.5, so doubling accepts alpha=1
  const RayStabilization r = stabilize_ray(net, x);
  CHECK(r.stabilized);
  CHECK(r.alpha_star == 1.0);
  CHECK(r.pattern.layers[0][0] == 1);
}

TEST_CASE("ray stabilization rejects the zero direction") {
  std::mt19937_64 rng(29);
  const ReluNetwork net = linear_net(rng);
  Eigen::VectorXd zero(2);
  zero.setZero();
  CHECK_THROWS_AS(stabilize_ray(net, zero), ValidationError);
  Eigen::VectorXd x(2);
  x << 1, 1;
  CHECK_THROWS_AS(stabilize_ray(net, x, 1.0), ValidationError);
}

TEST_CASE("random rays stabilize within the default budget") {
  std::mt19937_64 rng(30);
  std::uniform_int_distribution<std::uint64_t> seeds;
  int failures = 0;
  const int nets = 5, rays = 40;
  for (int n = 0; n < nets; ++n) {
    const ReluNetwork net = make_mlp({4}, {10, 6}, 3, seeds(rng));
    for (int r = 0; r < rays; ++r) {
      const Eigen::VectorXd x = gaussian_tensor({4}, rng).vector();
      const RayStabilization stab = stabilize_ray(net, x);
      if (!stab.stabilized) {
        ++failures;
        continue;
      }
      // stabilization witness: 32 geometric betas in [alpha*, 2^40] share the pattern
      const double hi = 1099511627776.0;
      for (int s = 0; s < 32; ++s) {
        const double beta =
            stab.alpha_star *
            std::pow(hi / stab.alpha_star, static_cast<double>(s) / 31.0);
        CHECK(activation_pattern(net, (beta * x).eval()) == stab.pattern);
      }
    }
  }
  CHECK(failures <= nets * rays / 100);
}

TEST_CASE("region raster of a linear net has one region") {
  std::mt19937_64 rng(31);
  const ReluNetwork net = linear_net(rng);
  const RegionRaster raster = enumerate_regions_2d(net, 0, 1, 0, 1, 16);
  CHECK(raster.region_count == 1);
  for (int id : raster.region_ids) CHECK(id == 0);
}

TEST_CASE("one-hidden-layer region count respects the arrangement bound") {
  std::mt19937_64 rng(32);
  std::uniform_int_distribution<std::uint64_t> seeds;
  for (int trial = 0; trial < 5; ++trial) {
    const Index n1 = 6;
    const ReluNetwork net = make_mlp({2}, {n1}, 2, seeds(rng));
    const RegionRaster raster = enumerate_regions_2d(net, -2, 2, -2, 2, 64);
    const int bound = 1 + static_cast<int>(n1) +
                      static_cast<int>(n1 * (n1 - 1) / 2);
    CHECK(raster.region_count <= bound);

    // refinement can only reveal regions
    const RegionRaster coarse = enumerate_regions_2d(net, -2, 2, -2, 2, 16);
    CHECK(coarse.region_count <= raster.region_count);
  }
}

TEST_CASE("region raster validates its inputs") {
  std::mt19937_64 rng(33);
  const ReluNetwork net3 = make_mlp({3}, {4}, 2, 1);
  CHECK_THROWS_AS(enumerate_regions_2d(net3, 0, 1, 0, 1, 8), ValidationError);
  const ReluNetwork net2 = make_mlp({2}, {4}, 2, 1);
  CHECK_THROWS_AS(enumerate_regions_2d(net2, 1, 0, 0, 1, 8), ValidationError);
  CHECK_THROWS_AS(enumerate_regions_2d(net2, 0, 1, 0, 1, 0), ValidationError);
}
