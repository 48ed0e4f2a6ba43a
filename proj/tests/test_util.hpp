#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "parn/models.hpp"
#include "parn/random.hpp"
#include "parn/tape.hpp"
#include "parn/tensor.hpp"

namespace parn::testutil {

inline DenseTensor random_tensor(Shape shape, std::mt19937_64& rng,
                                 double lo = -1.0, double hi = 1.0) {
  DenseTensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

inline DenseTensor gaussian_tensor(Shape shape, std::mt19937_64& rng,
                                   double stddev = 1.0) {
  DenseTensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

/// Normalized gradient error used by every finite-difference check.
inline double grad_error(double autodiff, double numeric) {
  return std::abs(autodiff - numeric) /
         std::max({1.0, std::abs(autodiff), std::abs(numeric)});
}

/// Central finite differences against the autodiff gradient of a scalar
/// function of several tensor inputs.  `build` records the computation on
/// the given tape from leaf ids it creates for `inputs` and returns the
/// scalar output id; input leaf ids are appended to `leaf_ids`.
/// Returns the maximum normalized error over every coordinate.
inline double finite_difference_max_error(
    std::vector<DenseTensor> inputs,
    const std::function<int(Tape&, const std::vector<int>&)>& build,
    double h = 1e-5) {
  Tape tape;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const DenseTensor& x : inputs) ids.push_back(tape.leaf(x, true));
  const int out = build(tape, ids);
  tape.backward(out, DenseTensor::scalar(1.0));

  auto value_at = [&](const std::vector<DenseTensor>& pointwise) {
    Tape t2;
    std::vector<int> ids2;
    for (const DenseTensor& x : pointwise) ids2.push_back(t2.leaf(x, false));
    return t2.value(build(t2, ids2))[0];
  };

  double worst = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    const DenseTensor& g = tape.grad(ids[which]);
    for (Index i = 0; i < inputs[which].size(); ++i) {
      std::vector<DenseTensor> plus = inputs, minus = inputs;
      plus[which][i] += h;
      minus[which][i] -= h;
      const double numeric = (value_at(plus) - value_at(minus)) / (2.0 * h);
      worst = std::max(worst, grad_error(g[i], numeric));
    }
  }
  return worst;
}

/// Random dense ReLU network whose pre-activations at `probe` points stay
/// clear of the kinks, so finite differences are trustworthy there.
inline ReluNetwork random_mlp_away_from_kinks(Shape input_shape,
                                              const std::vector<Index>& hidden,
                                              Index num_classes,
                                              std::mt19937_64& rng,
                                              std::vector<DenseTensor>& probes,
                                              Index n_probes, Index batch,
                                              double margin = 1e-3) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::uniform_int_distribution<std::uint64_t> seed_dist;
    ReluNetwork net = make_mlp(input_shape, hidden, num_classes, seed_dist(rng));
    std::vector<DenseTensor> candidate;
    bool ok = true;
    for (Index p = 0; p < n_probes && ok; ++p) {
      DenseTensor x =
          gaussian_tensor({batch, shape_size(input_shape)}, rng, 1.0);
      // forward manually, checking pre-activation margins
      DenseTensor cur = x;
      for (std::size_t li = 0; li + 1 < net.layers.size(); ++li) {
        cur = affine(cur, net.layers[li].W, net.layers[li].b);
        if (cur.array().abs().minCoeff() < margin) {
          ok = false;
          break;
        }
        cur = relu(cur, 0.0);
      }
      candidate.push_back(std::move(x));
    }
    if (ok) {
      probes = std::move(candidate);
      return net;
    }
  }
  throw std::runtime_error("could not find kink-free configuration");
}

}  // namespace parn::testutil
