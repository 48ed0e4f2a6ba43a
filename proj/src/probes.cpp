#include "parn/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "parn/random.hpp"

namespace parn {

namespace {

double confidence_at(const ReluNetwork& net, const Eigen::VectorXd& point,
                     int* predicted = nullptr) {
  DenseTensor x(Shape{1, point.size()});
  x.vector() = point;
  const DenseTensor logits = forward(net, x);
  if (predicted) *predicted = argmax_rows(logits)[0];
  return max_confidence_rows(logits)[0];
}

}  // namespace

AlphaScalingResult alpha_scaling_search(const ReluNetwork& net,
                                        const Eigen::VectorXd& x,
                                        double target_conf, double alpha_max,
                                        int direction_id) {
  validate(net);
  if (x.norm() == 0.0) {
    throw ValidationError("alpha_scaling_search: zero direction");
  }
  const double uniform = 1.0 / static_cast<double>(net.num_classes);
  if (target_conf <= uniform || target_conf >= 1.0) {
    throw ValidationError("alpha_scaling_search: target must lie in (1/K, 1)");
  }
  if (alpha_max <= 1.0) {
    throw ValidationError("alpha_scaling_search: alpha_max must exceed 1");
  }

  AlphaScalingResult result;
  result.direction_id = direction_id;

  double hi = 1.0;
  double conf_hi = confidence_at(net, x);
  if (conf_hi < target_conf) {
    double lo = 1.0;
    bool found = false;
    while (hi < alpha_max) {
      hi = std::min(hi * 2.0, alpha_max);
      conf_hi = confidence_at(net, (hi * x).eval());
      if (conf_hi >= target_conf) {
        found = true;
        break;
      }
      lo = hi;
    }
    if (!found) {
      result.confidence = conf_hi;
      result.dominant_class = [&] {
        int cls = 0;
        confidence_at(net, (hi * x).eval(), &cls);
        return cls;
      }();
      if (dense_only(net)) {
        result.region_stabilized = stabilize_ray(net, x, alpha_max).stabilized;
      }
      return result;
    }
    while (hi - lo > 1e-3 * lo) {
      const double mid = 0.5 * (lo + hi);
      if (confidence_at(net, (mid * x).eval()) >= target_conf) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    conf_hi = confidence_at(net, (hi * x).eval());
  }
  result.alpha = hi;
  result.confidence = conf_hi;
  confidence_at(net, (hi * x).eval(), &result.dominant_class);
  if (dense_only(net)) {
    result.region_stabilized = stabilize_ray(net, x, alpha_max).stabilized;
  }
  return result;
}

DominantRow dominant_row(const RowMatrixXd& V, const Eigen::VectorXd& x) {
  if (V.rows() < 1 || V.cols() != x.size()) {
    throw DimensionError("dominant_row: V is " + std::to_string(V.rows()) +
                         "x" + std::to_string(V.cols()) + ", x has " +
                         std::to_string(x.size()) + " entries");
  }
  const Eigen::VectorXd inner = V * x;
  DominantRow out;
  for (Index k = 1; k < inner.size(); ++k) {
    if (inner[k] > inner[out.k_star]) out.k_star = static_cast<int>(k);
  }
  double runner_up = -std::numeric_limits<double>::infinity();
  for (Index k = 0; k < inner.size(); ++k) {
    if (k != static_cast<Index>(out.k_star)) {
      runner_up = std::max(runner_up, inner[k]);
    }
  }
  out.margin = inner.size() > 1 ? inner[out.k_star] - runner_up : 0.0;
  out.unique = inner.size() > 1 && out.margin > 1e-12;
  return out;
}

std::vector<std::pair<double, double>> asymptotic_confidence(
    const ReluNetwork& net, const Eigen::VectorXd& x,
    const std::vector<double>& alphas) {
  if (x.norm() == 0.0) {
    throw ValidationError("asymptotic_confidence: zero direction");
  }
  std::vector<std::pair<double, double>> series;
  series.reserve(alphas.size());
  for (double a : alphas) {
    series.emplace_back(a, confidence_at(net, (a * x).eval()));
  }
  return series;
}

double projected_overconfidence(const ReluNetwork& net,
                                const DenseTensor& noise_batch, double alpha,
                                double conf_threshold) {
  if (alpha < 1.0) {
    throw ValidationError("projected_overconfidence: alpha must be >= 1");
  }
  DenseTensor clamped(noise_batch.shape(),
                      (noise_batch.array() * alpha).max(0.0).min(1.0));
  const Eigen::VectorXd conf = max_confidence_rows(forward(net, clamped));
  Index over = 0;
  for (Index i = 0; i < conf.size(); ++i) {
    if (conf[i] > conf_threshold) ++over;
  }
  return static_cast<double>(over) / static_cast<double>(conf.size());
}

double rbf_uniform_radius(const RbfNetwork& net, double epsilon) {
  validate(net);
  if (epsilon <= 0.0) {
    throw ValidationError("rbf_uniform_radius: epsilon must be positive");
  }
  auto coef = net.coefficients.matrix();
  const Index K = coef.rows();
  double alpha_coef = 0.0;
  for (Index r = 0; r < K; ++r) {
    for (Index k = 0; k < K; ++k) {
      alpha_coef =
          std::max(alpha_coef, (coef.row(r) - coef.row(k)).cwiseAbs().sum());
    }
  }
  const double denom = std::log1p(static_cast<double>(K) * epsilon);
  if (alpha_coef <= denom) return 0.0;
  return std::sqrt(std::log(alpha_coef / denom) / net.gamma);
}

RbfUniformCheck verify_rbf_uniform(const RbfNetwork& net,
                                   const Eigen::VectorXd& x, double epsilon) {
  validate(net);
  if (epsilon <= 0.0) {
    throw ValidationError("verify_rbf_uniform: epsilon must be positive");
  }
  RbfUniformCheck check;
  auto centers = net.centers.matrix();
  check.r_min = std::numeric_limits<double>::infinity();
  for (Index l = 0; l < centers.rows(); ++l) {
    check.r_min =
        std::min(check.r_min, (x.transpose() - centers.row(l)).norm());
  }
  check.applicable = check.r_min >= rbf_uniform_radius(net, epsilon);

  DenseTensor input(Shape{1, x.size()});
  input.vector() = x;
  const DenseTensor probs = softmax(rbf_forward(net, input));
  const double uniform = 1.0 / static_cast<double>(net.coefficients.dim(0));
  check.within_band = true;
  for (Index k = 0; k < probs.dim(1); ++k) {
    if (std::abs(probs(0, k) - uniform) > epsilon) {
      check.within_band = false;
      break;
    }
  }
  return check;
}

RbfBoundCheck check_rbf_bound(const RbfNetwork& net, const Eigen::VectorXd& x,
                              double epsilon) {
  RbfBoundCheck out;
  out.epsilon = epsilon;
  out.r_threshold = rbf_uniform_radius(net, epsilon);
  auto coef = net.coefficients.matrix();
  for (Index r = 0; r < coef.rows(); ++r) {
    for (Index k = 0; k < coef.rows(); ++k) {
      out.alpha_coef =
          std::max(out.alpha_coef, (coef.row(r) - coef.row(k)).cwiseAbs().sum());
    }
  }
  const RbfUniformCheck check = verify_rbf_uniform(net, x, epsilon);
  out.r_min = check.r_min;
  // One-directional claim: vacuously true below the radius.
  out.holds = !check.applicable || check.within_band;
  return out;
}

AlphaProbeSummary run_alpha_probe(const ReluNetwork& net, Index n_directions,
                                  double target_conf, double alpha_max,
                                  double conf_threshold, std::uint64_t seed) {
  validate(net);
  if (n_directions < 1) {
    throw ValidationError("run_alpha_probe: need at least one direction");
  }
  const Index d = shape_size(net.input_shape);
  AlphaProbeSummary summary;
  summary.results.reserve(static_cast<std::size_t>(n_directions));
  std::vector<double> alphas;
  Index overconfident = 0;
  for (Index i = 0; i < n_directions; ++i) {
    std::mt19937_64 rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Eigen::VectorXd x(d);
    for (Index j = 0; j < d; ++j) x[j] = uni(rng);
    AlphaScalingResult r = alpha_scaling_search(net, x, target_conf, alpha_max,
                                                static_cast<int>(i));
    if (r.alpha) {
      alphas.push_back(*r.alpha);
      DenseTensor batch(Shape{1, d});
      batch.vector() = x;
      if (projected_overconfidence(net, batch, *r.alpha, conf_threshold) > 0.0) {
        ++overconfident;
      }
    }
    summary.results.push_back(std::move(r));
  }
  summary.success_rate = static_cast<double>(alphas.size()) /
                         static_cast<double>(n_directions);
  summary.projected_overconf_fraction =
      static_cast<double>(overconfident) / static_cast<double>(n_directions);
  if (!alphas.empty()) {
    std::sort(alphas.begin(), alphas.end());
    const std::size_t mid = alphas.size() / 2;
    summary.median_alpha = alphas.size() % 2
                               ? alphas[mid]
                               : 0.5 * (alphas[mid - 1] + alphas[mid]);
  } else {
    summary.median_alpha = std::numeric_limits<double>::quiet_NaN();
  }
  return summary;
}

}  // namespace parn
