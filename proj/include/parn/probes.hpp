#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "parn/affine_geometry.hpp"
#include "parn/models.hpp"

namespace parn {

struct AlphaScalingResult {
  int direction_id = 0;
  std::optional<double> alpha;  // smallest scale reaching target confidence
  double confidence = 0.0;      // confidence at that scale (or at alpha_max)
  bool region_stabilized = false;
  int dominant_class = 0;
};

/// Doubles alpha from 1 until confidence(net, alpha*x) reaches target_conf,
/// then bisects to three significant digits.  Confidence is evaluated in log
/// space so arbitrarily large scales stay finite.  Returns no alpha when the
/// search passes alpha_max.
AlphaScalingResult alpha_scaling_search(const ReluNetwork& net,
                                        const Eigen::VectorXd& x,
                                        double target_conf, double alpha_max,
                                        int direction_id = 0);

struct DominantRow {
  int k_star = 0;      // argmax_k <v_k, x>, lowest index on ties
  bool unique = true;  // top two inner products more than 1e-12 apart
  double margin = 0.0;
};
DominantRow dominant_row(const RowMatrixXd& V, const Eigen::VectorXd& x);

/// Max confidence along alpha*x for each requested scale.
std::vector<std::pair<double, double>> asymptotic_confidence(
    const ReluNetwork& net, const Eigen::VectorXd& x,
    const std::vector<double>& alphas);

/// Fraction of noise samples whose confidence exceeds conf_threshold after
/// clamping alpha*x back into [0,1]^d coordinatewise.
double projected_overconfidence(const ReluNetwork& net,
                                const DenseTensor& noise_batch, double alpha,
                                double conf_threshold);

/// Radius beyond which every class confidence of the RBF net provably lies
/// within epsilon of 1/K; zero when the bound holds everywhere.
double rbf_uniform_radius(const RbfNetwork& net, double epsilon);

struct RbfUniformCheck {
  double r_min = 0.0;        // distance to the nearest center
  bool applicable = false;   // r_min >= radius for this epsilon
  bool within_band = false;  // all confidences in [1/K - eps, 1/K + eps]
};
RbfUniformCheck verify_rbf_uniform(const RbfNetwork& net,
                                   const Eigen::VectorXd& x, double epsilon);

struct RbfBoundCheck {
  double r_min = 0.0;
  double alpha_coef = 0.0;  // max_{r,k} sum_l |coef_rl - coef_kl|
  double epsilon = 0.0;
  double r_threshold = 0.0;
  bool holds = false;  // band membership when the bound applies
};
RbfBoundCheck check_rbf_bound(const RbfNetwork& net, const Eigen::VectorXd& x,
                              double epsilon);

struct AlphaProbeSummary {
  double median_alpha = 0.0;  // over successful directions
  double success_rate = 0.0;
  double projected_overconf_fraction = 0.0;
  std::vector<AlphaScalingResult> results;
};

/// Scaling probe over uniform-[0,1]^d random directions: per direction the
/// alpha search, and the fraction whose clamped alpha*x stays above 95%
/// confidence.  Deterministic given the seed.
AlphaProbeSummary run_alpha_probe(const ReluNetwork& net, Index n_directions,
                                  double target_conf, double alpha_max,
                                  double conf_threshold, std::uint64_t seed);

}  // namespace parn
