#pragma once

#include <cstdint>
#include <vector>

#include "parn/models.hpp"
#include "parn/tensor.hpp"

namespace parn {

/// Signs of the pre-activations of every hidden unit at a point: +1 above
/// zero, -1 below, 0 exactly on a region boundary.  Two points share a
/// linear region exactly when their patterns agree.
struct ActivationPattern {
  std::vector<std::vector<std::int8_t>> layers;

  Index total_units() const;
  bool operator==(const ActivationPattern& other) const = default;
  /// Packed form usable as a hash/map key.
  std::string key() const;
};

/// The affine map f(z) = V z + a the network computes on the region that
/// generated it.
struct LocalAffineMap {
  RowMatrixXd V;      // [outputs x d]
  Eigen::VectorXd a;  // [outputs]
};

struct Halfspace {
  Eigen::VectorXd normal;
  double offset = 0.0;  // constraint: normal . z + offset >= 0
  int layer = 0;
  int unit = 0;
};

/// The linear region around an anchor as an intersection of one halfspace
/// per hidden unit.
struct RegionDescription {
  std::vector<Halfspace> halfspaces;
  Eigen::VectorXd anchor;

  double slack(const Eigen::VectorXd& z, std::size_t i) const {
    const Halfspace& h = halfspaces[i];
    return h.normal.dot(z) + h.offset;
  }
  double min_slack(const Eigen::VectorXd& z) const;
};

/// Requires a dense-only network; throws UnsupportedArchitectureError
/// otherwise.
ActivationPattern activation_pattern(const ReluNetwork& net,
                                     const Eigen::VectorXd& x);

/// Exact V, a of the output layer at x.  Pre-activations exactly at zero are
/// treated as inactive, which picks a deterministic side on boundaries.
LocalAffineMap local_affine_map(const ReluNetwork& net,
                                const Eigen::VectorXd& x);

/// V^(k), a^(k) for every layer's pre-activation, last entry is the output.
std::vector<LocalAffineMap> layer_affine_maps(const ReluNetwork& net,
                                              const Eigen::VectorXd& x);

RegionDescription region_halfspaces(const ReluNetwork& net,
                                    const Eigen::VectorXd& x);

struct RayStabilization {
  bool stabilized = false;
  double alpha_star = 0.0;
  ActivationPattern pattern;
};

/// Searches along beta*x for the scale from which the activation pattern no
/// longer changes: doubling candidates 1,2,4,...  up to beta_max, each
/// verified against a 32-point geometric sweep reaching beta_max.  Not
/// finding one inside the budget is reported, not an error.
RayStabilization stabilize_ray(const ReluNetwork& net,
                               const Eigen::VectorXd& direction,
                               double beta_max = 1099511627776.0 /* 2^40 */);

struct RegionRaster {
  Index resolution = 0;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  std::vector<int> region_ids;  // row-major, resolution x resolution
  int region_count = 0;

  double cell_x(Index i) const;
  double cell_y(Index j) const;
};

/// Labels each grid-cell center of the bounding box by its activation
/// pattern; ids are assigned in scan order of first appearance.  d must be 2.
RegionRaster enumerate_regions_2d(const ReluNetwork& net, double x_min,
                                  double x_max, double y_min, double y_max,
                                  Index resolution);

}  // namespace parn
