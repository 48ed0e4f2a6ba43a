#include "parn/affine_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

namespace parn {

Index ActivationPattern::total_units() const {
  Index n = 0;
  for (const auto& l : layers) n += static_cast<Index>(l.size());
  return n;
}

std::string ActivationPattern::key() const {
  std::string k;
  k.reserve(static_cast<std::size_t>(total_units()) + layers.size());
  for (const auto& l : layers) {
    for (std::int8_t s : l) k.push_back(static_cast<char>('1' + s));
    k.push_back('|');
  }
  return k;
}

double RegionDescription::min_slack(const Eigen::VectorXd& z) const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < halfspaces.size(); ++i) {
    m = std::min(m, slack(z, i));
  }
  return m;
}

namespace {

void require_dense(const ReluNetwork& net, const char* where) {
  if (!dense_only(net)) {
    throw UnsupportedArchitectureError(
        std::string(where) +
        ": exact affine extraction needs a dense-only network");
  }
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
    const Activation a = net.layers[i].activation;
    if (a == Activation::None) {
      throw UnsupportedArchitectureError(
          std::string(where) + ": hidden layer " + std::to_string(i) +
          " must use relu or leaky activation");
    }
  }
}

double slope_of(const Layer& l) {
  return l.activation == Activation::Leaky ? l.leaky_slope : 0.0;
}

/// Walks the layer stack at x accumulating the running affine form
/// (V, a) of each pre-activation and hands every hidden pre-activation
/// to the visitor together with that form.
template <typename Visit>
void walk_affine(const ReluNetwork& net, const Eigen::VectorXd& x,
                 Visit&& visit, RowMatrixXd* v_out, Eigen::VectorXd* a_out) {
  const Index d = x.size();
  if (d != shape_size(net.input_shape)) {
    throw DimensionError("point of dimension " + std::to_string(d) +
                         " for input_shape " + shape_string(net.input_shape));
  }
  RowMatrixXd V;          // running V of the current pre-activation
  Eigen::VectorXd a;      // running a
  Eigen::VectorXd g = x;  // post-activation value
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    auto W = l.W.matrix();
    auto b = l.b.vector();
    if (li == 0) {
      V = W;
      a = b;
    } else {
      V = (W * V).eval();
      a = (W * a + b).eval();
    }
    Eigen::VectorXd f = W * g + b;  // pre-activation at x
    if (li + 1 < net.layers.size()) {
      const double slope = slope_of(l);
      visit(static_cast<int>(li), f, V, a);
      // Fold the activation into the running form: rows of inactive units
      // are scaled by the activation's inactive slope (0 for plain ReLU).
      for (Index i = 0; i < f.size(); ++i) {
        const double s = f[i] > 0.0 ? 1.0 : slope;
        if (s != 1.0) {
          V.row(i) *= s;
          a[i] *= s;
        }
      }
      g.resize(f.size());
      for (Index i = 0; i < f.size(); ++i) {
        g[i] = f[i] > 0.0 ? f[i] : slope * f[i];
      }
    } else {
      g = f;
    }
  }
  if (v_out) *v_out = V;
  if (a_out) *a_out = a;
}

}  // namespace

ActivationPattern activation_pattern(const ReluNetwork& net,
                                     const Eigen::VectorXd& x) {
  require_dense(net, "activation_pattern");
  ActivationPattern p;
  walk_affine(
      net, x,
      [&](int, const Eigen::VectorXd& f, const RowMatrixXd&,
          const Eigen::VectorXd&) {
        std::vector<std::int8_t> signs(static_cast<std::size_t>(f.size()));
        for (Index i = 0; i < f.size(); ++i) {
          signs[static_cast<std::size_t>(i)] =
              f[i] > 0.0 ? 1 : (f[i] < 0.0 ? -1 : 0);
        }
        p.layers.push_back(std::move(signs));
      },
      nullptr, nullptr);
  return p;
}

LocalAffineMap local_affine_map(const ReluNetwork& net,
                                const Eigen::VectorXd& x) {
  require_dense(net, "local_affine_map");
  LocalAffineMap m;
  walk_affine(net, x,
              [](int, const Eigen::VectorXd&, const RowMatrixXd&,
                 const Eigen::VectorXd&) {},
              &m.V, &m.a);
  return m;
}

std::vector<LocalAffineMap> layer_affine_maps(const ReluNetwork& net,
                                              const Eigen::VectorXd& x) {
  require_dense(net, "layer_affine_maps");
  std::vector<LocalAffineMap> maps;
  LocalAffineMap out;
  walk_affine(net, x,
              [&](int, const Eigen::VectorXd&, const RowMatrixXd& V,
                  const Eigen::VectorXd& a) { maps.push_back({V, a}); },
              &out.V, &out.a);
  maps.push_back(std::move(out));
  return maps;
}

RegionDescription region_halfspaces(const ReluNetwork& net,
                                    const Eigen::VectorXd& x) {
  require_dense(net, "region_halfspaces");
  RegionDescription region;
  region.anchor = x;
  walk_affine(
      net, x,
      [&](int layer, const Eigen::VectorXd& f, const RowMatrixXd& V,
          const Eigen::VectorXd& a) {
        for (Index i = 0; i < f.size(); ++i) {
          // Exactly-zero pre-activations count as inactive (sign -1).
          const double delta = f[i] > 0.0 ? 1.0 : -1.0;
          Halfspace h;
          h.normal = delta * V.row(i).transpose();
          h.offset = delta * a[i];
          h.layer = layer;
          h.unit = static_cast<int>(i);
          region.halfspaces.push_back(std::move(h));
        }
      },
      nullptr, nullptr);
  return region;
}

RayStabilization stabilize_ray(const ReluNetwork& net,
                               const Eigen::VectorXd& direction,
                               double beta_max) {
  require_dense(net, "stabilize_ray");
  if (direction.norm() == 0.0) {
    throw ValidationError("stabilize_ray: zero direction");
  }
  if (beta_max <= 1.0) {
    throw ValidationError("stabilize_ray: beta_max must exceed 1");
  }
  std::vector<double> betas;
  for (double b = 1.0; b <= beta_max; b *= 2.0) betas.push_back(b);
  if (betas.back() != beta_max) betas.push_back(beta_max);

  std::vector<ActivationPattern> patterns;
  patterns.reserve(betas.size());
  for (double b : betas) {
    patterns.push_back(activation_pattern(net, (b * direction).eval()));
  }

  constexpr int kSweepPoints = 32;
  for (std::size_t c = 0; c < betas.size(); ++c) {
    bool agree = true;
    for (std::size_t j = c + 1; j < betas.size(); ++j) {
      if (!(patterns[j] == patterns[c])) {
        agree = false;
        break;
      }
    }
    if (!agree) continue;
    const double lo = betas[c];
    const double ratio = std::pow(beta_max / lo, 1.0 / (kSweepPoints - 1));
    bool sweep_ok = true;
    for (int s = 0; s < kSweepPoints && sweep_ok; ++s) {
      const double b = lo * std::pow(ratio, s);
      sweep_ok = activation_pattern(net, (b * direction).eval()) == patterns[c];
    }
    if (sweep_ok) {
      return {true, betas[c], patterns[c]};
    }
  }
  RayStabilization r;
  r.pattern = patterns.back();
  return r;
}

double RegionRaster::cell_x(Index i) const {
  return x_min + (static_cast<double>(i) + 0.5) * (x_max - x_min) /
                     static_cast<double>(resolution);
}

double RegionRaster::cell_y(Index j) const {
  return y_min + (static_cast<double>(j) + 0.5) * (y_max - y_min) /
                     static_cast<double>(resolution);
}

RegionRaster enumerate_regions_2d(const ReluNetwork& net, double x_min,
                                  double x_max, double y_min, double y_max,
                                  Index resolution) {
  require_dense(net, "enumerate_regions_2d");
  if (shape_size(net.input_shape) != 2) {
    throw ValidationError("enumerate_regions_2d: input dimension must be 2");
  }
  if (resolution < 1 || x_max <= x_min || y_max <= y_min) {
    throw ValidationError("enumerate_regions_2d: bad grid");
  }
  RegionRaster raster;
  raster.resolution = resolution;
  raster.x_min = x_min;
  raster.x_max = x_max;
  raster.y_min = y_min;
  raster.y_max = y_max;
  raster.region_ids.resize(static_cast<std::size_t>(resolution * resolution));
  std::unordered_map<std::string, int> ids;
  Eigen::VectorXd p(2);
  for (Index j = 0; j < resolution; ++j) {
    for (Index i = 0; i < resolution; ++i) {
      p[0] = raster.cell_x(i);
      p[1] = raster.cell_y(j);
      const std::string key = activation_pattern(net, p).key();
      auto [it, inserted] = ids.emplace(key, static_cast<int>(ids.size()));
      raster.region_ids[static_cast<std::size_t>(j * resolution + i)] =
          it->second;
    }
  }
  raster.region_count = static_cast<int>(ids.size());
  return raster;
}

}  // namespace parn
