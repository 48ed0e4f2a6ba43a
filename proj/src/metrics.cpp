#include "parn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace parn {

double mmc(const Eigen::VectorXd& max_confidences) {
  if (max_confidences.size() == 0) {
    throw ValidationError("mmc: empty confidence list");
  }
  return max_confidences.mean();
}

double auroc(const Eigen::VectorXd& in_conf, const Eigen::VectorXd& out_conf) {
  const Index n = in_conf.size(), m = out_conf.size();
  if (n == 0 || m == 0) throw ValidationError("auroc: empty score list");

  struct Entry {
    double score;
    bool is_in;
  };
  std::vector<Entry> all;
  all.reserve(static_cast<std::size_t>(n + m));
  for (Index i = 0; i < n; ++i) all.push_back({in_conf[i], true});
  for (Index j = 0; j < m; ++j) all.push_back({out_conf[j], false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Rank sum of the in-group with average ranks on ties reproduces the
  // pairwise formula including the half-credit tie convention.
  double rank_sum_in = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].is_in) rank_sum_in += avg_rank;
    }
    i = j;
  }
  const double nd = static_cast<double>(n), md = static_cast<double>(m);
  const double u = rank_sum_in - nd * (nd + 1.0) / 2.0;
  return u / (nd * md);
}

double fpr_at_tpr(const Eigen::VectorXd& in_conf,
                  const Eigen::VectorXd& out_conf, double tpr_target) {
  const Index n = in_conf.size(), m = out_conf.size();
  if (n == 0 || m == 0) throw ValidationError("fpr_at_tpr: empty score list");
  if (tpr_target <= 0.0 || tpr_target > 1.0) {
    throw ValidationError("fpr_at_tpr: tpr_target must lie in (0,1]");
  }
  std::vector<double> in_sorted(in_conf.data(), in_conf.data() + n);
  std::sort(in_sorted.begin(), in_sorted.end(), std::greater<double>());
  // Smallest k with k/n >= target; the k-th largest in-score is the largest
  // threshold achieving that TPR.
  Index k = static_cast<Index>(
      std::ceil(tpr_target * static_cast<double>(n) - 1e-9));
  k = std::max<Index>(1, std::min(k, n));
  const double threshold = in_sorted[static_cast<std::size_t>(k - 1)];
  Index fp = 0;
  for (Index j = 0; j < m; ++j) {
    if (out_conf[j] >= threshold) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(m);
}

std::vector<RocPoint> roc_curve(const Eigen::VectorXd& in_conf,
                                const Eigen::VectorXd& out_conf) {
  const Index n = in_conf.size(), m = out_conf.size();
  if (n == 0 || m == 0) throw ValidationError("roc_curve: empty score list");

  std::vector<double> in_sorted(in_conf.data(), in_conf.data() + n);
  std::vector<double> out_sorted(out_conf.data(), out_conf.data() + m);
  std::sort(in_sorted.begin(), in_sorted.end());
  std::sort(out_sorted.begin(), out_sorted.end());

  std::vector<double> thresholds;
  thresholds.reserve(static_cast<std::size_t>(n + m));
  thresholds.insert(thresholds.end(), in_sorted.begin(), in_sorted.end());
  thresholds.insert(thresholds.end(), out_sorted.begin(), out_sorted.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  auto frac_at_least = [](const std::vector<double>& sorted, double t) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
    return static_cast<double>(sorted.end() - it) /
           static_cast<double>(sorted.size());
  };

  std::vector<RocPoint> points;
  points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (double t : thresholds) {
    points.push_back({frac_at_least(out_sorted, t), frac_at_least(in_sorted, t), t});
  }
  if (points.back().fpr != 1.0 || points.back().tpr != 1.0) {
    points.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});
  }
  return points;
}

double trapezoid_area(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) *
            (points[i].tpr + points[i - 1].tpr) * 0.5;
  }
  return area;
}

ConfidenceHistogram confidence_histogram(const Eigen::VectorXd& max_confidences,
                                         Index num_classes, Index n_bins) {
  if (n_bins < 1) throw ValidationError("histogram: n_bins must be >= 1");
  if (num_classes < 2) throw ValidationError("histogram: K must be >= 2");
  ConfidenceHistogram h;
  h.lo = 1.0 / static_cast<double>(num_classes);
  h.hi = 1.0;
  h.counts.assign(static_cast<std::size_t>(n_bins), 0);
  const double width = (h.hi - h.lo) / static_cast<double>(n_bins);
  for (Index i = 0; i < max_confidences.size(); ++i) {
    const double v = max_confidences[i];
    if (v < h.lo - 1e-9 || v > h.hi) {
      throw ValidationError("histogram: confidence " + std::to_string(v) +
                            " outside [1/K, 1]");
    }
    Index bin = static_cast<Index>(std::floor((v - h.lo) / width));
    bin = std::max<Index>(0, std::min(bin, n_bins - 1));
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

DenseTensor temperature_confidence(const DenseTensor& logits,
                                   double temperature) {
  if (!(temperature > 0.0)) {
    throw ValidationError("temperature must be positive, got " +
                          std::to_string(temperature));
  }
  DenseTensor scaled(logits.shape(), logits.array() / temperature);
  return softmax(scaled);
}

ConfidenceExtremes rank_extremes(const Eigen::VectorXd& confidences,
                                 const std::vector<int>& predicted, Index k) {
  const Index n = confidences.size();
  if (k > n) throw ValidationError("rank_extremes: k exceeds sample count");
  if (static_cast<Index>(predicted.size()) != n) {
    throw ValidationError("rank_extremes: predictions/confidences disagree");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  ConfidenceExtremes ex;
  auto take = [&](bool ascending) {
    std::vector<Index> idx = order;
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
      return ascending ? confidences[a] < confidences[b]
                       : confidences[a] > confidences[b];
    });
    std::vector<RankedSample> out;
    out.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
      const Index s = idx[static_cast<std::size_t>(i)];
      out.push_back({s, predicted[static_cast<std::size_t>(s)], confidences[s]});
    }
    return out;
  };
  ex.lowest = take(true);
  ex.highest = take(false);
  return ex;
}

EvalReport evaluate_model(
    const ReluNetwork& net, const DenseTensor& in_images,
    const std::vector<std::pair<std::string, DenseTensor>>& out_sets,
    Index n_bins) {
  EvalReport report;
  const Confidence in_conf = confidence(net, in_images);
  report.mmc_in = mmc(in_conf.max_conf);
  report.histogram_in =
      confidence_histogram(in_conf.max_conf, net.num_classes, n_bins);
  for (const auto& [name, images] : out_sets) {
    OutDatasetEval e;
    e.name = name;
    const Confidence out_conf = confidence(net, images);
    e.mmc_out = mmc(out_conf.max_conf);
    e.auroc = auroc(in_conf.max_conf, out_conf.max_conf);
    e.fpr_at_95_tpr = fpr_at_tpr(in_conf.max_conf, out_conf.max_conf, 0.95);
    e.roc = roc_curve(in_conf.max_conf, out_conf.max_conf);
    e.histogram =
        confidence_histogram(out_conf.max_conf, net.num_classes, n_bins);
    report.out_datasets.push_back(std::move(e));
  }
  return report;
}

}  // namespace parn
