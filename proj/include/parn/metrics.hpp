#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "parn/models.hpp"
#include "parn/tensor.hpp"

namespace parn {

/// Mean maximal confidence: arithmetic mean of per-sample max softmax
/// probabilities.
double mmc(const Eigen::VectorXd& max_confidences);

/// Probability that a random in-distribution score exceeds a random
/// out-distribution score, ties counted half.  Equals the pairwise
/// Mann-Whitney statistic; computed by rank sums in O((n+m) log(n+m)).
double auroc(const Eigen::VectorXd& in_conf, const Eigen::VectorXd& out_conf);

/// FPR at the largest threshold whose TPR (fraction of in_conf >= t)
/// reaches tpr_target.
double fpr_at_tpr(const Eigen::VectorXd& in_conf,
                  const Eigen::VectorXd& out_conf, double tpr_target = 0.95);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

/// One point per distinct score threshold (descending) plus the (0,0) and
/// (1,1) endpoints; trapezoid area over the points equals auroc.
std::vector<RocPoint> roc_curve(const Eigen::VectorXd& in_conf,
                                const Eigen::VectorXd& out_conf);

double trapezoid_area(const std::vector<RocPoint>& points);

struct ConfidenceHistogram {
  double lo = 0.0;  // 1/K
  double hi = 1.0;
  std::vector<std::int64_t> counts;
};

/// Equal-width bins over [1/K, 1], last bin right-inclusive.
ConfidenceHistogram confidence_histogram(const Eigen::VectorXd& max_confidences,
                                         Index num_classes, Index n_bins);

/// softmax(logits / T); argmax is invariant for every T > 0.
DenseTensor temperature_confidence(const DenseTensor& logits, double temperature);

struct RankedSample {
  Index index = 0;
  int predicted = 0;
  double confidence = 0.0;
};

struct ConfidenceExtremes {
  std::vector<RankedSample> lowest;   // ascending confidence
  std::vector<RankedSample> highest;  // descending confidence
};

/// Stable k lowest / k highest confidences; ties keep input order.
ConfidenceExtremes rank_extremes(const Eigen::VectorXd& confidences,
                                 const std::vector<int>& predicted, Index k);

struct OutDatasetEval {
  std::string name;
  double mmc_out = 0.0;
  double auroc = 0.0;
  double fpr_at_95_tpr = 0.0;
  std::vector<RocPoint> roc;
  ConfidenceHistogram histogram;
};

struct EvalReport {
  double mmc_in = 0.0;
  ConfidenceHistogram histogram_in;
  std::vector<OutDatasetEval> out_datasets;
};

/// Full evaluation battery for one model against named out-distribution
/// sample sets.
EvalReport evaluate_model(
    const ReluNetwork& net, const DenseTensor& in_images,
    const std::vector<std::pair<std::string, DenseTensor>>& out_sets,
    Index n_bins = 50);

}  // namespace parn
