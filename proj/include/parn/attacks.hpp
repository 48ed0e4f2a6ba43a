#pragma once

#include <cstdint>
#include <vector>

#include "parn/models.hpp"
#include "parn/tensor.hpp"

namespace parn {

enum class AttackObjective { MaxConfidence, UntargetedCrossEntropy };

struct PgdConfig {
  double epsilon = 0.3;       // L-inf ball radius
  double step_size = 0.0075;  // signed-gradient step
  int iterations = 40;
  int restarts = 1;  // restart 0 starts at the input, later ones in the ball
  AttackObjective objective = AttackObjective::MaxConfidence;
  bool clamp_box = true;  // intersect with [0,1]^d
  std::uint64_t seed = 0;
};

void validate(const PgdConfig& cfg);

struct AttackResult {
  DenseTensor points;          // best iterate per sample, feasible
  Eigen::VectorXd objectives;  // objective value at the best iterate
};

/// Iterated signed-gradient ascent of the maximal log confidence inside the
/// epsilon ball around each z (intersected with [0,1]^d when clamping).
/// Tracks the best iterate per sample across iterations and restarts.
AttackResult pgd_max_confidence(const ReluNetwork& net, const DenseTensor& z,
                                const PgdConfig& cfg);

/// Untargeted attack: ascent on the cross-entropy of the true class.
AttackResult pgd_adversarial_sample(const ReluNetwork& net,
                                    const DenseTensor& x,
                                    const std::vector<int>& labels,
                                    const PgdConfig& cfg);

}  // namespace parn
