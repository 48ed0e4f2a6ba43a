#include "parn/attacks.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "parn/random.hpp"

namespace parn {

void validate(const PgdConfig& cfg) {
  if (cfg.epsilon < 0.0) {
    throw ValidationError("pgd: epsilon must be >= 0, got " +
                          std::to_string(cfg.epsilon));
  }
  if (cfg.step_size <= 0.0) {
    throw ValidationError("pgd: step_size must be positive");
  }
  if (cfg.epsilon > 0.0 && cfg.step_size > 2.0 * cfg.epsilon) {
    throw ValidationError("pgd: step_size must not exceed 2*epsilon");
  }
  if (cfg.iterations < 1) throw ValidationError("pgd: iterations must be >= 1");
  if (cfg.restarts < 1) throw ValidationError("pgd: restarts must be >= 1");
}

namespace {

Eigen::VectorXd per_sample_objective(const DenseTensor& logits,
                                     const PgdConfig& cfg,
                                     const std::vector<int>* labels) {
  if (cfg.objective == AttackObjective::MaxConfidence) {
    return max_log_confidence_rows(logits);
  }
  const Eigen::VectorXd lse = logsumexp_rows(logits);
  Eigen::VectorXd obj(logits.dim(0));
  for (Index i = 0; i < logits.dim(0); ++i) {
    obj[i] = lse[i] - logits(i, (*labels)[static_cast<std::size_t>(i)]);
  }
  return obj;
}

AttackResult run_pgd(const ReluNetwork& net, const DenseTensor& z,
                     const std::vector<int>* labels, const PgdConfig& cfg) {
  validate(cfg);
  validate(net);
  const Index per_sample = shape_size(net.input_shape);
  if (z.size() % per_sample != 0) {
    throw DimensionError("pgd: input " + shape_string(z.shape()) +
                         " incompatible with input_shape " +
                         shape_string(net.input_shape));
  }
  const Index n = z.size() / per_sample;
  if (labels) {
    if (static_cast<Index>(labels->size()) != n) {
      throw ValidationError("pgd: label count " +
                            std::to_string(labels->size()) + " for batch " +
                            std::to_string(n));
    }
    for (int y : *labels) {
      if (y < 0 || y >= net.num_classes) {
        throw ValidationError("pgd: label " + std::to_string(y) +
                              " outside [0," +
                              std::to_string(net.num_classes) + ")");
      }
    }
  }

  const double eps = cfg.epsilon;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  auto project = [&](DenseTensor& u) {
    u.array() = u.array().max(z.array() - eps).min(z.array() + eps);
    if (cfg.clamp_box) u.array() = u.array().max(0.0).min(1.0);
    // The clamp bounds are rounded, so u-z can overshoot eps by an ulp;
    // nudge such coordinates until the measured difference is feasible.
    for (Index i = 0; i < u.size(); ++i) {
      while (u[i] - z[i] > eps) u[i] = std::nextafter(u[i], -kInf);
      while (u[i] - z[i] < -eps) u[i] = std::nextafter(u[i], kInf);
    }
  };

  auto eval = [&](const DenseTensor& u, Eigen::VectorXd& obj,
                  DenseTensor* grad) {
    if (!grad) {
      obj = per_sample_objective(forward(net, u), cfg, labels);
      return;
    }
    Tape tape;
    const int u_id = tape.leaf(u, true);
    const TapedNet tn = taped_forward(tape, net, u_id, false);
    obj = per_sample_objective(tape.value(tn.output), cfg, labels);
    const int loss = cfg.objective == AttackObjective::MaxConfidence
                         ? tape.max_log_conf_mean(tn.output)
                         : tape.cross_entropy_mean(tn.output, *labels);
    tape.backward(loss, DenseTensor::scalar(1.0));
    *grad = tape.grad(u_id);
  };

  AttackResult best;
  best.points = z;
  best.objectives =
      Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  auto update_best = [&](const DenseTensor& u, const Eigen::VectorXd& obj) {
    for (Index i = 0; i < n; ++i) {
      if (obj[i] > best.objectives[i]) {
        best.objectives[i] = obj[i];
        best.points.array().segment(i * per_sample, per_sample) =
            u.array().segment(i * per_sample, per_sample);
      }
    }
  };

  for (int r = 0; r < cfg.restarts; ++r) {
    DenseTensor u = z;
    if (r > 0) {
      std::mt19937_64 rng = make_rng(cfg.seed, static_cast<std::uint64_t>(r));
      std::uniform_real_distribution<double> delta(-eps, eps);
      for (Index i = 0; i < u.size(); ++i) u[i] = z[i] + delta(rng);
      project(u);
    }
    Eigen::VectorXd obj;
    DenseTensor grad;
    for (int t = 0; t < cfg.iterations; ++t) {
      eval(u, obj, &grad);
      update_best(u, obj);
      // sign(0) = 0: coordinates with zero gradient stay put
      u.array() += cfg.step_size * grad.array().sign();
      project(u);
    }
    eval(u, obj, nullptr);
    update_best(u, obj);
  }
  return best;
}

}  // namespace

AttackResult pgd_max_confidence(const ReluNetwork& net, const DenseTensor& z,
                                const PgdConfig& cfg) {
  PgdConfig c = cfg;
  c.objective = AttackObjective::MaxConfidence;
  return run_pgd(net, z, nullptr, c);
}

AttackResult pgd_adversarial_sample(const ReluNetwork& net,
                                    const DenseTensor& x,
                                    const std::vector<int>& labels,
                                    const PgdConfig& cfg) {
  PgdConfig c = cfg;
  c.objective = AttackObjective::UntargetedCrossEntropy;
  return run_pgd(net, x, &labels, c);
}

}  // namespace parn
