#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "artuda/nn.hpp"
#include "artuda/rng.hpp"

namespace artuda::attacks {

enum class Kind { fgsm, pgd, mifgsm };
enum class LossKind { ce, kl, l1, l2 };
enum class Supervision { labels, self_logits };

std::string kind_name(Kind k);

struct AttackConfig {
  Kind kind = Kind::pgd;
  double epsilon = 0.0;               // L-inf budget, input-space units
  std::optional<double> alpha;        // step size; default 2.5*eps/j_max
  int j_max = 1;
  bool random_start = false;
  double momentum_mu = 1.0;           // MI-FGSM decay
  std::optional<std::array<double, 2>> clip_bounds;
  LossKind loss = LossKind::ce;
  Supervision supervision = Supervision::labels;
  bool bn_batch_stats = false;  // default: attacks see BN running stats

  /// Resolved step size: alpha if set; epsilon for FGSM; 2.5*eps/j_max else.
  double step_size() const;
  void validate() const;

  static AttackConfig fgsm_config(double eps);
  static AttackConfig pgd_config(double eps, int j_max,
                                 bool random_start = true);
  static AttackConfig mifgsm_config(double eps, int j_max);
};

/// sign with the sign(0) = 0 convention.
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Coordinatewise clamp of x into [x_orig - eps, x_orig + eps], then into
/// clip bounds if given.
Tensor project_linf(const Tensor& x, const Tensor& x_orig, double epsilon,
                    const std::optional<std::array<double, 2>>& clip_bounds);

// Gradient-based adversarial example generation against `model`.
//
// labels supervision maximizes the configured loss against the given labels;
// self_logits supervision maximizes it against the model's own logits on the
// clean input, computed once and held constant across iterations, and never
// reads label data. rng is consulted only for the random start.
Tensor generate(const nn::UDAModel& model, const Tensor& x,
                const AttackConfig& cfg,
                const std::vector<int>* labels = nullptr,
                const Tensor* reference_logits = nullptr, Rng* rng = nullptr);

struct TransferResult {
  Tensor adversarial;
  std::vector<int> target_predictions;
};

/// Black-box transfer: white-box generation against `substitute`, evaluation
/// on `target`. Target gradients are never consulted.
TransferResult transfer_attack(const nn::UDAModel& substitute,
                               const nn::UDAModel& target, const Tensor& x,
                               const std::vector<int>& labels,
                               const AttackConfig& cfg, Rng* rng = nullptr);

}  // namespace artuda::attacks
