#include "artuda/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "artuda/errors.hpp"

namespace artuda::attacks {

using autodiff::Tape;
using autodiff::Var;

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::fgsm: return "fgsm";
    case Kind::pgd: return "pgd";
    case Kind::mifgsm: return "mifgsm";
  }
  return "?";
}

double AttackConfig::step_size() const {
  if (kind == Kind::fgsm) return epsilon;
  if (alpha) return *alpha;
  return 2.5 * epsilon / static_cast<double>(j_max);
}

void AttackConfig::validate() const {
  if (epsilon < 0) throw ConfigError("attack: epsilon must be >= 0");
  if (j_max < 1) throw ConfigError("attack: j_max must be >= 1");
  if (alpha && *alpha <= 0) throw ConfigError("attack: alpha must be > 0");
  if (momentum_mu < 0) throw ConfigError("attack: momentum_mu must be >= 0");
  if (kind == Kind::fgsm && (j_max != 1 || random_start)) {
    throw ConfigError(
        "attack: fgsm is single-step without random start (j_max must be 1)");
  }
  if (clip_bounds && (*clip_bounds)[0] > (*clip_bounds)[1]) {
    throw ConfigError("attack: clip bounds are inverted");
  }
}

AttackConfig AttackConfig::fgsm_config(double eps) {
  AttackConfig cfg;
  cfg.kind = Kind::fgsm;
  cfg.epsilon = eps;
  cfg.j_max = 1;
  cfg.random_start = false;
  return cfg;
}

AttackConfig AttackConfig::pgd_config(double eps, int j_max, bool random_start) {
  AttackConfig cfg;
  cfg.kind = Kind::pgd;
  cfg.epsilon = eps;
  cfg.j_max = j_max;
  cfg.random_start = random_start;
  return cfg;
}

AttackConfig AttackConfig::mifgsm_config(double eps, int j_max) {
  AttackConfig cfg;
  cfg.kind = Kind::mifgsm;
  cfg.epsilon = eps;
  cfg.j_max = j_max;
  cfg.random_start = false;
  return cfg;
}

Tensor project_linf(const Tensor& x, const Tensor& x_orig, double epsilon,
                    const std::optional<std::array<double, 2>>& clip_bounds) {
  if (!x.same_shape(x_orig)) {
    throw ShapeError("project_linf: shapes " + shape_to_string(x.shape()) +
                     " and " + shape_to_string(x_orig.shape()) + " differ");
  }
  if (epsilon < 0) throw ConfigError("project_linf: epsilon must be >= 0");
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double lo = x_orig[i] - epsilon, hi = x_orig[i] + epsilon;
    out[i] = std::clamp(out[i], lo, hi);
    if (clip_bounds) out[i] = std::clamp(out[i], (*clip_bounds)[0], (*clip_bounds)[1]);
  }
  return Tensor(x.shape(), std::move(out));
}

namespace {

/// Loss of the attacked batch on one fresh tape; the gradient ascent target.
Var attack_loss(Tape& tape, const nn::UDAModel& model, Var x,
                const AttackConfig& cfg, const std::vector<int>* labels,
                const Tensor& reference_logits) {
  Var logits = nn::model_forward(tape, model, x, nn::Branch::class_logits,
                                 cfg.bn_batch_stats ? nn::BnStatsMode::batch
                                                    : nn::BnStatsMode::running);
  switch (cfg.loss) {
    case LossKind::ce:
      return nn::loss_ce(tape, logits, *labels);
    case LossKind::kl:
      return nn::loss_kl(tape, logits, tape.constant(reference_logits));
    case LossKind::l1:
      return nn::loss_logit_distance(tape, nn::DistanceKind::l1, logits,
                                     tape.constant(reference_logits));
    case LossKind::l2:
      return nn::loss_logit_distance(tape, nn::DistanceKind::l2, logits,
                                     tape.constant(reference_logits));
  }
  throw ConfigError("attack: unknown loss kind");
}

}  // namespace

Tensor generate(const nn::UDAModel& model, const Tensor& x,
                const AttackConfig& cfg, const std::vector<int>* labels,
                const Tensor* reference_logits, Rng* rng) {
  cfg.validate();
  if (cfg.supervision == Supervision::labels) {
    if (!labels) {
      throw ConfigError("attack: label supervision requires labels");
    }
  }

  // Self-supervision signal: the model's clean logits, computed once.
  Tensor reference;
  if (cfg.supervision == Supervision::self_logits) {
    if (reference_logits) {
      reference = *reference_logits;
    } else {
      Tape tape;
      Var xv = tape.constant(x);
      reference = tape.value(nn::model_forward(
          tape, model, xv, nn::Branch::class_logits,
          cfg.bn_batch_stats ? nn::BnStatsMode::batch
                             : nn::BnStatsMode::running));
    }
  } else if (cfg.loss != LossKind::ce) {
    throw ConfigError("attack: kl/l1/l2 losses require self_logits supervision");
  }

  const std::vector<int>* loss_labels =
      cfg.supervision == Supervision::labels ? labels : nullptr;

  std::size_t n = x.rows(), d = x.cols();
  std::vector<double> cur(x.values().begin(), x.values().end());
  if (cfg.random_start) {
    if (!rng) throw ConfigError("attack: random_start requires an rng");
    for (double& v : cur) v += rng->uniform(-cfg.epsilon, cfg.epsilon);
    Tensor projected =
        project_linf(Tensor(x.shape(), cur), x, cfg.epsilon, cfg.clip_bounds);
    cur.assign(projected.values().begin(), projected.values().end());
  }

  double alpha = cfg.step_size();
  std::vector<double> momentum(cur.size(), 0.0);

  for (int j = 0; j < cfg.j_max; ++j) {
    Tape tape;
    Var xv = tape.input(Tensor(x.shape(), cur), /*requires_grad=*/true);
    Var loss = attack_loss(tape, model, xv, cfg, loss_labels, reference);
    Tensor grad = tape.input_gradient(loss, xv);
    if (!grad.all_finite()) throw NumericError("attack: non-finite gradient");

    if (cfg.kind == Kind::mifgsm) {
      // Per-sample L1 normalization keeps each row's trajectory independent
      // of how the batch is partitioned.
      for (std::size_t i = 0; i < n; ++i) {
        double norm1 = 0.0;
        for (std::size_t c = 0; c < d; ++c) norm1 += std::abs(grad[i * d + c]);
        for (std::size_t c = 0; c < d; ++c) {
          double g = norm1 > 0.0 ? grad[i * d + c] / norm1 : 0.0;
          momentum[i * d + c] = cfg.momentum_mu * momentum[i * d + c] + g;
        }
      }
      for (std::size_t i = 0; i < cur.size(); ++i)
        cur[i] += alpha * sign(momentum[i]);
    } else {
      for (std::size_t i = 0; i < cur.size(); ++i)
        cur[i] += alpha * sign(grad[i]);
    }
    Tensor projected =
        project_linf(Tensor(x.shape(), cur), x, cfg.epsilon, cfg.clip_bounds);
    cur.assign(projected.values().begin(), projected.values().end());
  }
  return Tensor(x.shape(), std::move(cur));
}

TransferResult transfer_attack(const nn::UDAModel& substitute,
                               const nn::UDAModel& target, const Tensor& x,
                               const std::vector<int>& labels,
                               const AttackConfig& cfg, Rng* rng) {
  if (substitute.spec.input_dim != target.spec.input_dim) {
    throw ConfigError("transfer_attack: substitute and target input dims differ");
  }
  Tensor adv = generate(substitute, x, cfg, &labels, nullptr, rng);
  Tape tape;
  Var logits = nn::model_forward(tape, target, tape.constant(adv),
                                 nn::Branch::class_logits);
  return TransferResult{std::move(adv), nn::argmax_rows(tape.value(logits))};
}

}  // namespace artuda::attacks
