#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "artuda/tape.hpp"

namespace artuda::nn {

using autodiff::Tape;
using autodiff::Var;

struct LinearLayer {
  Tensor weight;  // [out_dim, in_dim]
  Tensor bias;    // [out_dim]

  std::size_t in_dim() const { return weight.shape()[1]; }
  std::size_t out_dim() const { return weight.shape()[0]; }
};

struct BatchNormState {
  Tensor gamma;  // [dim]
  Tensor beta;   // [dim]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  std::size_t dim() const { return gamma.size(); }
};

enum class Activation { relu, identity };

struct FeatureBlock {
  LinearLayer linear;
  BatchNormState bn;
  Activation act = Activation::relu;
};

struct ModelSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> feature_widths{32, 32};
  std::size_t num_classes = 2;
  std::vector<std::size_t> classifier_widths{};     // hidden layers before K
  std::vector<std::size_t> discriminator_widths{32};  // hidden layers before 1
  double grl_coefficient = 1.0;

  void validate() const;
};

/// Feature extractor F (linear+BN+activation blocks), classifier head C and
/// domain discriminator head D coupled to F through gradient reversal.
struct UDAModel {
  ModelSpec spec;
  std::vector<FeatureBlock> features;
  std::vector<LinearLayer> classifier;
  std::vector<LinearLayer> discriminator;
  double grl_coefficient = 1.0;

  std::size_t feature_dim() const;
};

/// Deterministic initialization: weights and biases uniform in
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)]; BN gamma=1, beta=0, running stats (0,1).
UDAModel init_params(const ModelSpec& spec, std::uint64_t seed);

/// Visits every trainable parameter in a fixed, documented order: feature
/// blocks (weight, bias, gamma, beta) in depth order, then classifier layers
/// (weight, bias), then discriminator layers (weight, bias). Checkpoints,
/// parameter binding and SGD all share this order.
template <typename Model, typename Fn>
void for_each_param(Model& model, Fn&& fn) {
  for (std::size_t i = 0; i < model.features.size(); ++i) {
    auto& blk = model.features[i];
    std::string p = "features." + std::to_string(i);
    fn(p + ".weight", blk.linear.weight);
    fn(p + ".bias", blk.linear.bias);
    fn(p + ".bn.gamma", blk.bn.gamma);
    fn(p + ".bn.beta", blk.bn.beta);
  }
  for (std::size_t i = 0; i < model.classifier.size(); ++i) {
    std::string p = "classifier." + std::to_string(i);
    fn(p + ".weight", model.classifier[i].weight);
    fn(p + ".bias", model.classifier[i].bias);
  }
  for (std::size_t i = 0; i < model.discriminator.size(); ++i) {
    std::string p = "discriminator." + std::to_string(i);
    fn(p + ".weight", model.discriminator[i].weight);
    fn(p + ".bias", model.discriminator[i].bias);
  }
}

/// Tape handles for one model's parameters, in for_each_param order.
struct ModelVars {
  std::vector<Var> params;

  struct Block {
    Var weight, bias, gamma, beta;
  };
  std::vector<Block> features;
  std::vector<std::pair<Var, Var>> classifier;     // (weight, bias)
  std::vector<std::pair<Var, Var>> discriminator;  // (weight, bias)
};

/// Copies the parameters onto the tape. trainable marks them as
/// differentiation targets; the model itself is never mutated here.
ModelVars bind(Tape& tape, const UDAModel& model, bool trainable);

/// Which statistics batch normalization uses, and whether the forward pass
/// reports batch statistics for a running-stat update.
enum class BnStatsMode { batch, running };

/// Per-BN-layer batch statistics of one normalization group, as tape vars.
struct BnGroupStats {
  std::vector<std::pair<Var, Var>> per_layer;  // (mean, var)
};

/// Batch statistics observed during a train-mode forward, for the caller to
/// fold into running stats (see apply_bn_updates).
struct BnStatsUpdate {
  std::size_t layer;
  std::vector<double> mean;
  std::vector<double> var;
};

/// One batch-normalization forward on the tape.
///  - batch mode: normalize by supplied stats if given, else by this batch's
///    statistics (biased variance); batch size must be >= 2 unless supplied.
///  - running mode: normalize by running stats (a fixed affine map).
/// When `observed` is non-null and stats were computed here, the batch
/// statistics are appended for a later running-stat update.
Var batchnorm_forward(Tape& tape, const BatchNormState& state, Var gamma,
                      Var beta, Var x, BnStatsMode mode,
                      const std::pair<Var, Var>* supplied_stats = nullptr,
                      std::pair<Var, Var>* computed_stats = nullptr,
                      std::vector<double>* observed_mean = nullptr,
                      std::vector<double>* observed_var = nullptr);

/// Spec-shaped convenience: forwards x through one BN layer and, in batch
/// mode, immediately applies the momentum update to `state`.
Var batchnorm_forward(Tape& tape, BatchNormState& state, Var x,
                      BnStatsMode mode,
                      const std::pair<Var, Var>* supplied_stats = nullptr);

/// Applies momentum updates: running = (1-m)*running + m*batch_stat.
void apply_bn_updates(UDAModel& model, const std::vector<BnStatsUpdate>& ups);

/// Feature extractor forward. In batch mode, per-layer statistics come from
/// `supplied` when given (normalization-group semantics), otherwise from x
/// itself; `capture` receives the statistics actually used and `observed`
/// the raw batch statistics for running updates.
Var features_forward(Tape& tape, const UDAModel& model, const ModelVars& vars,
                     Var x, BnStatsMode mode,
                     const BnGroupStats* supplied = nullptr,
                     BnGroupStats* capture = nullptr,
                     std::vector<BnStatsUpdate>* observed = nullptr);

/// Classifier head on features: hidden layers with ReLU, final linear -> K.
Var classifier_forward(Tape& tape, const ModelVars& vars, Var features);

/// Discriminator head behind gradient reversal: D(grl(features)).
Var discriminator_forward(Tape& tape, const UDAModel& model,
                          const ModelVars& vars, Var features);

enum class Branch { features, class_logits, domain_logit };

/// Whole-model forward for a single batch (binds parameters as constants).
/// The domain branch routes features through gradient reversal before D.
Var model_forward(Tape& tape, const UDAModel& model, Var batch, Branch branch,
                  BnStatsMode mode = BnStatsMode::running);

/// Mean cross-entropy: -log softmax(logits)[label], averaged over the batch.
Var loss_ce(Tape& tape, Var logits, const std::vector<int>& labels);

enum class KlDirection { clean_reference, adversarial_reference };

/// Mean KL divergence between the softmax distributions of two logit
/// batches; clean_logits is the stop-gradient branch. The default direction
/// is KL(clean || adversarial).
Var loss_kl(Tape& tape, Var adversarial_logits, Var clean_logits,
            KlDirection direction = KlDirection::clean_reference);

enum class DistanceKind { l1, l2 };

/// Mean over the batch of the per-row L1 or L2 norm of (a - b), with
/// stop-gradient on b.
Var loss_logit_distance(Tape& tape, DistanceKind kind, Var logits_a,
                        Var logits_b);

/// Mean binary cross-entropy with logits; labels in {0,1}. With the
/// discriminator emitting 0.5 everywhere this evaluates to ln 2.
Var loss_domain_bce(Tape& tape, Var logits, const std::vector<int>& labels);

/// Row-wise argmax of a logits matrix.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace artuda::nn
