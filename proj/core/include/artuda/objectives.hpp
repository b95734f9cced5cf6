#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "artuda/attacks.hpp"
#include "artuda/data.hpp"
#include "artuda/nn.hpp"

namespace artuda::objectives {

using autodiff::Tape;
using autodiff::Var;

// Training-objective family. The ssat_* variants differ in which of the four
// data types {x_s, x~s, x_t, x~t} they train on and which domain-loss pairs
// they add; artuda is ssat_stt_2 under the single-mini-batch composition.
enum class Variant {
  natural,
  conv_at,
  pseudo_label,
  ssat,  // consistency loss kind configurable: l1 | l2 | kl
  ssat_stt_1,
  ssat_stt_2,
  ssat_sstt_1,
  ssat_sstt_2,
  ssat_sstt_3,
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);  // accepts "artuda" alias

/// The four sub-batch data types.
enum class Tag { x_s, x_s_adv, x_t, x_t_adv };

std::string tag_name(Tag t);

/// Mini-batch compositions for batch normalization. Groups forwarded
/// together share batch statistics.
enum class BatchMode { ST_Tt, S_TTt, S_T_Tt, STTt };

std::string batch_mode_name(BatchMode m);
BatchMode batch_mode_from_name(const std::string& name);

struct NormalizationGroupPlan {
  std::vector<std::vector<Tag>> groups;  // ordered; tags disjoint, complete

  void validate(const std::set<Tag>& available) const;
};

/// The four Table-style compositions over tags {x_s, x_t, x~t}:
///   ST_Tt  -> [x_s, x_t], [x~t]        S_TTt -> [x_s], [x_t, x~t]
///   S_T_Tt -> [x_s], [x_t], [x~t]      STTt  -> [x_s, x_t, x~t]
/// x~s, when present, forms its own trailing group. Missing any of the three
/// required tags is an error.
NormalizationGroupPlan compose_norm_groups(BatchMode mode,
                                           const std::set<Tag>& available);

/// Generalization used by the trainer for variants that train on fewer data
/// types: x~s stands in for x_s when x_s is absent, empty slots are dropped.
/// Coincides with compose_norm_groups whenever {x_s, x_t, x~t} are present.
NormalizationGroupPlan plan_norm_groups(BatchMode mode,
                                        const std::set<Tag>& available);

struct ObjectiveSpec {
  Variant variant = Variant::natural;
  attacks::LossKind ssat_loss = attacks::LossKind::kl;  // plain ssat only
  double lambda_weight = 1.0;
  BatchMode batch_mode = BatchMode::ST_Tt;
  attacks::AttackConfig inner_attack;

  void validate() const;
  std::string summary() const;
};

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double sgd_momentum = 0.9;
  std::uint64_t seed = 0;
  double grl_coefficient = 1.0;

  void validate() const;
};

/// Which sub-batches, cross-entropy terms and domain-loss pairs a variant
/// produces. ce_terms pairs a tag with whether it is scored against source
/// labels (true) or pseudo labels (false).
struct VariantProfile {
  std::set<Tag> tags;
  std::vector<std::pair<Tag, bool>> ce_terms;
  std::vector<std::pair<Tag, Tag>> da_pairs;
  bool has_consistency = false;
};

VariantProfile variant_profile(Variant v);

/// Frozen natural-training model assigning argmax labels to target points.
struct PseudoLabeler {
  nn::UDAModel model;

  std::vector<int> labels_for(const Tensor& x) const;
};

/// Tagged sub-batches for one training step, plus the labels that are
/// legitimately available to training. clean_target always carries the raw
/// target batch (the self-supervision reference), whether or not x_t is one
/// of the variant's training sub-batches.
struct SubBatches {
  std::map<Tag, Tensor> batches;
  std::vector<int> source_labels;
  std::vector<int> pseudo_labels;  // pseudo_label variant only
  Tensor clean_target;

  std::set<Tag> tags() const;
};

/// Generates exactly the sub-batches the variant requires against the
/// model's current parameters: x~s by supervised attack on source labels,
/// x~t by self-supervised attack (pseudo_label scores pseudo labels instead).
SubBatches make_adversarial_minibatch(const nn::UDAModel& model,
                                      const data::Batch& source_batch,
                                      const Tensor& target_batch,
                                      const ObjectiveSpec& spec,
                                      const PseudoLabeler* labeler,
                                      Rng* attack_rng);

struct ObjectiveValue {
  Var total;
  std::vector<std::pair<std::string, Var>> parts;  // named loss terms
  Var consistency_reference;  // clean-branch logits; invalid if no such term
};

/// Evaluates the variant's total loss. Forward passes share batch statistics
/// within each plan group; lambda scales only the consistency term; target
/// labels are never an input. `frozen_consistency_reference` substitutes a
/// constant for the clean-branch logits (finite-difference harness hook).
ObjectiveValue compute_objective(
    Tape& tape, const nn::UDAModel& model, const nn::ModelVars& vars,
    const SubBatches& sb, const ObjectiveSpec& spec,
    const NormalizationGroupPlan& plan,
    std::vector<nn::BnStatsUpdate>* bn_observed = nullptr,
    const Tensor* frozen_consistency_reference = nullptr);

/// Trains a natural-variant model with the same budget, then freezes it as
/// the pseudo labeler. Never reads target labels.
PseudoLabeler fit_pseudo_labeler(const data::DomainDataset& source,
                                 const data::DomainDataset& target,
                                 const ObjectiveSpec& spec,
                                 const TrainConfig& cfg,
                                 const nn::ModelSpec& mspec);

struct EpochRecord {
  int epoch;
  double mean_loss;
  std::vector<std::pair<std::string, double>> term_means;
};

struct TrainResult {
  nn::UDAModel model;
  std::vector<EpochRecord> epochs;
};

/// SGD with momentum over the variant's objective. Deterministic given the
/// seed; aborts with TrainingDiverged on a non-finite loss. The target
/// dataset contributes features only.
TrainResult train(const data::DomainDataset& source,
                  const data::DomainDataset& target, const ObjectiveSpec& spec,
                  const TrainConfig& cfg, const nn::ModelSpec& mspec);

}  // namespace artuda::objectives
