#include "artuda/objectives.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "artuda/errors.hpp"

namespace artuda::objectives {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::natural: return "natural";
    case Variant::conv_at: return "conv_at";
    case Variant::pseudo_label: return "pseudo_label";
    case Variant::ssat: return "ssat";
    case Variant::ssat_stt_1: return "ssat_stt_1";
    case Variant::ssat_stt_2: return "ssat_stt_2";
    case Variant::ssat_sstt_1: return "ssat_sstt_1";
    case Variant::ssat_sstt_2: return "ssat_sstt_2";
    case Variant::ssat_sstt_3: return "ssat_sstt_3";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  // "artuda" is ssat_stt_2; its STTt batch mode is applied at config level.
  if (name == "artuda") return Variant::ssat_stt_2;
  for (Variant v :
       {Variant::natural, Variant::conv_at, Variant::pseudo_label,
        Variant::ssat, Variant::ssat_stt_1, Variant::ssat_stt_2,
        Variant::ssat_sstt_1, Variant::ssat_sstt_2, Variant::ssat_sstt_3}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown objective variant '" + name + "'");
}

std::string tag_name(Tag t) {
  switch (t) {
    case Tag::x_s: return "x_s";
    case Tag::x_s_adv: return "x_s_adv";
    case Tag::x_t: return "x_t";
    case Tag::x_t_adv: return "x_t_adv";
  }
  return "?";
}

std::string batch_mode_name(BatchMode m) {
  switch (m) {
    case BatchMode::ST_Tt: return "ST_Tt";
    case BatchMode::S_TTt: return "S_TTt";
    case BatchMode::S_T_Tt: return "S_T_Tt";
    case BatchMode::STTt: return "STTt";
  }
  return "?";
}

BatchMode batch_mode_from_name(const std::string& name) {
  for (BatchMode m : {BatchMode::ST_Tt, BatchMode::S_TTt, BatchMode::S_T_Tt,
                      BatchMode::STTt}) {
    if (batch_mode_name(m) == name) return m;
  }
  throw ConfigError("unknown batch mode '" + name + "'");
}

void NormalizationGroupPlan::validate(const std::set<Tag>& available) const {
  std::set<Tag> seen;
  for (const auto& group : groups) {
    for (Tag t : group) {
      if (!available.count(t)) {
        throw ConfigError("norm plan: tag " + tag_name(t) +
                          " not present in the step's data");
      }
      if (!seen.insert(t).second) {
        throw ConfigError("norm plan: tag " + tag_name(t) +
                          " appears in more than one group");
      }
    }
  }
  if (seen != available) {
    throw ConfigError("norm plan: some present tags are not grouped");
  }
}

NormalizationGroupPlan plan_norm_groups(BatchMode mode,
                                        const std::set<Tag>& available) {
  if (available.empty()) throw ConfigError("norm plan: no sub-batches");

  // Slot members: x~s stands in for x_s when x_s itself is absent (it is the
  // trained source data then); otherwise it trails as its own group.
  bool has_s = available.count(Tag::x_s) != 0;
  bool has_sa = available.count(Tag::x_s_adv) != 0;
  std::vector<Tag> source_slot, target_slot, target_adv_slot, trailing;
  if (has_s) source_slot.push_back(Tag::x_s);
  if (has_sa) {
    if (has_s)
      trailing.push_back(Tag::x_s_adv);
    else
      source_slot.push_back(Tag::x_s_adv);
  }
  if (available.count(Tag::x_t)) target_slot.push_back(Tag::x_t);
  if (available.count(Tag::x_t_adv)) target_adv_slot.push_back(Tag::x_t_adv);

  auto merge = [](std::initializer_list<const std::vector<Tag>*> slots) {
    std::vector<Tag> g;
    for (const auto* s : slots) g.insert(g.end(), s->begin(), s->end());
    std::sort(g.begin(), g.end());
    return g;
  };

  std::vector<std::vector<Tag>> groups;
  switch (mode) {
    case BatchMode::ST_Tt:
      groups = {merge({&source_slot, &target_slot}), target_adv_slot};
      break;
    case BatchMode::S_TTt:
      groups = {source_slot, merge({&target_slot, &target_adv_slot})};
      break;
    case BatchMode::S_T_Tt:
      groups = {source_slot, target_slot, target_adv_slot};
      break;
    case BatchMode::STTt:
      groups = {merge({&source_slot, &target_slot, &target_adv_slot})};
      break;
  }
  if (!trailing.empty()) groups.push_back(trailing);

  NormalizationGroupPlan plan;
  for (auto& g : groups) {
    if (!g.empty()) plan.groups.push_back(std::move(g));
  }
  plan.validate(available);
  return plan;
}

NormalizationGroupPlan compose_norm_groups(BatchMode mode,
                                           const std::set<Tag>& available) {
  for (Tag t : {Tag::x_s, Tag::x_t, Tag::x_t_adv}) {
    if (!available.count(t)) {
      throw ConfigError("compose_norm_groups: missing tag " + tag_name(t) +
                        " for mode " + batch_mode_name(mode));
    }
  }
  return plan_norm_groups(mode, available);
}

void ObjectiveSpec::validate() const {
  if (lambda_weight < 0) {
    throw ConfigError("objective: lambda_weight must be >= 0");
  }
  if (variant != Variant::natural) inner_attack.validate();
}

std::string ObjectiveSpec::summary() const {
  std::string s = variant_name(variant);
  if (variant == Variant::ssat) {
    switch (ssat_loss) {
      case attacks::LossKind::kl: s += "-kl"; break;
      case attacks::LossKind::l1: s += "-l1"; break;
      case attacks::LossKind::l2: s += "-l2"; break;
      case attacks::LossKind::ce: break;
    }
  }
  s += "/" + batch_mode_name(batch_mode);
  return s;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
  if (sgd_momentum < 0 || sgd_momentum >= 1) {
    throw ConfigError("train: sgd_momentum must be in [0,1)");
  }
  if (grl_coefficient < 0) {
    throw ConfigError("train: grl_coefficient must be >= 0");
  }
}

VariantProfile variant_profile(Variant v) {
  using P = VariantProfile;
  const Tag s = Tag::x_s, sa = Tag::x_s_adv, t = Tag::x_t, ta = Tag::x_t_adv;
  switch (v) {
    case Variant::natural:
      return P{{s, t}, {{s, true}}, {{s, t}}, false};
    case Variant::conv_at:
      return P{{sa, t}, {{sa, true}}, {{sa, t}}, false};
    case Variant::pseudo_label:
      return P{{s, ta}, {{s, true}, {ta, false}}, {{s, ta}}, false};
    case Variant::ssat:
      return P{{s, ta}, {{s, true}}, {{s, ta}}, true};
    case Variant::ssat_stt_1:
      return P{{s, t, ta}, {{s, true}}, {{s, t}}, true};
    case Variant::ssat_stt_2:
      return P{{s, t, ta}, {{s, true}}, {{s, t}, {s, ta}}, true};
    case Variant::ssat_sstt_1:
      return P{{s, sa, t, ta}, {{s, true}, {sa, true}}, {{s, t}, {sa, ta}}, true};
    case Variant::ssat_sstt_2:
      return P{{s, sa, t, ta}, {{s, true}, {sa, true}}, {{s, ta}, {sa, t}}, true};
    case Variant::ssat_sstt_3:
      return P{{s, sa, t, ta},
               {{s, true}, {sa, true}},
               {{s, t}, {s, ta}, {sa, t}, {sa, ta}},
               true};
  }
  throw ConfigError("variant_profile: unknown variant");
}

std::set<Tag> SubBatches::tags() const {
  std::set<Tag> out;
  for (const auto& [tag, unused] : batches) out.insert(tag);
  return out;
}

std::vector<int> PseudoLabeler::labels_for(const Tensor& x) const {
  Tape tape;
  Var logits = nn::model_forward(tape, model, tape.constant(x),
                                 nn::Branch::class_logits);
  return nn::argmax_rows(tape.value(logits));
}

SubBatches make_adversarial_minibatch(const nn::UDAModel& model,
                                      const data::Batch& source_batch,
                                      const Tensor& target_batch,
                                      const ObjectiveSpec& spec,
                                      const PseudoLabeler* labeler,
                                      Rng* attack_rng) {
  if (source_batch.labels.empty()) {
    throw DataError("make_adversarial_minibatch: source batch has no labels");
  }
  VariantProfile profile = variant_profile(spec.variant);

  SubBatches sb;
  sb.source_labels = source_batch.labels;
  sb.clean_target = target_batch;
  if (profile.tags.count(Tag::x_s)) sb.batches.emplace(Tag::x_s, source_batch.x);
  if (profile.tags.count(Tag::x_t)) sb.batches.emplace(Tag::x_t, target_batch);

  if (profile.tags.count(Tag::x_s_adv)) {
    attacks::AttackConfig cfg = spec.inner_attack;
    cfg.supervision = attacks::Supervision::labels;
    cfg.loss = attacks::LossKind::ce;
    sb.batches.emplace(
        Tag::x_s_adv, attacks::generate(model, source_batch.x, cfg,
                                        &source_batch.labels, nullptr,
                                        attack_rng));
  }
  if (profile.tags.count(Tag::x_t_adv)) {
    attacks::AttackConfig cfg = spec.inner_attack;
    if (spec.variant == Variant::pseudo_label) {
      if (!labeler) {
        throw ConfigError(
            "pseudo_label variant requires a fitted pseudo labeler");
      }
      sb.pseudo_labels = labeler->labels_for(target_batch);
      cfg.supervision = attacks::Supervision::labels;
      cfg.loss = attacks::LossKind::ce;
      sb.batches.emplace(Tag::x_t_adv,
                         attacks::generate(model, target_batch, cfg,
                                           &sb.pseudo_labels, nullptr,
                                           attack_rng));
    } else {
      cfg.supervision = attacks::Supervision::self_logits;
      cfg.loss = spec.variant == Variant::ssat ? spec.ssat_loss
                                               : attacks::LossKind::kl;
      sb.batches.emplace(Tag::x_t_adv,
                         attacks::generate(model, target_batch, cfg, nullptr,
                                           nullptr, attack_rng));
    }
  }
  return sb;
}

ObjectiveValue compute_objective(Tape& tape, const nn::UDAModel& model,
                                 const nn::ModelVars& vars,
                                 const SubBatches& sb,
                                 const ObjectiveSpec& spec,
                                 const NormalizationGroupPlan& plan,
                                 std::vector<nn::BnStatsUpdate>* bn_observed,
                                 const Tensor* frozen_consistency_reference) {
  VariantProfile profile = variant_profile(spec.variant);
  if (sb.tags() != profile.tags) {
    throw ConfigError("compute_objective: sub-batches do not match variant " +
                      variant_name(spec.variant));
  }
  plan.validate(profile.tags);

  // Forward each normalization group as one concatenated batch, then slice
  // the features back out per tag. One forward per tag per step.
  std::map<Tag, Var> feats;
  std::map<Tag, std::size_t> group_of;
  std::vector<nn::BnGroupStats> group_stats(plan.groups.size());
  for (std::size_t gi = 0; gi < plan.groups.size(); ++gi) {
    const auto& group = plan.groups[gi];
    std::vector<Var> members;
    std::vector<std::size_t> row_counts;
    for (Tag t : group) {
      members.push_back(tape.constant(sb.batches.at(t)));
      row_counts.push_back(sb.batches.at(t).rows());
      group_of[t] = gi;
    }
    Var joint = members.size() == 1 ? members[0] : tape.concat_rows(members);
    Var f = nn::features_forward(tape, model, vars, joint,
                                 nn::BnStatsMode::batch, nullptr,
                                 &group_stats[gi], bn_observed);
    if (group.size() == 1) {
      feats[group[0]] = f;
    } else {
      std::size_t row = 0;
      for (std::size_t i = 0; i < group.size(); ++i) {
        feats[group[i]] = tape.slice_rows(f, row, row + row_counts[i]);
        row += row_counts[i];
      }
    }
  }

  // Class logits for the tags that need them.
  std::set<Tag> need_logits;
  for (const auto& [tag, unused] : profile.ce_terms) need_logits.insert(tag);
  if (profile.has_consistency) {
    need_logits.insert(Tag::x_t_adv);
    if (profile.tags.count(Tag::x_t)) need_logits.insert(Tag::x_t);
  }
  std::map<Tag, Var> logits;
  for (Tag t : need_logits) {
    logits[t] = nn::classifier_forward(tape, vars, feats.at(t));
  }

  ObjectiveValue out;
  std::vector<std::pair<std::string, Var>>& parts = out.parts;

  for (const auto& [tag, on_source_labels] : profile.ce_terms) {
    const std::vector<int>& y =
        on_source_labels ? sb.source_labels : sb.pseudo_labels;
    if (y.empty()) {
      throw ConfigError("compute_objective: no labels for ce(" +
                        tag_name(tag) + ")");
    }
    parts.emplace_back("ce(" + tag_name(tag) + ")",
                       nn::loss_ce(tape, logits.at(tag), y));
  }

  if (profile.has_consistency) {
    Var reference;
    if (frozen_consistency_reference) {
      reference = tape.constant(*frozen_consistency_reference);
    } else if (profile.tags.count(Tag::x_t)) {
      reference = logits.at(Tag::x_t);
    } else {
      // The clean reference is normalized exactly like the adversarial
      // branch: forward x_t with the adversarial-target group's statistics.
      const nn::BnGroupStats& stats = group_stats[group_of.at(Tag::x_t_adv)];
      Var clean = tape.constant(sb.clean_target);
      Var f = nn::features_forward(tape, model, vars, clean,
                                   nn::BnStatsMode::batch, &stats);
      reference = nn::classifier_forward(tape, vars, f);
    }
    out.consistency_reference = reference;

    attacks::LossKind kind = spec.variant == Variant::ssat
                                 ? spec.ssat_loss
                                 : attacks::LossKind::kl;
    Var term;
    switch (kind) {
      case attacks::LossKind::kl:
        term = nn::loss_kl(tape, logits.at(Tag::x_t_adv), reference);
        break;
      case attacks::LossKind::l1:
        term = nn::loss_logit_distance(tape, nn::DistanceKind::l1,
                                       logits.at(Tag::x_t_adv), reference);
        break;
      case attacks::LossKind::l2:
        term = nn::loss_logit_distance(tape, nn::DistanceKind::l2,
                                       logits.at(Tag::x_t_adv), reference);
        break;
      case attacks::LossKind::ce:
        throw ConfigError("compute_objective: ce is not a consistency loss");
    }
    parts.emplace_back("consistency", tape.scale(term, spec.lambda_weight));
  }

  for (const auto& [a, b] : profile.da_pairs) {
    Var joint = tape.concat_rows({feats.at(a), feats.at(b)});
    Var logit = nn::discriminator_forward(tape, model, vars, joint);
    std::vector<int> domain(sb.batches.at(a).rows(), 1);
    domain.resize(domain.size() + sb.batches.at(b).rows(), 0);
    parts.emplace_back("da(" + tag_name(a) + "," + tag_name(b) + ")",
                       nn::loss_domain_bce(tape, logit, domain));
  }

  Var total = parts.front().second;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    total = tape.add(total, parts[i].second);
  }
  out.total = total;
  return out;
}

PseudoLabeler fit_pseudo_labeler(const data::DomainDataset& source,
                                 const data::DomainDataset& target,
                                 const ObjectiveSpec& spec,
                                 const TrainConfig& cfg,
                                 const nn::ModelSpec& mspec) {
  (void)spec;  // same budget and architecture as the main run
  ObjectiveSpec natural;
  natural.variant = Variant::natural;
  TrainConfig labeler_cfg = cfg;
  labeler_cfg.seed = derive_seed(cfg.seed, "pseudo_labeler");
  TrainResult result = train(source, target, natural, labeler_cfg, mspec);
  return PseudoLabeler{std::move(result.model)};
}

namespace {

/// Recycles target batches independently of the source epoch counter.
class TargetCycler {
 public:
  TargetCycler(const data::DomainDataset& ds, std::size_t batch_size,
               std::uint64_t seed)
      : ds_(ds), batch_size_(batch_size), seed_(seed) {}

  const Tensor& next() {
    if (pos_ == current_.size()) {
      current_ = data::make_batches(ds_, batch_size_, seed_, epoch_++);
      pos_ = 0;
    }
    return current_[pos_++].x;
  }

 private:
  const data::DomainDataset& ds_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<data::Batch> current_;
  std::size_t pos_ = 0;
};

}  // namespace

TrainResult train(const data::DomainDataset& source,
                  const data::DomainDataset& target, const ObjectiveSpec& spec,
                  const TrainConfig& cfg, const nn::ModelSpec& mspec) {
  spec.validate();
  cfg.validate();
  if (!source.labels) throw DataError("train: source dataset must be labeled");
  if (source.dim() != mspec.input_dim || target.dim() != mspec.input_dim) {
    throw ConfigError("train: dataset dim does not match model input_dim");
  }
  if (source.num_classes > mspec.num_classes) {
    throw ConfigError("train: more source classes than model outputs");
  }

  nn::UDAModel model = init_params(mspec, derive_seed(cfg.seed, "init"));
  model.grl_coefficient = cfg.grl_coefficient;

  PseudoLabeler labeler_storage{};
  const PseudoLabeler* labeler = nullptr;
  if (spec.variant == Variant::pseudo_label) {
    labeler_storage = fit_pseudo_labeler(source, target, spec, cfg, mspec);
    labeler = &labeler_storage;
  }

  std::vector<Tensor*> params;
  for_each_param(model, [&](const std::string&, Tensor& t) {
    params.push_back(&t);
  });
  std::vector<std::vector<double>> velocity;
  for (Tensor* p : params) velocity.emplace_back(p->size(), 0.0);

  Rng attack_rng(derive_seed(cfg.seed, "attack"));
  TargetCycler cycler(target, cfg.batch_size,
                      derive_seed(cfg.seed, "batch/target"));
  std::uint64_t src_seed = derive_seed(cfg.seed, "batch/source");

  TrainResult result;
  int step_index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = data::make_batches(source, cfg.batch_size, src_seed,
                                      static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    std::vector<std::pair<std::string, double>> term_sums;
    for (const data::Batch& src_batch : batches) {
      try {
        SubBatches sb = make_adversarial_minibatch(
            model, src_batch, cycler.next(), spec, labeler, &attack_rng);
        NormalizationGroupPlan plan =
            plan_norm_groups(spec.batch_mode, sb.tags());

        Tape tape;
        nn::ModelVars vars = nn::bind(tape, model, /*trainable=*/true);
        std::vector<nn::BnStatsUpdate> bn_updates;
        ObjectiveValue obj = compute_objective(tape, model, vars, sb, spec,
                                               plan, &bn_updates);
        double loss = tape.value(obj.total).item();
        nn::apply_bn_updates(model, bn_updates);

        autodiff::GradientMap grads = tape.backward(obj.total);
        for (std::size_t i = 0; i < params.size(); ++i) {
          std::vector<double>& vel = velocity[i];
          std::vector<double>& val = params[i]->mutable_values();
          auto g = grads.get(vars.params[i]);
          for (std::size_t j = 0; j < val.size(); ++j) {
            double gj = g ? (*g)[j] : 0.0;
            vel[j] = cfg.sgd_momentum * vel[j] + gj;
            val[j] -= cfg.learning_rate * vel[j];
          }
        }

        loss_sum += loss;
        if (term_sums.empty()) {
          for (const auto& [name, var] : obj.parts)
            term_sums.emplace_back(name, tape.value(var).item());
        } else {
          for (std::size_t i = 0; i < obj.parts.size(); ++i)
            term_sums[i].second += tape.value(obj.parts[i].second).item();
        }
        ++step_index;
      } catch (const NumericError& e) {
        throw TrainingDiverged("training diverged: " + std::string(e.what()),
                               epoch, step_index);
      }
    }
    double n_steps = static_cast<double>(batches.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / n_steps;
    for (auto& [name, sum] : term_sums)
      rec.term_means.emplace_back(name, sum / n_steps);
    result.epochs.push_back(std::move(rec));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace artuda::objectives
