#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "artuda/checkpoint.hpp"
#include "artuda/errors.hpp"
#include "artuda/objectives.hpp"
#include "util.hpp"

using namespace artuda;
using namespace artuda::objectives;
using autodiff::Tape;
using autodiff::Var;

namespace {

const Tag S = Tag::x_s, SA = Tag::x_s_adv, T = Tag::x_t, TA = Tag::x_t_adv;

ObjectiveSpec spec_for(Variant v, double eps = 0.1, double lambda = 1.0,
                       BatchMode mode = BatchMode::ST_Tt) {
  ObjectiveSpec spec;
  spec.variant = v;
  spec.lambda_weight = lambda;
  spec.batch_mode = mode;
  spec.inner_attack = attacks::AttackConfig::pgd_config(eps, 3,
                                                        /*random_start=*/false);
  return spec;
}

data::Batch source_batch(Rng& rng, std::size_t n = 8) {
  return data::Batch{testutil::random_tensor(rng, {n, 2}),
                     testutil::random_labels(rng, n, 2)};
}

std::vector<std::string> part_names(const ObjectiveValue& obj) {
  std::vector<std::string> names;
  for (const auto& [name, unused] : obj.parts) names.push_back(name);
  return names;
}

ObjectiveValue evaluate(Tape& tape, nn::UDAModel& model, const SubBatches& sb,
                        const ObjectiveSpec& spec, bool trainable = false) {
  nn::ModelVars vars = nn::bind(tape, model, trainable);
  NormalizationGroupPlan plan = plan_norm_groups(spec.batch_mode, sb.tags());
  return compute_objective(tape, model, vars, sb, spec, plan);
}

}  // namespace

TEST_CASE("compose_norm_groups produces the four published compositions") {
  std::set<Tag> tags = {S, T, TA};
  CHECK(compose_norm_groups(BatchMode::ST_Tt, tags).groups ==
        std::vector<std::vector<Tag>>{{S, T}, {TA}});
  CHECK(compose_norm_groups(BatchMode::S_TTt, tags).groups ==
        std::vector<std::vector<Tag>>{{S}, {T, TA}});
  CHECK(compose_norm_groups(BatchMode::S_T_Tt, tags).groups ==
        std::vector<std::vector<Tag>>{{S}, {T}, {TA}});
  CHECK(compose_norm_groups(BatchMode::STTt, tags).groups ==
        std::vector<std::vector<Tag>>{{S, T, TA}});

  // x~s, when present, becomes its own trailing group
  std::set<Tag> all = {S, SA, T, TA};
  CHECK(compose_norm_groups(BatchMode::STTt, all).groups ==
        std::vector<std::vector<Tag>>{{S, T, TA}, {SA}});

  CHECK_THROWS_AS(compose_norm_groups(BatchMode::STTt, {S, T}), ConfigError);
  CHECK_THROWS_AS(compose_norm_groups(BatchMode::ST_Tt, {S, TA}), ConfigError);
}

TEST_CASE("plan_norm_groups covers reduced tag sets") {
  // conv_at trains on x~s in place of x_s
  CHECK(plan_norm_groups(BatchMode::ST_Tt, {SA, T}).groups ==
        std::vector<std::vector<Tag>>{{SA, T}});
  // plain ssat
  CHECK(plan_norm_groups(BatchMode::ST_Tt, {S, TA}).groups ==
        std::vector<std::vector<Tag>>{{S}, {TA}});
  CHECK(plan_norm_groups(BatchMode::STTt, {S, TA}).groups ==
        std::vector<std::vector<Tag>>{{S, TA}});
  // natural
  CHECK(plan_norm_groups(BatchMode::ST_Tt, {S, T}).groups ==
        std::vector<std::vector<Tag>>{{S, T}});
}

TEST_CASE("variant matrix: every variant produces exactly its row") {
  struct Row {
    Variant variant;
    std::set<Tag> tags;
    std::vector<std::string> parts;  // expected term names, in order
  };
  const std::vector<Row> rows = {
      {Variant::natural, {S, T}, {"ce(x_s)", "da(x_s,x_t)"}},
      {Variant::conv_at, {SA, T}, {"ce(x_s_adv)", "da(x_s_adv,x_t)"}},
      {Variant::pseudo_label,
       {S, TA},
       {"ce(x_s)", "ce(x_t_adv)", "da(x_s,x_t_adv)"}},
      {Variant::ssat, {S, TA}, {"ce(x_s)", "consistency", "da(x_s,x_t_adv)"}},
      {Variant::ssat_stt_1,
       {S, T, TA},
       {"ce(x_s)", "consistency", "da(x_s,x_t)"}},
      {Variant::ssat_stt_2,
       {S, T, TA},
       {"ce(x_s)", "consistency", "da(x_s,x_t)", "da(x_s,x_t_adv)"}},
      {Variant::ssat_sstt_1,
       {S, SA, T, TA},
       {"ce(x_s)", "ce(x_s_adv)", "consistency", "da(x_s,x_t)",
        "da(x_s_adv,x_t_adv)"}},
      {Variant::ssat_sstt_2,
       {S, SA, T, TA},
       {"ce(x_s)", "ce(x_s_adv)", "consistency", "da(x_s,x_t_adv)",
        "da(x_s_adv,x_t)"}},
      {Variant::ssat_sstt_3,
       {S, SA, T, TA},
       {"ce(x_s)", "ce(x_s_adv)", "consistency", "da(x_s,x_t)",
        "da(x_s,x_t_adv)", "da(x_s_adv,x_t)", "da(x_s_adv,x_t_adv)"}},
  };

  nn::UDAModel model = nn::init_params(testutil::tiny_spec(), 31);
  Rng rng(32);
  data::Batch src = source_batch(rng);
  Tensor tgt = testutil::random_tensor(rng, {8, 2});
  PseudoLabeler labeler{nn::init_params(testutil::tiny_spec(), 99)};

  for (const auto& row : rows) {
    INFO("variant " << variant_name(row.variant));
    ObjectiveSpec spec = spec_for(row.variant);
    Rng arng(33);
    SubBatches sb =
        make_adversarial_minibatch(model, src, tgt, spec, &labeler, &arng);
    CHECK(sb.tags() == row.tags);

    Tape tape;
    ObjectiveValue obj = evaluate(tape, model, sb, spec);
    CHECK(part_names(obj) == row.parts);
  }
}

TEST_CASE("make_adversarial_minibatch honors budgets and supervision") {
  nn::UDAModel model = nn::init_params(testutil::tiny_spec(), 41);
  Rng rng(42);
  data::Batch src = source_batch(rng);
  Tensor tgt = testutil::random_tensor(rng, {8, 2});

  // natural ignores the inner attack entirely (an invalid one is fine)
  ObjectiveSpec natural = spec_for(Variant::natural);
  natural.inner_attack.epsilon = -1.0;
  Rng arng(1);
  SubBatches nb =
      make_adversarial_minibatch(model, src, tgt, natural, nullptr, &arng);
  CHECK(testutil::bit_equal(nb.batches.at(S), src.x));
  CHECK(testutil::bit_equal(nb.batches.at(T), tgt));

  ObjectiveSpec conv = spec_for(Variant::conv_at, 0.05);
  SubBatches cb =
      make_adversarial_minibatch(model, src, tgt, conv, nullptr, &arng);
  CHECK(testutil::max_abs_diff(cb.batches.at(SA), src.x) <= 0.05 + 1e-12);

  ObjectiveSpec stt2 = spec_for(Variant::ssat_stt_2, 0.05);
  SubBatches sb =
      make_adversarial_minibatch(model, src, tgt, stt2, nullptr, &arng);
  CHECK(testutil::max_abs_diff(sb.batches.at(TA), tgt) <= 0.05 + 1e-12);

  // pseudo labeling needs a fitted labeler
  ObjectiveSpec pl = spec_for(Variant::pseudo_label);
  CHECK_THROWS_AS(make_adversarial_minibatch(model, src, tgt, pl, nullptr,
                                             &arng),
                  ConfigError);
}

TEST_CASE("saturated classifier and fooled discriminator give CE~0, DA=ln 2") {
  nn::ModelSpec spec;
  spec.input_dim = 2;
  spec.feature_widths = {};  // identity features
  spec.num_classes = 2;
  spec.discriminator_widths = {};
  nn::UDAModel model = nn::init_params(spec, 1);
  model.classifier[0].weight = Tensor::matrix(2, 2, {-30, 0, 30, 0});
  model.classifier[0].bias = Tensor::vector({0, 0});
  model.discriminator[0].weight = Tensor::matrix(1, 2, {0, 0});
  model.discriminator[0].bias = Tensor::vector({0});

  data::Batch src{Tensor::matrix(2, 2, {-1, 0, 1, 0}), {0, 1}};
  Tensor tgt = Tensor::matrix(2, 2, {-1, 0.3, 1, -0.3});

  ObjectiveSpec natural = spec_for(Variant::natural);
  Rng arng(2);
  SubBatches sb =
      make_adversarial_minibatch(model, src, tgt, natural, nullptr, &arng);
  Tape tape;
  ObjectiveValue obj = evaluate(tape, model, sb, natural);
  CHECK(tape.value(obj.parts[0].second).item() < 1e-10);  // ce(x_s)
  CHECK(tape.value(obj.parts[1].second).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));  // da at D == 0.5
}

TEST_CASE("eps = 0 collapses conv_at to natural, bit-exactly") {
  nn::UDAModel model = nn::init_params(testutil::tiny_spec(2, 8, 2), 51);
  Rng rng(52);
  data::Batch src = source_batch(rng, 10);
  Tensor tgt = testutil::random_tensor(rng, {10, 2});

  Rng arng(3);
  ObjectiveSpec natural = spec_for(Variant::natural);
  SubBatches nb =
      make_adversarial_minibatch(model, src, tgt, natural, nullptr, &arng);
  Tape t1;
  double natural_total = t1.value(evaluate(t1, model, nb, natural).total).item();

  ObjectiveSpec conv = spec_for(Variant::conv_at, /*eps=*/0.0);
  SubBatches cb =
      make_adversarial_minibatch(model, src, tgt, conv, nullptr, &arng);
  CHECK(testutil::bit_equal(cb.batches.at(SA), src.x));
  Tape t2;
  double conv_total = t2.value(evaluate(t2, model, cb, conv).total).item();

  CHECK(conv_total == natural_total);
}

TEST_CASE("eps = 0 makes the ssat consistency term exactly zero") {
  for (BatchMode mode : {BatchMode::ST_Tt, BatchMode::S_TTt, BatchMode::S_T_Tt,
                         BatchMode::STTt}) {
    nn::UDAModel model = nn::init_params(testutil::tiny_spec(2, 8, 2), 53);
    Rng rng(54);
    data::Batch src = source_batch(rng, 6);
    Tensor tgt = testutil::random_tensor(rng, {6, 2});

    ObjectiveSpec ssat = spec_for(Variant::ssat, /*eps=*/0.0, 1.0, mode);
    ssat.ssat_loss = attacks::LossKind::kl;
    Rng arng(4);
    SubBatches sb =
        make_adversarial_minibatch(model, src, tgt, ssat, nullptr, &arng);
    CHECK(testutil::bit_equal(sb.batches.at(TA), tgt));

    Tape tape;
    ObjectiveValue obj = evaluate(tape, model, sb, ssat);
    INFO("mode " << batch_mode_name(mode));
    CHECK(tape.value(obj.parts[1].second).item() == 0.0);  // consistency
  }
}

TEST_CASE("lambda scales exactly one term") {
  nn::UDAModel model = nn::init_params(testutil::tiny_spec(2, 8, 2), 55);
  Rng rng(56);
  data::Batch src = source_batch(rng, 6);
  Tensor tgt = testutil::random_tensor(rng, {6, 2});

  ObjectiveSpec base = spec_for(Variant::ssat_stt_2, 0.1, 1.0);
  Rng arng(5);
  SubBatches sb =
      make_adversarial_minibatch(model, src, tgt, base, nullptr, &arng);

  auto eval_parts = [&](double lambda) {
    ObjectiveSpec spec = base;
    spec.lambda_weight = lambda;
    Tape tape;
    ObjectiveValue obj = evaluate(tape, model, sb, spec);
    std::map<std::string, double> out;
    for (const auto& [name, var] : obj.parts) out[name] = tape.value(var).item();
    out["__total"] = tape.value(obj.total).item();
    return out;
  };

  auto at0 = eval_parts(0.0);
  auto at1 = eval_parts(1.0);
  auto at2 = eval_parts(2.0);

  CHECK(at0["consistency"] == 0.0);
  CHECK(at2["consistency"] == 2.0 * at1["consistency"]);
  for (const auto& name : {"ce(x_s)", "da(x_s,x_t)", "da(x_s,x_t_adv)"}) {
    CHECK(at0[name] == at1[name]);  // lambda touches nothing else
  }
  // deleting the term == scaling it to zero
  CHECK(at0["__total"] ==
        at0["ce(x_s)"] + at0["da(x_s,x_t)"] + at0["da(x_s,x_t_adv)"]);
}

TEST_CASE("sstt_3 equals sstt_1 plus the two domain terms it adds") {
  nn::UDAModel model = nn::init_params(testutil::tiny_spec(2, 8, 2), 57);
  Rng rng(58);
  data::Batch src = source_batch(rng, 6);
  Tensor tgt = testutil::random_tensor(rng, {6, 2});

  ObjectiveSpec s3 = spec_for(Variant::ssat_sstt_3, 0.08);
  Rng arng(6);
  SubBatches sb = make_adversarial_minibatch(model, src, tgt, s3, nullptr, &arng);

  Tape t3;
  ObjectiveValue o3 = evaluate(t3, model, sb, s3);
  ObjectiveSpec s1 = spec_for(Variant::ssat_sstt_1, 0.08);
  Tape t1;
  ObjectiveValue o1 = evaluate(t1, model, sb, s1);

  std::map<std::string, double> p3, p1;
  for (const auto& [n, v] : o3.parts) p3[n] = t3.value(v).item();
  for (const auto& [n, v] : o1.parts) p1[n] = t1.value(v).item();

  for (const auto& [name, value] : p1) {
    CHECK(p3.at(name) == value);  // shared terms agree bit-exactly
  }
  double expected = t1.value(o1.total).item() + p3.at("da(x_s,x_t_adv)") +
                    p3.at("da(x_s_adv,x_t)");
  CHECK(t3.value(o3.total).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("the consistency reference receives no gradient") {
  for (Variant v : {Variant::ssat, Variant::ssat_stt_2}) {
    nn::UDAModel model = nn::init_params(testutil::tiny_spec(2, 8, 2), 59);
    Rng rng(60);
    data::Batch src = source_batch(rng, 6);
    Tensor tgt = testutil::random_tensor(rng, {6, 2});

    ObjectiveSpec spec = spec_for(v, 0.1);
    Rng arng(7);
    SubBatches sb =
        make_adversarial_minibatch(model, src, tgt, spec, nullptr, &arng);
    Tape tape;
    ObjectiveValue obj = evaluate(tape, model, sb, spec, /*trainable=*/true);
    autodiff::GradientMap gm = tape.backward(obj.total);
    INFO("variant " << variant_name(v));
    CHECK(obj.consistency_reference.valid());
    CHECK_FALSE(gm.has(obj.consistency_reference));
  }
}

TEST_CASE("mismatched sub-batches are rejected") {
  nn::UDAModel model = nn::init_params(testutil::tiny_spec(), 61);
  Rng rng(62);
  data::Batch src = source_batch(rng);
  Tensor tgt = testutil::random_tensor(rng, {8, 2});
  Rng arng(8);
  SubBatches nb = make_adversarial_minibatch(model, src, tgt,
                                             spec_for(Variant::natural),
                                             nullptr, &arng);
  Tape tape;
  nn::ModelVars vars = nn::bind(tape, model, false);
  ObjectiveSpec stt2 = spec_for(Variant::ssat_stt_2);
  NormalizationGroupPlan plan = plan_norm_groups(stt2.batch_mode, nb.tags());
  CHECK_THROWS_AS(
      compute_objective(tape, model, vars, nb, stt2, plan), ConfigError);
}

TEST_CASE("pseudo labels: degenerate shift reproduces the labeler accuracy") {
  auto [src, tgt0] = data::gen_two_moons_shift(120, 0.1, 0.0, {0, 0}, 71);
  // target == source data, target-tagged
  data::DomainDataset tgt = src;
  tgt.tag = data::DomainTag::target;

  ObjectiveSpec pl = spec_for(Variant::pseudo_label);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  cfg.seed = 72;
  PseudoLabeler labeler =
      fit_pseudo_labeler(src, tgt, pl, cfg, testutil::tiny_spec(2, 16, 2));

  std::vector<int> pseudo = labeler.labels_for(tgt.features);
  for (int y : pseudo) {
    CHECK(y >= 0);
    CHECK(y < 2);
  }
  double pseudo_acc = 0, src_acc = 0;
  std::vector<int> on_source = labeler.labels_for(src.features);
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    pseudo_acc += pseudo[i] == tgt.eval_labels()[i];
    src_acc += on_source[i] == src.eval_labels()[i];
  }
  CHECK(pseudo_acc == src_acc);  // same data, same frozen model
  (void)tgt0;
}

TEST_CASE("training is deterministic and never reads target labels") {
  auto [src, tgt] = data::gen_two_moons_shift(128, 0.1, 35.0, {0, 0}, 81);

  ObjectiveSpec artuda = spec_for(Variant::ssat_stt_2, 0.1, 1.0, BatchMode::STTt);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.seed = 82;
  nn::ModelSpec mspec = testutil::tiny_spec(2, 8, 2);

  TrainResult a = train(src, tgt, artuda, cfg, mspec);
  TrainResult b = train(src, tgt, artuda, cfg, mspec);
  CHECK(nn::checkpoint_digest(a.model) == nn::checkpoint_digest(b.model));

  // permuting target labels on disk cannot change anything
  data::DomainDataset permuted = tgt;
  std::vector<int>& labels = *permuted.labels;
  std::reverse(labels.begin(), labels.end());
  TrainResult c = train(src, permuted, artuda, cfg, mspec);
  CHECK(nn::checkpoint_digest(a.model) == nn::checkpoint_digest(c.model));

  TrainConfig other = cfg;
  other.seed = 83;
  TrainResult d = train(src, tgt, artuda, other, mspec);
  CHECK(nn::checkpoint_digest(a.model) != nn::checkpoint_digest(d.model));

  CHECK(a.epochs.size() == 2);
  CHECK(a.epochs[0].mean_loss == b.epochs[0].mean_loss);
}

TEST_CASE("natural training solves an easy zero-shift task") {
  auto [src, tgt] = data::gen_two_moons_shift(400, 0.1, 0.0, {0, 0}, 91);
  ObjectiveSpec natural = spec_for(Variant::natural);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 64;
  cfg.seed = 92;
  nn::ModelSpec mspec;
  mspec.input_dim = 2;
  mspec.num_classes = 2;
  TrainResult result = train(src, tgt, natural, cfg, mspec);

  Tape tape;
  Var logits = nn::model_forward(tape, result.model,
                                 tape.constant(tgt.features),
                                 nn::Branch::class_logits);
  std::vector<int> pred = nn::argmax_rows(tape.value(logits));
  double hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    hits += pred[i] == tgt.eval_labels()[i];
  CHECK(hits / static_cast<double>(pred.size()) > 0.95);
}

TEST_CASE("unlabeled source is rejected") {
  auto [src, tgt] = data::gen_two_moons_shift(64, 0.1, 0.0, {0, 0}, 93);
  data::DomainDataset unlabeled = src;
  unlabeled.labels.reset();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  CHECK_THROWS_AS(train(unlabeled, tgt, spec_for(Variant::natural), cfg,
                        testutil::tiny_spec()),
                  DataError);
}

TEST_CASE("a non-finite loss aborts with a diagnostic") {
  auto [src, tgt] = data::gen_two_moons_shift(64, 0.1, 0.0, {0, 0}, 94);
  ObjectiveSpec natural = spec_for(Variant::natural);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = 95;
  cfg.learning_rate = 1e300;  // guaranteed blow-up
  CHECK_THROWS_AS(train(src, tgt, natural, cfg, testutil::tiny_spec()),
                  TrainingDiverged);
}
