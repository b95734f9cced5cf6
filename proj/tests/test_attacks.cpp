#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "artuda/attacks.hpp"
#include "artuda/errors.hpp"
#include "util.hpp"

using namespace artuda;
using namespace artuda::attacks;
using testutil::random_tensor;

namespace {

nn::UDAModel random_model(std::uint64_t seed) {
  return nn::init_params(testutil::tiny_spec(2, 6, 2), seed);
}

/// 1-D logistic model: logits [0, x], so P(class 1) = sigmoid(x) and the
/// label-0 cross-entropy gradient w.r.t. x is sigmoid(x) > 0.
nn::UDAModel logistic_model() {
  nn::ModelSpec spec;
  spec.input_dim = 1;
  spec.feature_widths = {};
  spec.num_classes = 2;
  spec.discriminator_widths = {};
  nn::UDAModel m = nn::init_params(spec, 0);
  m.classifier[0].weight = Tensor::matrix(2, 1, {0.0, 1.0});
  m.classifier[0].bias = Tensor::vector({0.0, 0.0});
  return m;
}

}  // namespace

TEST_CASE("project_linf clamps into the ball and the data bounds") {
  Tensor x = Tensor::vector({0.2, -0.3, 0.05});
  Tensor orig = Tensor::vector({0.0, 0.0, 0.0});
  Tensor p = project_linf(x, orig, 0.1, std::nullopt);
  CHECK(p[0] == 0.1);
  CHECK(p[1] == -0.1);
  CHECK(p[2] == 0.05);

  // unchanged when already inside
  Tensor q = project_linf(orig, orig, 0.1, std::nullopt);
  CHECK(testutil::bit_equal(q, orig));

  // eps = 0 returns the anchor exactly
  Tensor r = project_linf(x, orig, 0.0, std::nullopt);
  CHECK(testutil::bit_equal(r, orig));

  // clip bounds applied after the ball
  Tensor c = project_linf(Tensor::vector({0.9}), Tensor::vector({0.85}), 0.1,
                          std::array<double, 2>{0.0, 0.88});
  CHECK(c[0] == 0.88);
}

TEST_CASE("attack config invariants") {
  AttackConfig fgsm = AttackConfig::fgsm_config(0.1);
  fgsm.j_max = 2;
  CHECK_THROWS_AS(fgsm.validate(), ConfigError);
  fgsm.j_max = 1;
  fgsm.random_start = true;
  CHECK_THROWS_AS(fgsm.validate(), ConfigError);

  AttackConfig pgd = AttackConfig::pgd_config(0.1, 10);
  CHECK(pgd.step_size() == doctest::Approx(2.5 * 0.1 / 10));
  pgd.alpha = 0.03;
  CHECK(pgd.step_size() == 0.03);
}

TEST_CASE("epsilon 0 attacks are the identity") {
  nn::UDAModel m = random_model(4);
  Rng rng(5);
  Tensor x = random_tensor(rng, {8, 2});
  std::vector<int> y = testutil::random_labels(rng, 8, 2);
  for (Kind kind : {Kind::fgsm, Kind::pgd, Kind::mifgsm}) {
    AttackConfig cfg;
    cfg.kind = kind;
    cfg.epsilon = 0.0;
    cfg.j_max = kind == Kind::fgsm ? 1 : 5;
    Rng arng(6);
    Tensor adv = generate(m, x, cfg, &y, nullptr, &arng);
    CHECK(testutil::bit_equal(adv, x));
  }
}

TEST_CASE("fgsm is bit-identical to single-step pgd with alpha = eps") {
  nn::UDAModel m = random_model(7);
  Rng rng(8);
  Tensor x = random_tensor(rng, {16, 2});
  std::vector<int> y = testutil::random_labels(rng, 16, 2);

  Tensor a = generate(m, x, AttackConfig::fgsm_config(0.07), &y);
  AttackConfig pgd1 = AttackConfig::pgd_config(0.07, 1, /*random_start=*/false);
  pgd1.alpha = 0.07;
  Tensor b = generate(m, x, pgd1, &y);
  CHECK(testutil::bit_equal(a, b));
}

TEST_CASE("1-D logistic fgsm moves against the label by exactly eps") {
  nn::UDAModel m = logistic_model();
  Tensor x = Tensor::matrix(1, 1, {0.5});
  std::vector<int> y = {0};
  Tensor adv = generate(m, x, AttackConfig::fgsm_config(0.1), &y);
  CHECK(adv.item() == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("mifgsm with mu = 0 equals iterated fgsm steps") {
  nn::UDAModel m = random_model(9);
  Rng rng(10);
  Tensor x = random_tensor(rng, {12, 2});
  std::vector<int> y = testutil::random_labels(rng, 12, 2);

  AttackConfig mi = AttackConfig::mifgsm_config(0.09, 4);
  mi.momentum_mu = 0.0;
  mi.alpha = 0.03;
  Tensor a = generate(m, x, mi, &y);

  AttackConfig pgd = AttackConfig::pgd_config(0.09, 4, /*random_start=*/false);
  pgd.alpha = 0.03;
  Tensor b = generate(m, x, pgd, &y);
  CHECK(testutil::bit_equal(a, b));
}

TEST_CASE("budget invariant over random models, batches and configs") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(derive_seed(500, "budget", trial));
    nn::UDAModel m = random_model(rng.next_u64());
    std::size_t n = 2 + rng.bounded(10);
    Tensor x = random_tensor(rng, {n, 2});
    std::vector<int> y = testutil::random_labels(rng, n, 2);

    AttackConfig cfg;
    cfg.kind = static_cast<Kind>(rng.bounded(3));
    cfg.epsilon = rng.uniform(0.0, 0.3);
    cfg.j_max = cfg.kind == Kind::fgsm ? 1 : 1 + static_cast<int>(rng.bounded(8));
    cfg.random_start = cfg.kind == Kind::pgd;
    Rng arng(derive_seed(501, "start", trial));
    Tensor adv = generate(m, x, cfg, &y, nullptr, &arng);

    double worst = testutil::max_abs_diff(adv, x);
    CHECK(worst <= cfg.epsilon + 1e-12);
  }
}

TEST_CASE("self-supervised attacks never read labels") {
  nn::UDAModel m = random_model(11);
  Rng rng(12);
  Tensor x = random_tensor(rng, {10, 2});

  AttackConfig cfg = AttackConfig::pgd_config(0.1, 5);
  cfg.supervision = Supervision::self_logits;
  cfg.loss = LossKind::kl;

  std::vector<int> labels = testutil::random_labels(rng, 10, 2);
  std::vector<int> permuted(labels.rbegin(), labels.rend());

  Rng r1(77), r2(77);
  Tensor a = generate(m, x, cfg, &labels, nullptr, &r1);
  Tensor b = generate(m, x, cfg, &permuted, nullptr, &r2);
  CHECK(testutil::bit_equal(a, b));
}

TEST_CASE("configuration errors: missing labels or reference") {
  nn::UDAModel m = random_model(13);
  Tensor x = Tensor::matrix(2, 2, {0.1, 0.2, 0.3, 0.4});
  AttackConfig cfg = AttackConfig::fgsm_config(0.1);
  CHECK_THROWS_AS(generate(m, x, cfg, nullptr), ConfigError);

  AttackConfig kl = AttackConfig::pgd_config(0.1, 2);
  kl.loss = LossKind::kl;  // kl under label supervision is inconsistent
  std::vector<int> y = {0, 1};
  CHECK_THROWS_AS(generate(m, x, kl, &y), ConfigError);

  AttackConfig rs = AttackConfig::pgd_config(0.1, 2, /*random_start=*/true);
  CHECK_THROWS_AS(generate(m, x, rs, &y, nullptr, nullptr), ConfigError);
}

TEST_CASE("transfer attack degenerates to white-box when models coincide") {
  nn::UDAModel m = random_model(14);
  Rng rng(15);
  Tensor x = random_tensor(rng, {6, 2});
  std::vector<int> y = testutil::random_labels(rng, 6, 2);
  AttackConfig cfg = AttackConfig::mifgsm_config(0.1, 3);

  TransferResult res = transfer_attack(m, m, x, y, cfg);
  Tensor white = generate(m, x, cfg, &y);
  CHECK(testutil::bit_equal(res.adversarial, white));

  // eps = 0: target predictions equal clean predictions
  AttackConfig zero = AttackConfig::mifgsm_config(0.0, 3);
  nn::UDAModel target = random_model(16);
  TransferResult clean = transfer_attack(m, target, x, y, zero);
  autodiff::Tape t;
  auto logits = nn::model_forward(t, target, t.constant(x),
                                  nn::Branch::class_logits);
  CHECK(clean.target_predictions == nn::argmax_rows(t.value(logits)));

  nn::UDAModel wide = nn::init_params(testutil::tiny_spec(3, 4, 2), 1);
  CHECK_THROWS_AS(transfer_attack(m, wide, x, y, cfg), ConfigError);
}

TEST_CASE("attack in eval mode leaves BN running statistics untouched") {
  nn::UDAModel m = random_model(17);
  std::vector<double> before = m.features[0].bn.running_mean;
  Rng rng(18);
  Tensor x = random_tensor(rng, {8, 2});
  std::vector<int> y = testutil::random_labels(rng, 8, 2);
  Rng arng(19);
  generate(m, x, AttackConfig::pgd_config(0.1, 5), &y, nullptr, &arng);
  CHECK(m.features[0].bn.running_mean == before);
}
