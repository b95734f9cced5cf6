#include <benchmark/benchmark.h>

#include "artuda/attacks.hpp"
#include "artuda/data.hpp"
#include "artuda/objectives.hpp"

namespace {

using namespace artuda;

nn::UDAModel toy_model() {
  nn::ModelSpec spec;
  spec.input_dim = 2;
  spec.feature_widths = {32, 32};
  spec.num_classes = 2;
  return nn::init_params(spec, 7);
}

void BM_ForwardBackward(benchmark::State& state) {
  nn::UDAModel model = toy_model();
  Rng rng(1);
  std::vector<double> vals(64 * 2);
  for (double& v : vals) v = rng.uniform(-2, 2);
  Tensor x = Tensor::matrix(64, 2, vals);
  std::vector<int> labels(64);
  for (auto& y : labels) y = static_cast<int>(rng.bounded(2));

  for (auto _ : state) {
    autodiff::Tape tape;
    nn::ModelVars vars = nn::bind(tape, model, true);
    autodiff::Var xv = tape.constant(x);
    autodiff::Var f = nn::features_forward(tape, model, vars, xv,
                                           nn::BnStatsMode::batch);
    autodiff::Var loss =
        nn::loss_ce(tape, nn::classifier_forward(tape, vars, f), labels);
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_Pgd20Batch64(benchmark::State& state) {
  nn::UDAModel model = toy_model();
  Rng rng(2);
  std::vector<double> vals(64 * 2);
  for (double& v : vals) v = rng.uniform(-2, 2);
  Tensor x = Tensor::matrix(64, 2, vals);
  std::vector<int> labels(64);
  for (auto& y : labels) y = static_cast<int>(rng.bounded(2));
  auto cfg = attacks::AttackConfig::pgd_config(0.1, 20);

  for (auto _ : state) {
    Rng attack_rng(3);
    benchmark::DoNotOptimize(
        attacks::generate(model, x, cfg, &labels, nullptr, &attack_rng));
  }
}
BENCHMARK(BM_Pgd20Batch64);

void BM_TrainEpochArtuda(benchmark::State& state) {
  auto [source, target] = data::gen_two_moons_shift(512, 0.1, 35.0, {0, 0}, 5);
  nn::ModelSpec mspec;
  mspec.input_dim = 2;
  mspec.num_classes = 2;
  objectives::ObjectiveSpec ospec;
  ospec.variant = objectives::Variant::ssat_stt_2;
  ospec.batch_mode = objectives::BatchMode::STTt;
  ospec.inner_attack = attacks::AttackConfig::pgd_config(0.1, 3);
  objectives::TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 64;
  tcfg.seed = 11;

  for (auto _ : state) {
    benchmark::DoNotOptimize(
        objectives::train(source, target, ospec, tcfg, mspec));
  }
}
BENCHMARK(BM_TrainEpochArtuda);

}  // namespace

BENCHMARK_MAIN();
