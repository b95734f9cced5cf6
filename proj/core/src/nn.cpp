#include "artuda/nn.hpp"

#include <cmath>

#include "artuda/errors.hpp"
#include "artuda/rng.hpp"

namespace artuda::nn {

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  for (std::size_t w : feature_widths)
    if (w == 0) throw ConfigError("model: zero feature width");
  if (grl_coefficient < 0)
    throw ConfigError("model: grl_coefficient must be >= 0");
}

std::size_t UDAModel::feature_dim() const {
  return features.empty() ? spec.input_dim
                          : features.back().linear.out_dim();
}

namespace {

LinearLayer init_linear(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::vector<double> w(out_dim * in_dim), b(out_dim);
  for (double& v : w) v = rng.uniform(-bound, bound);
  for (double& v : b) v = rng.uniform(-bound, bound);
  return LinearLayer{Tensor::matrix(out_dim, in_dim, std::move(w)),
                     Tensor::vector(std::move(b))};
}

BatchNormState init_bn(std::size_t dim) {
  return BatchNormState{Tensor::filled({dim}, 1.0), Tensor::zeros({dim}),
                        std::vector<double>(dim, 0.0),
                        std::vector<double>(dim, 1.0)};
}

std::vector<LinearLayer> init_head(std::size_t in_dim,
                                   const std::vector<std::size_t>& hidden,
                                   std::size_t out_dim, Rng& rng) {
  std::vector<LinearLayer> layers;
  std::size_t d = in_dim;
  for (std::size_t w : hidden) {
    layers.push_back(init_linear(w, d, rng));
    d = w;
  }
  layers.push_back(init_linear(out_dim, d, rng));
  return layers;
}

}  // namespace

UDAModel init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  UDAModel model;
  model.spec = spec;
  model.grl_coefficient = spec.grl_coefficient;
  std::size_t d = spec.input_dim;
  for (std::size_t w : spec.feature_widths) {
    FeatureBlock blk;
    blk.linear = init_linear(w, d, rng);
    blk.bn = init_bn(w);
    blk.act = Activation::relu;
    model.features.push_back(std::move(blk));
    d = w;
  }
  model.classifier = init_head(d, spec.classifier_widths, spec.num_classes, rng);
  model.discriminator = init_head(d, spec.discriminator_widths, 1, rng);
  return model;
}

ModelVars bind(Tape& tape, const UDAModel& model, bool trainable) {
  ModelVars vars;
  for (const auto& blk : model.features) {
    ModelVars::Block b;
    b.weight = tape.input(blk.linear.weight, trainable);
    b.bias = tape.input(blk.linear.bias, trainable);
    b.gamma = tape.input(blk.bn.gamma, trainable);
    b.beta = tape.input(blk.bn.beta, trainable);
    vars.features.push_back(b);
    vars.params.insert(vars.params.end(), {b.weight, b.bias, b.gamma, b.beta});
  }
  for (const auto& lin : model.classifier) {
    Var w = tape.input(lin.weight, trainable);
    Var b = tape.input(lin.bias, trainable);
    vars.classifier.emplace_back(w, b);
    vars.params.insert(vars.params.end(), {w, b});
  }
  for (const auto& lin : model.discriminator) {
    Var w = tape.input(lin.weight, trainable);
    Var b = tape.input(lin.bias, trainable);
    vars.discriminator.emplace_back(w, b);
    vars.params.insert(vars.params.end(), {w, b});
  }
  return vars;
}

namespace {

Var linear_forward(Tape& tape, Var x, Var weight, Var bias) {
  Var wt = tape.transpose(weight);  // [in,out]
  Var y = tape.matmul(x, wt);
  std::size_t n = tape.value(y).shape()[0];
  return tape.add(y, tape.broadcast_rows(bias, n));
}

Var head_forward(Tape& tape, const std::vector<std::pair<Var, Var>>& layers,
                 Var x) {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = linear_forward(tape, h, layers[i].first, layers[i].second);
    if (i + 1 < layers.size()) h = tape.relu(h);
  }
  return h;
}

}  // namespace

Var batchnorm_forward(Tape& tape, const BatchNormState& state, Var gamma,
                      Var beta, Var x, BnStatsMode mode,
                      const std::pair<Var, Var>* supplied_stats,
                      std::pair<Var, Var>* computed_stats,
                      std::vector<double>* observed_mean,
                      std::vector<double>* observed_var) {
  const Tensor& tx = tape.value(x);
  if (tx.rank() != 2 || tx.shape()[1] != state.dim()) {
    throw ShapeError("batchnorm: input shape " + shape_to_string(tx.shape()) +
                     " does not match feature dim " +
                     std::to_string(state.dim()));
  }
  std::size_t n = tx.shape()[0];

  if (mode == BnStatsMode::running) {
    Var rm = tape.constant(Tensor::vector(state.running_mean));
    Var denom = tape.constant([&] {
      std::vector<double> d(state.dim());
      for (std::size_t j = 0; j < d.size(); ++j)
        d[j] = std::sqrt(state.running_var[j] + state.eps);
      return Tensor::vector(std::move(d));
    }());
    Var xc = tape.sub(x, tape.broadcast_rows(rm, n));
    Var xhat = tape.div(xc, tape.broadcast_rows(denom, n));
    return tape.add(tape.mul(xhat, tape.broadcast_rows(gamma, n)),
                    tape.broadcast_rows(beta, n));
  }

  Var mu, var;
  if (supplied_stats) {
    mu = supplied_stats->first;
    var = supplied_stats->second;
  } else {
    if (n < 2) {
      throw ShapeError(
          "batchnorm: degenerate batch of size 1 in train mode without group "
          "statistics");
    }
    mu = tape.colmean(x);
    Var xc0 = tape.sub(x, tape.broadcast_rows(mu, n));
    var = tape.colmean(tape.mul(xc0, xc0));
    if (observed_mean) {
      auto mv = tape.value(mu).values();
      auto vv = tape.value(var).values();
      observed_mean->assign(mv.begin(), mv.end());
      observed_var->assign(vv.begin(), vv.end());
    }
  }
  if (computed_stats) *computed_stats = {mu, var};

  Var xc = tape.sub(x, tape.broadcast_rows(mu, n));
  Var denom = tape.sqrt(tape.add_const(var, state.eps));
  Var xhat = tape.div(xc, tape.broadcast_rows(denom, n));
  return tape.add(tape.mul(xhat, tape.broadcast_rows(gamma, n)),
                  tape.broadcast_rows(beta, n));
}

Var batchnorm_forward(Tape& tape, BatchNormState& state, Var x,
                      BnStatsMode mode,
                      const std::pair<Var, Var>* supplied_stats) {
  Var gamma = tape.constant(state.gamma);
  Var beta = tape.constant(state.beta);
  std::vector<double> om, ov;
  Var out = batchnorm_forward(tape, state, gamma, beta, x, mode,
                              supplied_stats, nullptr, &om, &ov);
  if (mode == BnStatsMode::batch) {
    const auto stats_mean =
        supplied_stats ? tape.value(supplied_stats->first).values() : std::span<const double>(om);
    const auto stats_var =
        supplied_stats ? tape.value(supplied_stats->second).values() : std::span<const double>(ov);
    for (std::size_t j = 0; j < state.dim(); ++j) {
      state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] +
                              state.momentum * stats_mean[j];
      state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] +
                             state.momentum * stats_var[j];
    }
  }
  return out;
}

void apply_bn_updates(UDAModel& model, const std::vector<BnStatsUpdate>& ups) {
  for (const auto& up : ups) {
    BatchNormState& bn = model.features[up.layer].bn;
    for (std::size_t j = 0; j < bn.dim(); ++j) {
      bn.running_mean[j] =
          (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * up.mean[j];
      bn.running_var[j] =
          (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * up.var[j];
    }
  }
}

Var features_forward(Tape& tape, const UDAModel& model, const ModelVars& vars,
                     Var x, BnStatsMode mode, const BnGroupStats* supplied,
                     BnGroupStats* capture,
                     std::vector<BnStatsUpdate>* observed) {
  const Tensor& tx = tape.value(x);
  if (tx.rank() != 2 || tx.shape()[1] != model.spec.input_dim) {
    throw ShapeError("model_forward: batch shape " +
                     shape_to_string(tx.shape()) + " does not match input dim " +
                     std::to_string(model.spec.input_dim));
  }
  Var h = x;
  for (std::size_t i = 0; i < model.features.size(); ++i) {
    const FeatureBlock& blk = model.features[i];
    const ModelVars::Block& bv = vars.features[i];
    h = linear_forward(tape, h, bv.weight, bv.bias);
    const std::pair<Var, Var>* sup =
        supplied ? &supplied->per_layer[i] : nullptr;
    std::pair<Var, Var> stats;
    std::vector<double> om, ov;
    h = batchnorm_forward(tape, blk.bn, bv.gamma, bv.beta, h, mode, sup,
                          &stats, &om, &ov);
    if (capture) capture->per_layer.push_back(stats);
    if (observed && mode == BnStatsMode::batch && !supplied) {
      observed->push_back(BnStatsUpdate{i, std::move(om), std::move(ov)});
    }
    if (blk.act == Activation::relu) h = tape.relu(h);
  }
  return h;
}

Var classifier_forward(Tape& tape, const ModelVars& vars, Var features) {
  return head_forward(tape, vars.classifier, features);
}

Var discriminator_forward(Tape& tape, const UDAModel& model,
                          const ModelVars& vars, Var features) {
  Var reversed = tape.grl(features, model.grl_coefficient);
  return head_forward(tape, vars.discriminator, reversed);
}

Var model_forward(Tape& tape, const UDAModel& model, Var batch, Branch branch,
                  BnStatsMode mode) {
  ModelVars vars = bind(tape, model, /*trainable=*/false);
  Var f = features_forward(tape, model, vars, batch, mode);
  switch (branch) {
    case Branch::features: return f;
    case Branch::class_logits: return classifier_forward(tape, vars, f);
    case Branch::domain_logit:
      return discriminator_forward(tape, model, vars, f);
  }
  throw Error("model_forward: bad branch");
}

Var loss_ce(Tape& tape, Var logits, const std::vector<int>& labels) {
  const Tensor& tl = tape.value(logits);
  if (tl.rank() != 2) {
    throw ShapeError("loss_ce: logits shape " + shape_to_string(tl.shape()));
  }
  std::size_t n = tl.shape()[0], k = tl.shape()[1];
  if (labels.size() != n) {
    throw ShapeError("loss_ce: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  }
  std::vector<double> onehot(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw DataError("loss_ce: label " + std::to_string(y) +
                      " out of range [0," + std::to_string(k) + ")");
    }
    onehot[i * k + y] = 1.0;
  }
  Var lp = tape.log_softmax(logits);
  Var picked = tape.mul(lp, tape.constant(Tensor::matrix(n, k, std::move(onehot))));
  return tape.scale(tape.sum(picked), -1.0 / static_cast<double>(n));
}

Var loss_kl(Tape& tape, Var adversarial_logits, Var clean_logits,
            KlDirection direction) {
  const Tensor& ta = tape.value(adversarial_logits);
  const Tensor& tb = tape.value(clean_logits);
  if (!ta.same_shape(tb)) {
    throw ShapeError("loss_kl: logit shapes " + shape_to_string(ta.shape()) +
                     " and " + shape_to_string(tb.shape()) + " differ");
  }
  std::size_t n = ta.shape()[0];
  Var clean = tape.stop_gradient(clean_logits);
  Var lp_clean = tape.log_softmax(clean);
  Var lp_adv = tape.log_softmax(adversarial_logits);
  Var kl_elems;
  if (direction == KlDirection::clean_reference) {
    Var p_clean = tape.exp(lp_clean);
    kl_elems = tape.mul(p_clean, tape.sub(lp_clean, lp_adv));
  } else {
    Var p_adv = tape.exp(lp_adv);
    kl_elems = tape.mul(p_adv, tape.sub(lp_adv, lp_clean));
  }
  return tape.scale(tape.sum(kl_elems), 1.0 / static_cast<double>(n));
}

Var loss_logit_distance(Tape& tape, DistanceKind kind, Var logits_a,
                        Var logits_b) {
  const Tensor& ta = tape.value(logits_a);
  const Tensor& tb = tape.value(logits_b);
  if (!ta.same_shape(tb)) {
    throw ShapeError("loss_logit_distance: logit shapes " +
                     shape_to_string(ta.shape()) + " and " +
                     shape_to_string(tb.shape()) + " differ");
  }
  Var d = tape.sub(logits_a, tape.stop_gradient(logits_b));
  if (kind == DistanceKind::l1) {
    return tape.mean(tape.rowsum(tape.abs(d)));
  }
  Var sq = tape.rowsum(tape.mul(d, d));
  return tape.mean(tape.sqrt(sq));
}

Var loss_domain_bce(Tape& tape, Var logits, const std::vector<int>& labels) {
  const Tensor& tl = tape.value(logits);
  std::size_t n = tl.shape()[0];
  if (tl.rank() != 2 || tl.shape()[1] != 1 || labels.size() != n) {
    throw ShapeError("loss_domain_bce: logits " + shape_to_string(tl.shape()) +
                     " with " + std::to_string(labels.size()) + " labels");
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw DataError("loss_domain_bce: domain label must be 0 or 1");
    }
    y[i] = static_cast<double>(labels[i]);
  }
  // mean of softplus(u) - y*u  ==  mean BCE-with-logits
  Var yv = tape.constant(Tensor::matrix(n, 1, std::move(y)));
  return tape.mean(tape.sub(tape.softplus(logits), tape.mul(yv, logits)));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::size_t n = logits.rows(), k = logits.cols();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace artuda::nn
